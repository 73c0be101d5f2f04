int limit = 8;
int buffer[16];

int clamp(int value, int bound)
{
    if (value > bound) {
        return bound;
    }
    return value;
}

void fill(int count)
{
    int i;
    int n = clamp(count, limit);
    for (i = 0; i < n; i++) {
        switch (i) {
        case 0:
            buffer[i] = 1;
            break;
        case 1:
            buffer[i] = 2;
            break;
        default:
            buffer[i] = buffer[i - 1] + buffer[i - 2];
        }
    }
}
