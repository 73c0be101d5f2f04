int *lookup(int key);

int read_value(int key)
{
    int *p = lookup(key);
    if (p == 0) {
        return -1;
    }
    return *p;
}
