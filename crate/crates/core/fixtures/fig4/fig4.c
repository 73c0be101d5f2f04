int global_true = 1;
void caller() {
    assign(1);
}
void assign(int i) {
    int y, z;
    int x = i;
    y = x + 1;

    z = x + 1;
    if (global_true) {
        z = y;
    }
    else {
        z = y + 2;
    }
}
