static void acl_read_cb(int size, void *priv)
{
    struct data *buf = priv;
    if (size > 0) {
        buf->flag += size;
        buf = NULL;
    }
}

static void bluetooth_status_cb(int status)
{
    switch (status) {
    case 1:
        printf("USB device attached");
        break;
    case 2:
        printf("USB device detached");
        break;
    case 3:
        printf("USB device reset");
        break;
    case 4:
        printf("USB device configured");
        /* Start reading */
        acl_read_cb(0, NULL);
        break;
    case 5:
        printf("USB device suspended");
        break;
    case 6:
        printf("USB device resumed");
        break;
    case 7:
        printf("USB address set");
        break;
    case 8:
        printf("USB interface ready");
        break;
    case 9:
        printf("USB transfer error");
        break;
    case 10:
        printf("USB stall");
        break;
    }
}
