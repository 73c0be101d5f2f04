const int GLOBAL_CONST_TRUE = 1;
const int GLOBAL_CONST_FALSE = 0;
