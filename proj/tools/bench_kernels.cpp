#include "ikp/kernels.hpp"

int main() { return 0; }
