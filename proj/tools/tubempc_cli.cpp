#include <cstdio>
int main() { std::puts("tubempc: placeholder"); return 0; }
