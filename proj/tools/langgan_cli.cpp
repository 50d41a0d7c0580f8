// Placeholder during scaffolding; the full CLI lands with the cli module.
#include <cstdio>

int main() {
    std::puts("langgan: not yet wired up");
    return 1;
}
