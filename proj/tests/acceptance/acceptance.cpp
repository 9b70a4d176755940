#include <iostream>

int main() {
    std::cerr << "acceptance suite not yet implemented\n";
    return 1;
}
