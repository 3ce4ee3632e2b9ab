#include <cstdio>

int main() {
  std::puts("modechoice (placeholder)");
  return 0;
}
