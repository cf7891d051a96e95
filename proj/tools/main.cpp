#include <cstdio>

int main() {
  std::puts("motiongen: command set not wired up yet");
  return 1;
}
