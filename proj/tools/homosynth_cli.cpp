// Command-line front end. Subcommands are filled in as the library lands.
#include <cstdio>

int main() {
  std::puts("homosynth: no subcommands wired up yet");
  return 1;
}
