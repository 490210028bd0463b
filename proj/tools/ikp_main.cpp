#include <CLI11.hpp>

#include "ikp/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"ikp: implicit kinematic policy lab"};
  app.require_subcommand(1);
  (void)argc;
  (void)argv;
  return 0;  // subcommands wired up below
}
