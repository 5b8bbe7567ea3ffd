#include <csignal>
#include <iostream>

#include "commands.hpp"

namespace {
void on_sigint(int) { ren::cli::stop_requested.store(true); }
}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_sigint);
  return ren::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
