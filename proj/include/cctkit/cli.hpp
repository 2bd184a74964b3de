#pragma once
// Command-line front end: simulate / sens / cct / bisect / sweep / case
// subcommands over the engine APIs. Exit codes: 0 stable (or plain success),
// 2 unstable verdict, 1 error.

#include <string>
#include <vector>

namespace cctkit::cli {

constexpr int kExitStable = 0;
constexpr int kExitError = 1;
constexpr int kExitUnstable = 2;

int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace cctkit::cli
