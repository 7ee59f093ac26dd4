// Copyright 2026 The ctxopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line entry points:
//   train   --config <file> [--seed N] [--out <run_dir>] [--resume <checkpoint>]
//   eval    <playbook.json> <tasks.json> [--config <file>] [--seed N]
//   inspect <checkpoint_dir>
//   metrics <run_dir> [--window W]
//   diff    <playbook_a.json> <playbook_b.json>
//
// Exit codes: 0 success, 1 runtime error, 2 usage error, 3 config error.
// Failures print one JSON line {"error": kind, "message": text} on stderr.

#ifndef CTXOPT_CLI_HPP_
#define CTXOPT_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "ctxopt/config.hpp"

namespace ctxopt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

struct Environment {
  TransportFactory transport;  // empty: model roles are rejected
  std::ostream* out = nullptr;  // default std::cout
  std::ostream* err = nullptr;  // default std::cerr
};

// args[0] is the program name.
int dispatch(const std::vector<std::string>& args, const Environment& env = {});

}  // namespace ctxopt::cli

#endif  // CTXOPT_CLI_HPP_
