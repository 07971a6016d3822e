// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <iosfwd>
#include <string>
#include <vector>

namespace medloop::cli
{

inline constexpr int exit_ok = 0;
inline constexpr int exit_pipeline_failure = 1;
inline constexpr int exit_usage = 2;

/// Runs one invocation. `args` excludes the program name. Summary paths and tables go to
/// `out`; usage text and diagnostics go to `err`.
auto run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) -> int;

/// Flag raised by SIGINT and SIGTERM once install_signal_handlers has run.
auto cancel_flag() -> std::atomic<bool>&;
void install_signal_handlers();

} // namespace medloop::cli
