// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <iostream>

auto main(int argc, char** argv) -> int
{
    medloop::cli::install_signal_handlers();
    std::vector<std::string> args(argv + 1, argv + argc);
    return medloop::cli::run(args, std::cout, std::cerr);
}
