// SPDX-License-Identifier: Apache-2.0
#include "fdm/cli.hpp"

int main(int argc, char** argv) { return fdm::cli::run(argc, argv); }
