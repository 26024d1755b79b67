// SPDX-License-Identifier: Apache-2.0
#include "gq/cli.hpp"

int main(int argc, char** argv) { return gq::cli_main(argc, argv); }
