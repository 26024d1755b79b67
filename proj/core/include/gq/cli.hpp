// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace gq {

/// Entry point of the `gqtool` command line. Returns 0 on success, 1 on a
/// usage or configuration error, 2 when a computation fails.
int cli_main(int argc, char** argv);

}  // namespace gq
