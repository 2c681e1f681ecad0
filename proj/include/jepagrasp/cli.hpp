#pragma once

// `jepagrasp` command-line entry point.
//
// Subcommands: gen-data, make-splits, pretrain, finetune, eval, gradcheck,
// export-curves, config-schema. Exit codes: 0 success, 2 configuration
// error, 3 io/ingestion error, 4 numeric divergence, 5 verification failure.
// Failures print one line `error: <category>: <message>` on stderr.

#include <iosfwd>

namespace jepagrasp {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace jepagrasp
