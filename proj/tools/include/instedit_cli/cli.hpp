// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "instedit/config.hpp"
#include "instedit/errors.hpp"

namespace instedit::cli {

/// 0 success, 2 configuration error, 3 data error, 4 numerical failure.
struct CommandOutcome {
    int exit_code = 0;
    std::filesystem::path report_path;
};

int exit_code_for(ErrorKind kind);

/// "error kind=<config|data|numerical> code=<n> message=<text>" on one line.
std::string error_line(const Error& e);

/// Read-only inversion: stores every inverted latent under <out>/trajectory/.
CommandOutcome cmd_invert(const RunConfig& config);

/// Full edit: <out>/latents/edited.f32, <out>/frames/, <out>/report.json,
/// <out>/timing.json and <out>/config.json.
CommandOutcome cmd_edit(const RunConfig& config);

/// Scores edited frames against the manifest; writes <out>/metrics.json.
CommandOutcome cmd_metrics(const RunConfig& config);

/// Generates the two-instance toy scenario under <out>/scenario, edits it and
/// checks background preservation, per-instance convergence and caption
/// swapping. Writes <out>/demo_report.json; exit 4 if any check fails.
CommandOutcome cmd_demo(const RunConfig& config);

/// Parses `args` (without the program name) and runs one subcommand. Errors
/// are reported on `err` as a single error_line().
CommandOutcome run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace instedit::cli
