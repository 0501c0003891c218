#pragma once

#include <ostream>

#include "busoff/cli/config.hpp"

namespace busoff::cli {

enum ExitCode : int { kOk = 0, kInvalid = 1, kDiverged = 2 };

// Each command writes its data files into cfg.out_dir plus manifest.json and
// prints a short human summary to `out`.
int cmd_synth(const RunConfig& cfg, std::ostream& out);
int cmd_hitting_time(const RunConfig& cfg, std::ostream& out);
int cmd_rho_min(const RunConfig& cfg, std::ostream& out);
int cmd_simulate(const RunConfig& cfg, std::ostream& out);
int cmd_sweep(const RunConfig& cfg, std::ostream& out);
int cmd_acc(const RunConfig& cfg, std::ostream& out);

/// Full command line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace busoff::cli
