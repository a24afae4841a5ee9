#pragma once

#include <string>
#include <vector>

#include "derflex/config.hpp"

namespace derflex {

enum ExitCode { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitInfeasible = 3, kExitData = 4 };

/// The AGC dataset named by the config (file or synthetic year).
AgcTrace load_signal_source(const ExperimentConfig& config);

/// The six representative hours, restricted to `signals.use`, as 1 MW-scaled
/// k-hour references. Writes nothing.
std::vector<ReferenceSignal> representative_signals(const ExperimentConfig& config, Selection* selection = nullptr);

/// Runs one subcommand with a resolved config; writes outputs and
/// manifest.json into config.out. Throws on error.
void run_subcommand(const std::string& name, const ExperimentConfig& config);

/// Entry point of the `derflex` executable; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace derflex
