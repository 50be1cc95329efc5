#pragma once

#include "levsq/config.hpp"

namespace levsq {

// Subcommand bodies; each renders its full output in memory and writes it
// to rc.out (stdout when empty) only on success. Errors surface as
// exceptions: config_error for input problems, any other levsq::error for
// numerical/physics failures.

// Rate table of every decoherence channel for the configured experiment.
void cmd_budget(const RunConfig& rc);

// Squeezing versus decoherence-to-frequency ratio, per cycle count.
void cmd_sweep_decoherence(const RunConfig& rc);

// Squeezing and absolute momentum width versus trap-frequency ratio,
// per axis and cycle count.
void cmd_sweep_frequency(const RunConfig& rc);

// Trap-frequency ratio and recoil ratios versus numerical aperture.
void cmd_sweep_na(const RunConfig& rc);

// One full protocol run (or a stochastic ensemble) with trajectory CSV
// and sensing summary.
void cmd_run(const RunConfig& rc);

}  // namespace levsq
