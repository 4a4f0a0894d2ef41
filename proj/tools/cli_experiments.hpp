#pragma once

#include "mscg/config.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace mscg::cli {

// Settings shared by every subcommand; flags override the [run] table.
struct RunContext {
  std::uint64_t seed = 2026;
  int workers = 1;
  std::filesystem::path out = ".";
};

// Resolves seed/workers/out from flags (non-null wins) and [run] keys, and
// creates the output directory.
RunContext run_context(const ConfigTree& cfg, const std::uint64_t* seed_flag,
                       const int* workers_flag, const std::string* out_flag);

// Subcommand bodies. Each consumes its config keys, rejects leftovers, and
// writes CSV/text artifacts into the output directory. Errors surface as
// ConfigError / SolverError for the caller to map to exit codes.
void cmd_convergence(const ConfigTree& cfg, const RunContext& rc);
void cmd_simulate(const ConfigTree& cfg, const RunContext& rc);
void cmd_rb_train(const ConfigTree& cfg, const RunContext& rc);
void cmd_uq(const ConfigTree& cfg, const RunContext& rc);
void cmd_optimize(const ConfigTree& cfg, const RunContext& rc);

} // namespace mscg::cli
