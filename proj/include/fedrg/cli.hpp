#pragma once

// Command implementations behind the `fedrg` executable. Exit codes: 0
// success, 1 runtime failure, 2 manifest validation failure.

#include <iosfwd>
#include <string>
#include <vector>

#include "fedrg/federation.hpp"
#include "fedrg/manifest.hpp"
#include "fedrg/metrics.hpp"

namespace fedrg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

inline constexpr const char* kOutputDirEnv = "FEDRG_OUTPUT_DIR";

const std::vector<std::string>& ablation_variants();

// Rewrites a base manifest into the named ablation; throws
// std::invalid_argument for an unknown name.
RunManifest apply_ablation(RunManifest base, const std::string& variant);

// Runs the experiment and writes the full output layout under output_dir.
std::vector<metrics::MetricsRecord> run_to_directory(const RunManifest& manifest,
                                                     const std::string& output_dir);

int cmd_validate(const std::string& manifest_path, std::ostream& out, std::ostream& err);
int cmd_run(const std::string& manifest_path, std::ostream& out, std::ostream& err);
int cmd_ablate(const std::string& manifest_path, const std::string& variant, std::ostream& out,
               std::ostream& err);

}  // namespace fedrg::cli
