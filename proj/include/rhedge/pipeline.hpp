#pragma once

#include "rhedge/config.hpp"
#include "rhedge/manifest.hpp"

#include <filesystem>

namespace rhedge {

/// simulate -> (partition) -> train/search -> attack/evaluate -> report.
/// Every artifact lands under the output directory with its hash recorded in
/// the returned manifest; stages whose outputs already exist with a matching
/// config hash are reused rather than recomputed.
RunManifest run_pipeline(const ExperimentConfig& config,
                         const std::filesystem::path& output_override = {});

} // namespace rhedge
