#pragma once

#include "rhedge/hedge_net.hpp"
#include "rhedge/optimizer.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace rhedge {

/// Versioned binary checkpoint (magic "RHNN1", little-endian): architecture,
/// layout, parameter tensors, running statistics, omega, optionally the
/// optimizer state. A JSON manifest (config hash, seed, epoch, ...) is
/// written alongside as <path>.json when provided.
void save_checkpoint(const HedgeNetwork& net, const OptimizerState* opt,
                     const std::filesystem::path& path,
                     const std::string& manifest_json = "");

struct Checkpoint {
    HedgeNetwork net;
    std::optional<OptimizerState> optimizer;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Reads the sidecar manifest if present; empty string otherwise.
std::string load_checkpoint_manifest(const std::filesystem::path& path);

} // namespace rhedge
