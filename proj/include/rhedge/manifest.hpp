#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rhedge {

inline constexpr const char* kToolVersion = "0.1.0";

/// Provenance record tying every artifact of a run to the resolved config
/// and seeds that produced it. Artifact hashes are deterministic across
/// reruns; wall clock and stage log are informational.
struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string config_hash;
    std::string resolved_config_json;
    std::map<std::string, std::string> inputs;    ///< path -> content hash
    std::map<std::string, std::string> artifacts; ///< path -> content hash
    std::vector<std::string> seed_trail;
    std::vector<std::string> stage_log;
    double wall_clock_seconds = 0.0;

    std::string to_json() const;
};

std::string hash_file(const std::filesystem::path& path);

/// Atomic write (write to a temp file, then rename).
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

} // namespace rhedge
