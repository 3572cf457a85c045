#pragma once

#include "rhedge/path_batch.hpp"

#include <filesystem>
#include <string>

namespace rhedge {

/// Binary dataset container, magic "RHPB1", little-endian: header with
/// N, d, T+1, dt and the track labels, then the row-major float64 payload
/// and the degenerate-step counter. A JSON sidecar (generating spec, seed)
/// is written alongside as <path>.json when provided.
void save_path_batch(const PathBatch& batch, const std::filesystem::path& path,
                     const std::string& sidecar_json = "");

PathBatch load_path_batch(const std::filesystem::path& path);

std::string load_batch_sidecar(const std::filesystem::path& path);

/// Content hash over the shape header and payload, for provenance records.
std::uint64_t hash_batch(const PathBatch& batch);

} // namespace rhedge
