#pragma once

#include "rhedge/path_batch.hpp"

#include <filesystem>

namespace rhedge {

/// Rolling windows over a dated closing-price series, each rescaled so the
/// window starts at scale_to. A series of length L with window w yields
/// L-w+1 paths of w values (T = w-1). Dates must be strictly increasing and
/// every price present. The batch is meant for evaluation only.
PathBatch import_price_csv(const std::filesystem::path& path, std::size_t window,
                           double scale_to, std::size_t price_column = 1,
                           double dt = 1.0 / 365.0);

} // namespace rhedge
