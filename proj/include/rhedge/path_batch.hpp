#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rhedge {

/// N samples x d named tracks x (T+1) time steps of market data, 64-bit,
/// stored row-major (sample, track, time). Immutable once built by a
/// simulator; attacks copy it.
struct PathBatch {
    std::size_t n_samples = 0;
    std::vector<std::string> tracks;
    std::size_t horizon_steps = 0; ///< T; each track holds T+1 values
    double dt = 0.0;               ///< year fraction per step
    std::vector<double> values;    ///< N x d x (T+1)
    std::uint64_t degenerate_steps = 0; ///< GAD diffusion-base clamps

    std::size_t n_tracks() const { return tracks.size(); }
    std::size_t n_times() const { return horizon_steps + 1; }

    double& at(std::size_t n, std::size_t track, std::size_t t) {
        return values[(n * tracks.size() + track) * n_times() + t];
    }
    double at(std::size_t n, std::size_t track, std::size_t t) const {
        return values[(n * tracks.size() + track) * n_times() + t];
    }

    int track_index(std::string_view label) const;   ///< -1 if absent
    int require_track(std::string_view label) const; ///< throws if absent
    bool has_track(std::string_view label) const { return track_index(label) >= 0; }

    Eigen::MatrixXd track_matrix(std::size_t track) const; ///< N x (T+1) copy
    void set_track_matrix(std::size_t track, const Eigen::MatrixXd& m);

    /// Shape/finiteness checks; optionally the shared-initial-value
    /// invariant (simulated batches always satisfy it, concatenated
    /// out-of-distribution pools may not).
    void validate(bool require_constant_initial = true) const;

    static PathBatch zeros(std::size_t n, std::vector<std::string> track_labels,
                           std::size_t horizon, double dt);
};

PathBatch concat_batches(const std::vector<const PathBatch*>& parts);
PathBatch slice_batch(const PathBatch& b, std::size_t begin, std::size_t count);

} // namespace rhedge
