#include "rhedge/path_batch.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rhedge {

PathBatch PathBatch::zeros(std::size_t n, std::vector<std::string> track_labels,
                           std::size_t horizon, double dt_) {
    if (n < 1 || track_labels.empty() || horizon < 1)
        throw std::invalid_argument("PathBatch: need n >= 1, d >= 1, T >= 1");
    PathBatch b;
    b.n_samples = n;
    b.tracks = std::move(track_labels);
    b.horizon_steps = horizon;
    b.dt = dt_;
    b.values.assign(n * b.tracks.size() * (horizon + 1), 0.0);
    return b;
}

int PathBatch::track_index(std::string_view label) const {
    for (std::size_t i = 0; i < tracks.size(); ++i)
        if (tracks[i] == label) return static_cast<int>(i);
    return -1;
}

int PathBatch::require_track(std::string_view label) const {
    const int i = track_index(label);
    if (i < 0) throw std::invalid_argument("PathBatch: missing track '" + std::string(label) + "'");
    return i;
}

Eigen::MatrixXd PathBatch::track_matrix(std::size_t track) const {
    Eigen::MatrixXd m(n_samples, n_times());
    for (std::size_t n = 0; n < n_samples; ++n)
        for (std::size_t t = 0; t < n_times(); ++t) m(n, t) = at(n, track, t);
    return m;
}

void PathBatch::set_track_matrix(std::size_t track, const Eigen::MatrixXd& m) {
    if (m.rows() != static_cast<Eigen::Index>(n_samples) ||
        m.cols() != static_cast<Eigen::Index>(n_times()))
        throw std::invalid_argument("PathBatch: track matrix shape mismatch");
    for (std::size_t n = 0; n < n_samples; ++n)
        for (std::size_t t = 0; t < n_times(); ++t) at(n, track, t) = m(n, t);
}

void PathBatch::validate(bool require_constant_initial) const {
    if (n_samples < 1 || tracks.empty() || horizon_steps < 1)
        throw std::invalid_argument("PathBatch: empty shape");
    if (values.size() != n_samples * tracks.size() * n_times())
        throw std::invalid_argument("PathBatch: value buffer size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i])) {
            std::ostringstream os;
            os << "PathBatch: non-finite value at flat index " << i;
            throw std::runtime_error(os.str());
        }
    if (require_constant_initial) {
        for (std::size_t k = 0; k < tracks.size(); ++k) {
            const double first = at(0, k, 0);
            for (std::size_t n = 1; n < n_samples; ++n)
                if (at(n, k, 0) != first)
                    throw std::runtime_error("PathBatch: initial column of track '" + tracks[k] +
                                             "' is not constant across samples");
        }
    }
}

PathBatch concat_batches(const std::vector<const PathBatch*>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_batches: no parts");
    const PathBatch& head = *parts.front();
    std::size_t total = 0;
    for (const PathBatch* p : parts) {
        if (p->tracks != head.tracks || p->horizon_steps != head.horizon_steps)
            throw std::invalid_argument("concat_batches: incompatible shapes");
        total += p->n_samples;
    }
    PathBatch out = PathBatch::zeros(total, head.tracks, head.horizon_steps, head.dt);
    std::size_t row = 0;
    const std::size_t stride = head.tracks.size() * head.n_times();
    for (const PathBatch* p : parts) {
        std::copy(p->values.begin(), p->values.end(), out.values.begin() + row * stride);
        out.degenerate_steps += p->degenerate_steps;
        row += p->n_samples;
    }
    return out;
}

PathBatch slice_batch(const PathBatch& b, std::size_t begin, std::size_t count) {
    if (begin + count > b.n_samples) throw std::invalid_argument("slice_batch: out of range");
    if (count == 0) throw std::invalid_argument("slice_batch: empty slice");
    PathBatch out = PathBatch::zeros(count, b.tracks, b.horizon_steps, b.dt);
    const std::size_t stride = b.tracks.size() * b.n_times();
    std::copy(b.values.begin() + begin * stride, b.values.begin() + (begin + count) * stride,
              out.values.begin());
    return out;
}

} // namespace rhedge
