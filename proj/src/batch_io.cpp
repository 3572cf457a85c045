#include "rhedge/batch_io.hpp"

#include "rhedge/numeric.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rhedge {

namespace {
constexpr char kMagic[5] = {'R', 'H', 'P', 'B', '1'};
}

void save_path_batch(const PathBatch& batch, const std::filesystem::path& path,
                     const std::string& sidecar_json) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_path_batch: cannot open " + path.string());
    os.write(kMagic, 5);
    const std::uint64_t n = batch.n_samples;
    const std::uint32_t d = static_cast<std::uint32_t>(batch.n_tracks());
    const std::uint32_t times = static_cast<std::uint32_t>(batch.n_times());
    os.write(reinterpret_cast<const char*>(&n), 8);
    os.write(reinterpret_cast<const char*>(&d), 4);
    os.write(reinterpret_cast<const char*>(&times), 4);
    os.write(reinterpret_cast<const char*>(&batch.dt), 8);
    for (const auto& label : batch.tracks) {
        const std::uint16_t len = static_cast<std::uint16_t>(label.size());
        os.write(reinterpret_cast<const char*>(&len), 2);
        os.write(label.data(), len);
    }
    os.write(reinterpret_cast<const char*>(batch.values.data()),
             static_cast<std::streamsize>(sizeof(double) * batch.values.size()));
    os.write(reinterpret_cast<const char*>(&batch.degenerate_steps), 8);
    if (!os) throw std::runtime_error("save_path_batch: write failed for " + path.string());
    os.close();

    if (!sidecar_json.empty()) {
        std::ofstream side(path.string() + ".json");
        side << sidecar_json << "\n";
    }
}

PathBatch load_path_batch(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_path_batch: cannot open " + path.string());
    char magic[5];
    is.read(magic, 5);
    if (!is || std::string(magic, 5) != std::string(kMagic, 5))
        throw std::runtime_error("load_path_batch: bad magic in " + path.string());

    std::uint64_t n;
    std::uint32_t d, times;
    double dt;
    is.read(reinterpret_cast<char*>(&n), 8);
    is.read(reinterpret_cast<char*>(&d), 4);
    is.read(reinterpret_cast<char*>(&times), 4);
    is.read(reinterpret_cast<char*>(&dt), 8);
    if (!is || n == 0 || d == 0 || times < 2)
        throw std::runtime_error("load_path_batch: bad header in " + path.string());

    std::vector<std::string> tracks(d);
    for (auto& label : tracks) {
        std::uint16_t len;
        is.read(reinterpret_cast<char*>(&len), 2);
        label.resize(len);
        is.read(label.data(), len);
    }

    PathBatch batch = PathBatch::zeros(n, tracks, times - 1, dt);
    is.read(reinterpret_cast<char*>(batch.values.data()),
            static_cast<std::streamsize>(sizeof(double) * batch.values.size()));
    is.read(reinterpret_cast<char*>(&batch.degenerate_steps), 8);
    if (!is) throw std::runtime_error("load_path_batch: truncated file " + path.string());
    return batch;
}

std::string load_batch_sidecar(const std::filesystem::path& path) {
    std::ifstream side(path.string() + ".json");
    if (!side) return "";
    std::ostringstream os;
    os << side.rdbuf();
    return os.str();
}

std::uint64_t hash_batch(const PathBatch& batch) {
    std::ostringstream header;
    header << batch.n_samples << "|" << batch.horizon_steps << "|" << batch.dt;
    for (const auto& t : batch.tracks) header << "|" << t;
    std::uint64_t h = fnv1a64(header.str());
    const auto* bytes = reinterpret_cast<const unsigned char*>(batch.values.data());
    const std::uint64_t payload =
        fnv1a64(std::span<const unsigned char>(bytes, sizeof(double) * batch.values.size()));
    return h ^ (payload + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
}

} // namespace rhedge
