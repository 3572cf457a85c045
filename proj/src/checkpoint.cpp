#include "rhedge/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rhedge {

namespace {

constexpr char kMagic[5] = {'R', 'H', 'N', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_u8(std::ostream& os, std::uint8_t v) { os.write(reinterpret_cast<const char*>(&v), 1); }

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
    put_u32(os, static_cast<std::uint32_t>(m.rows()));
    put_u32(os, static_cast<std::uint32_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * m.size()));
}

void put_vector(std::ostream& os, const Eigen::VectorXd& v) {
    put_u32(os, static_cast<std::uint32_t>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(sizeof(double) * v.size()));
}

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double get_f64(std::istream& is) {
    double v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::uint8_t get_u8(std::istream& is) {
    std::uint8_t v;
    is.read(reinterpret_cast<char*>(&v), 1);
    return v;
}
std::string get_string(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}
Eigen::MatrixXd get_matrix(std::istream& is) {
    const std::uint32_t rows = get_u32(is);
    const std::uint32_t cols = get_u32(is);
    Eigen::MatrixXd m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    return m;
}
Eigen::VectorXd get_vector(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    Eigen::VectorXd v(n);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
    return v;
}

void put_block(std::ostream& os, const BlockParams& b) {
    put_matrix(os, b.w1);
    put_matrix(os, b.w2);
    put_matrix(os, b.w3);
    put_vector(os, b.b1);
    put_vector(os, b.b2);
    put_vector(os, b.b3);
    put_vector(os, b.gamma1);
    put_vector(os, b.beta1);
    put_vector(os, b.gamma2);
    put_vector(os, b.beta2);
}

BlockParams get_block(std::istream& is) {
    BlockParams b;
    b.w1 = get_matrix(is);
    b.w2 = get_matrix(is);
    b.w3 = get_matrix(is);
    b.b1 = get_vector(is);
    b.b2 = get_vector(is);
    b.b3 = get_vector(is);
    b.gamma1 = get_vector(is);
    b.beta1 = get_vector(is);
    b.gamma2 = get_vector(is);
    b.beta2 = get_vector(is);
    return b;
}

} // namespace

void save_checkpoint(const HedgeNetwork& net, const OptimizerState* opt,
                     const std::filesystem::path& path, const std::string& manifest_json) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    os.write(kMagic, 5);
    put_u32(os, kVersion);
    put_u8(os, net.arch == Architecture::NetRec ? 1 : 0);
    put_u32(os, static_cast<std::uint32_t>(net.horizon));
    put_u32(os, static_cast<std::uint32_t>(net.n_instruments));
    put_u32(os, static_cast<std::uint32_t>(net.hidden));
    put_f64(os, net.bn_eps);
    put_f64(os, net.bn_momentum);
    put_f64(os, net.omega);

    put_u32(os, static_cast<std::uint32_t>(net.layout.feature_tracks.size()));
    for (const auto& s : net.layout.feature_tracks) put_string(os, s);
    put_u32(os, static_cast<std::uint32_t>(net.layout.instrument_tracks.size()));
    for (const auto& s : net.layout.instrument_tracks) put_string(os, s);
    put_u8(os, net.layout.vswap ? 1 : 0);
    if (net.layout.vswap) {
        put_f64(os, net.layout.vswap->mean_reversion);
        put_f64(os, net.layout.vswap->long_run_var);
        put_f64(os, net.layout.vswap->maturity_years);
    }

    for (const auto& b : net.blocks) put_block(os, b);
    for (const auto& s : net.stats) {
        put_vector(os, s.mean1);
        put_vector(os, s.var1);
        put_vector(os, s.mean2);
        put_vector(os, s.var2);
    }

    put_u8(os, opt ? 1 : 0);
    if (opt) {
        for (const auto& b : opt->m.blocks) put_block(os, b);
        for (const auto& b : opt->v.blocks) put_block(os, b);
        put_f64(os, opt->m_omega);
        put_f64(os, opt->v_omega);
        put_u64(os, static_cast<std::uint64_t>(opt->step));
        put_f64(os, opt->schedule.initial);
        put_f64(os, opt->schedule.decay_factor);
        put_u32(os, static_cast<std::uint32_t>(opt->schedule.decay_interval));
        put_f64(os, opt->beta1);
        put_f64(os, opt->beta2);
        put_f64(os, opt->eps);
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
    os.close();

    if (!manifest_json.empty()) {
        std::ofstream ms(path.string() + ".json");
        ms << manifest_json << "\n";
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    char magic[5];
    is.read(magic, 5);
    if (!is || std::string(magic, 5) != std::string(kMagic, 5))
        throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
    const std::uint32_t version = get_u32(is);
    if (version != kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version");

    Checkpoint ck;
    HedgeNetwork& net = ck.net;
    net.arch = get_u8(is) ? Architecture::NetRec : Architecture::NetSim;
    net.horizon = static_cast<int>(get_u32(is));
    net.n_instruments = static_cast<int>(get_u32(is));
    net.hidden = static_cast<int>(get_u32(is));
    net.bn_eps = get_f64(is);
    net.bn_momentum = get_f64(is);
    net.omega = get_f64(is);

    const std::uint32_t nf = get_u32(is);
    for (std::uint32_t i = 0; i < nf; ++i) net.layout.feature_tracks.push_back(get_string(is));
    const std::uint32_t ni = get_u32(is);
    for (std::uint32_t i = 0; i < ni; ++i) net.layout.instrument_tracks.push_back(get_string(is));
    if (get_u8(is)) {
        VswapLink link;
        link.mean_reversion = get_f64(is);
        link.long_run_var = get_f64(is);
        link.maturity_years = get_f64(is);
        net.layout.vswap = link;
    }

    net.blocks.resize(net.horizon);
    for (auto& b : net.blocks) b = get_block(is);
    net.stats.resize(net.horizon);
    for (auto& s : net.stats) {
        s.mean1 = get_vector(is);
        s.var1 = get_vector(is);
        s.mean2 = get_vector(is);
        s.var2 = get_vector(is);
    }

    if (get_u8(is)) {
        OptimizerState opt;
        opt.m.blocks.resize(net.horizon);
        for (auto& b : opt.m.blocks) b = get_block(is);
        opt.v.blocks.resize(net.horizon);
        for (auto& b : opt.v.blocks) b = get_block(is);
        opt.m_omega = get_f64(is);
        opt.v_omega = get_f64(is);
        opt.step = static_cast<long>(get_u64(is));
        opt.schedule.initial = get_f64(is);
        opt.schedule.decay_factor = get_f64(is);
        opt.schedule.decay_interval = static_cast<int>(get_u32(is));
        opt.beta1 = get_f64(is);
        opt.beta2 = get_f64(is);
        opt.eps = get_f64(is);
        ck.optimizer = std::move(opt);
    }
    if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path.string());
    return ck;
}

std::string load_checkpoint_manifest(const std::filesystem::path& path) {
    std::ifstream ms(path.string() + ".json");
    if (!ms) return "";
    std::ostringstream os;
    os << ms.rdbuf();
    return os.str();
}

} // namespace rhedge
