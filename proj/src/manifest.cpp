#include "rhedge/manifest.hpp"

#include "rhedge/numeric.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rhedge {

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["tool_version"] = tool_version;
    j["config_hash"] = config_hash;
    if (!resolved_config_json.empty())
        j["resolved_config"] = nlohmann::json::parse(resolved_config_json);
    j["inputs"] = inputs;
    j["artifacts"] = artifacts;
    j["seed_trail"] = seed_trail;
    j["stage_log"] = stage_log;
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j.dump(2);
}

std::string hash_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("hash_file: cannot open " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return hash_hex(fnv1a64(os.str()));
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("write_manifest: cannot open " + tmp.string());
        os << manifest.to_json() << "\n";
    }
    std::filesystem::rename(tmp, path);
}

} // namespace rhedge
