#include "opaseg/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include "json.hpp"

#include "opaseg/rng.hpp"
#include "opaseg/volume_io.hpp"

using nlohmann::json;

namespace opaseg {

std::string config_hash_hex(const std::string& config_bytes) {
    const std::uint64_t h = fnv1a64(config_bytes.data(), config_bytes.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string iso8601_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(RunManifest manifest, const std::filesystem::path& out_dir) {
    if (manifest.created_utc.empty()) manifest.created_utc = iso8601_utc_now();
    json j;
    j["command"] = manifest.command;
    j["inputs"] = manifest.inputs;
    j["config_hash"] = manifest.config_hash;
    j["seed"] = manifest.seed;
    j["version"] = manifest.version;
    j["created_utc"] = manifest.created_utc;
    write_file_atomic(out_dir / "manifest.json", j.dump(2) + "\n");
}

} // namespace opaseg
