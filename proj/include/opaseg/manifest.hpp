#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace opaseg {

constexpr const char* kToolkitVersion = "0.1.0";

// Provenance record written once per output directory. Payload outputs are
// deterministic; the manifest carries the only timestamp.
struct RunManifest {
    std::string command;
    std::vector<std::string> inputs;
    std::string config_hash; // 16 hex digits over the exact config bytes
    std::uint64_t seed = 0;
    std::string version = kToolkitVersion;
    std::string created_utc; // ISO-8601, filled by write_manifest when empty
};

// FNV-1a over the raw bytes, rendered as fixed-width hex. Stable across
// platforms for identical config bytes.
std::string config_hash_hex(const std::string& config_bytes);

std::string iso8601_utc_now();

// Serializes to out_dir / "manifest.json" (atomic write).
void write_manifest(RunManifest manifest, const std::filesystem::path& out_dir);

} // namespace opaseg
