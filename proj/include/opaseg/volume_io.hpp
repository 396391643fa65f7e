#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "opaseg/volume.hpp"

namespace opaseg {

// On-disk formats. A volume or mask is a flat little-endian payload plus a
// JSON sidecar at "<path>.json" with keys exactly:
//   shape       [depth, height, width]
//   spacing_mm  [z, y, x]
//   dtype       "i16" for CT, "u8+offset" for masks (stored value = id + 1)
//   kind        "ct" | "mask"

void save_volume(const CtVolume& volume, const std::filesystem::path& path);
CtVolume load_volume(const std::filesystem::path& path);

void save_mask(const LabelMask& mask, const std::filesystem::path& path);
LabelMask load_mask(const std::filesystem::path& path);

// Atomic file write: content goes to "<path>.tmp", then a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

} // namespace opaseg
