#include "opaseg/volume_io.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace opaseg {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp.string() + " -> " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return content;
}

namespace {

fs::path sidecar_path(const fs::path& payload) { return payload.string() + ".json"; }

json load_sidecar(const fs::path& payload, const std::string& expected_kind) {
    const fs::path side = sidecar_path(payload);
    if (!fs::exists(side)) throw IoError("missing sidecar header: " + side.string());
    json j;
    try {
        j = json::parse(read_file(side));
    } catch (const json::exception& e) {
        throw IoError("invalid sidecar JSON " + side.string() + ": " + e.what());
    }
    for (const char* key : {"shape", "spacing_mm", "dtype", "kind"})
        if (!j.contains(key))
            throw IoError("sidecar " + side.string() + " missing key \"" + key + "\"");
    if (j["kind"] != expected_kind)
        throw IoError("sidecar " + side.string() + " kind is \"" +
                      j["kind"].get<std::string>() + "\", expected \"" + expected_kind + "\"");
    return j;
}

void read_geometry(const json& j, const fs::path& side, std::array<int, 3>& shape,
                   std::array<double, 3>& spacing) {
    const auto js = j["shape"];
    const auto jm = j["spacing_mm"];
    if (!js.is_array() || js.size() != 3 || !jm.is_array() || jm.size() != 3)
        throw IoError("sidecar " + side.string() + ": shape and spacing_mm must be 3-arrays");
    for (int i = 0; i < 3; ++i) {
        shape[i] = js[i].get<int>();
        spacing[i] = jm[i].get<double>();
        if (shape[i] < 1) throw IoError("sidecar " + side.string() + ": shape component < 1");
        if (!(spacing[i] > 0.0))
            throw IoError("sidecar " + side.string() + ": spacing_mm component <= 0");
    }
}

std::string sidecar_json(const std::array<int, 3>& shape, const std::array<double, 3>& spacing,
                         const char* dtype, const char* kind) {
    json j;
    j["shape"] = shape;
    j["spacing_mm"] = spacing;
    j["dtype"] = dtype;
    j["kind"] = kind;
    return j.dump(2) + "\n";
}

} // namespace

void save_volume(const CtVolume& volume, const fs::path& path) {
    volume.validate();
    std::string payload;
    payload.resize(volume.hu.size() * 2);
    for (std::size_t i = 0; i < volume.hu.size(); ++i) {
        const auto v = static_cast<std::uint16_t>(volume.hu.data[i]);
        payload[2 * i] = static_cast<char>(v & 0xff);
        payload[2 * i + 1] = static_cast<char>((v >> 8) & 0xff);
    }
    write_file_atomic(path, payload);
    write_file_atomic(sidecar_path(path),
                      sidecar_json(volume.hu.shape, volume.spacing_mm, "i16", "ct"));
}

CtVolume load_volume(const fs::path& path) {
    const json j = load_sidecar(path, "ct");
    std::array<int, 3> shape{};
    std::array<double, 3> spacing{};
    read_geometry(j, sidecar_path(path), shape, spacing);
    if (j["dtype"] != "i16")
        throw IoError("volume " + path.string() + ": dtype must be \"i16\"");

    const std::string payload = read_file(path);
    const std::size_t expected = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2] * 2;
    if (payload.size() != expected)
        throw IoError("volume " + path.string() + ": payload is " +
                      std::to_string(payload.size()) + " bytes, header implies " +
                      std::to_string(expected));

    Grid3<std::int16_t> vox(shape[0], shape[1], shape[2]);
    for (std::size_t i = 0; i < vox.size(); ++i) {
        const auto lo = static_cast<std::uint8_t>(payload[2 * i]);
        const auto hi = static_cast<std::uint8_t>(payload[2 * i + 1]);
        vox.data[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo) |
                                                (static_cast<std::uint16_t>(hi) << 8));
    }
    return CtVolume(std::move(vox), spacing);
}

void save_mask(const LabelMask& mask, const fs::path& path) {
    mask.validate();
    std::string payload;
    payload.resize(mask.labels.size());
    for (std::size_t i = 0; i < mask.labels.size(); ++i)
        payload[i] = static_cast<char>(static_cast<std::uint8_t>(mask.labels.data[i] + 1));
    write_file_atomic(path, payload);
    write_file_atomic(sidecar_path(path),
                      sidecar_json(mask.labels.shape, {1.0, 1.0, 1.0}, "u8+offset", "mask"));
}

LabelMask load_mask(const fs::path& path) {
    const json j = load_sidecar(path, "mask");
    std::array<int, 3> shape{};
    std::array<double, 3> spacing{};
    read_geometry(j, sidecar_path(path), shape, spacing);
    if (j["dtype"] != "u8+offset")
        throw IoError("mask " + path.string() + ": dtype must be \"u8+offset\"");

    const std::string payload = read_file(path);
    const std::size_t expected = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
    if (payload.size() != expected)
        throw IoError("mask " + path.string() + ": payload is " +
                      std::to_string(payload.size()) + " bytes, header implies " +
                      std::to_string(expected));

    Grid3<std::int8_t> labels(shape[0], shape[1], shape[2]);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int stored = static_cast<std::uint8_t>(payload[i]);
        if (stored > 11)
            throw IoError("mask " + path.string() + ": invalid stored class " +
                          std::to_string(stored) + " at voxel index " + std::to_string(i));
        labels.data[i] = static_cast<std::int8_t>(stored - 1);
    }
    return LabelMask(std::move(labels), path.stem().string());
}

} // namespace opaseg
