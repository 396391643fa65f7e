#include "opaseg/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <zlib.h>

#include "opaseg/errors.hpp"
#include "opaseg/preprocess.hpp"
#include "opaseg/volume_io.hpp"

namespace opaseg {

Rgb group_color(int group) {
    switch (group) {
        case 1: return {0, 190, 60};    // lung: green
        case 2: return {220, 50, 50};   // pure GGO band: red
        case 3: return {150, 60, 200};  // patterned GGO band: purple
        case 4: return {150, 95, 40};   // consolidation band: brown
        case -1: return {60, 90, 220};  // unlabelled: blue
        default: return {0, 0, 0};      // background: no tint
    }
}

std::vector<Rgb> overlay_slice(const Image2<double>& hu_slice, const std::int8_t* labels,
                               double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ValidationError("overlay alpha must be in [0, 1]");
    std::vector<Rgb> out(hu_slice.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double t = std::clamp(
            (hu_slice.data[i] - kLungWindowLowHu) / (kLungWindowHighHu - kLungWindowLowHu),
            0.0, 1.0);
        const double gray = 255.0 * t;
        const int label = labels[i];
        double r = gray, g = gray, b = gray;
        if (label != 0) {
            const Rgb c = group_color(label);
            r = (1.0 - alpha) * gray + alpha * c.r;
            g = (1.0 - alpha) * gray + alpha * c.g;
            b = (1.0 - alpha) * gray + alpha * c.b;
        }
        out[i] = {static_cast<std::uint8_t>(std::lround(r)),
                  static_cast<std::uint8_t>(std::lround(g)),
                  static_cast<std::uint8_t>(std::lround(b))};
    }
    return out;
}

namespace {

void append_u32_be(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

void append_chunk(std::string& out, const char type[4], const std::string& data) {
    append_u32_be(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                           static_cast<uInt>(body.size()));
    append_u32_be(out, static_cast<std::uint32_t>(crc));
}

} // namespace

void write_png_rgb(const std::filesystem::path& path, const std::vector<Rgb>& pixels, int h,
                   int w) {
    if (h < 1 || w < 1 || pixels.size() != static_cast<std::size_t>(h) * w)
        throw ValidationError("PNG pixel buffer does not match its dimensions");

    // Raw scanlines, each with a leading filter-type-0 byte.
    std::string raw;
    raw.reserve(static_cast<std::size_t>(h) * (1 + 3 * static_cast<std::size_t>(w)));
    for (int y = 0; y < h; ++y) {
        raw.push_back('\0');
        for (int x = 0; x < w; ++x) {
            const Rgb& p = pixels[static_cast<std::size_t>(y) * w + x];
            raw.push_back(static_cast<char>(p.r));
            raw.push_back(static_cast<char>(p.g));
            raw.push_back(static_cast<char>(p.b));
        }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::string compressed(bound, '\0');
    const int rc = compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                             reinterpret_cast<const Bytef*>(raw.data()),
                             static_cast<uLong>(raw.size()), 9);
    if (rc != Z_OK) throw IoError("PNG deflate failed with zlib code " + std::to_string(rc));
    compressed.resize(bound);

    std::string ihdr;
    append_u32_be(ihdr, static_cast<std::uint32_t>(w));
    append_u32_be(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // truecolor
    ihdr.push_back(0);   // deflate
    ihdr.push_back(0);   // adaptive filtering
    ihdr.push_back(0);   // no interlace

    std::string png("\x89PNG\r\n\x1a\n", 8);
    append_chunk(png, "IHDR", ihdr);
    append_chunk(png, "IDAT", compressed);
    append_chunk(png, "IEND", "");
    write_file_atomic(path, png);
}

} // namespace opaseg
