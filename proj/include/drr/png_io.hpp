#pragma once

#include <png.h>

#include <bit>
#include <cstdint>
#include <functional>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "drr/errors.hpp"
#include "drr/render.hpp"

namespace drr {

/// Writes bytes to `<path>.tmp-<thread>` and renames over `path`.
inline void atomic_write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp-" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move output into place at '" + path.string() + "'");
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string encode_png_bytes(const GrayImage& image) {
    if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height)
        throw ContractViolation("gray image size does not match its pixel buffer");
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
        throw IoError(std::string("png encode failed: ") + png.message);
    std::string bytes(size, '\0');
    if (!png_image_write_to_memory(&png, bytes.data(), &size, 0, image.pixels.data(), 0, nullptr))
        throw IoError(std::string("png encode failed: ") + png.message);
    bytes.resize(size);
    return bytes;
}

/// 8-bit grayscale PNG, no alpha, written atomically.
inline void encode_png(const GrayImage& image, const std::filesystem::path& path) {
    atomic_write_file(path, encode_png_bytes(image));
}

inline GrayImage decode_png(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
        throw FormatError("'" + path.string() + "': " + png.message);
    png.format = PNG_FORMAT_GRAY;
    GrayImage out{png.width, png.height, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(png))};
    if (!png_image_finish_read(&png, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&png);
        throw FormatError("'" + path.string() + "': " + png.message);
    }
    return out;
}

/// Raw float32 little-endian energy dump, row-major with u fastest.
inline void write_energy_dump(const EnergyImage& img, const std::filesystem::path& path) {
    std::string bytes;
    bytes.reserve(img.energies.size() * 4);
    for (double e : img.energies) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(e));
        for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
    }
    atomic_write_file(path, bytes);
}

}  // namespace drr
