#pragma once

// NIfTI-1 reader (read-only subset) and the raw fixture format.
//
// World coordinates follow the LPS convention used by ITK: the RAS affine stored
// in a NIfTI header has its first two rows negated on load.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "drr/errors.hpp"
#include "drr/vec.hpp"
#include "drr/volume.hpp"

namespace drr {

namespace nifti {

inline constexpr std::int32_t kHeaderSize = 348;
inline constexpr std::int16_t kDtInt16 = 4;
inline constexpr std::int16_t kDtFloat32 = 16;
inline constexpr std::int16_t kDtFloat64 = 64;

// Byte offsets into the 348-byte NIfTI-1 header.
inline constexpr std::size_t kOffDim = 40;
inline constexpr std::size_t kOffDatatype = 70;
inline constexpr std::size_t kOffBitpix = 72;
inline constexpr std::size_t kOffPixdim = 76;
inline constexpr std::size_t kOffVoxOffset = 108;
inline constexpr std::size_t kOffSclSlope = 112;
inline constexpr std::size_t kOffSclInter = 116;
inline constexpr std::size_t kOffQformCode = 252;
inline constexpr std::size_t kOffSformCode = 254;
inline constexpr std::size_t kOffQuatern = 256;
inline constexpr std::size_t kOffQoffset = 268;
inline constexpr std::size_t kOffSrow = 280;
inline constexpr std::size_t kOffMagic = 344;

}  // namespace nifti

namespace detail {

template <typename T>
T byteswap(T v) {
    std::array<unsigned char, sizeof(T)> raw{};
    std::memcpy(raw.data(), &v, sizeof(T));
    std::reverse(raw.begin(), raw.end());
    std::memcpy(&v, raw.data(), sizeof(T));
    return v;
}

/// Reads a whole file, transparently inflating gzip content.
inline std::vector<unsigned char> read_maybe_gzipped(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec))
        throw IoError("cannot open '" + path.string() + "': no such file");
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (f == nullptr) throw IoError("cannot open '" + path.string() + "'");
    std::vector<unsigned char> out;
    std::array<unsigned char, 1 << 16> buf{};
    for (;;) {
        const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
        if (n < 0) {
            int errnum = 0;
            const std::string msg = gzerror(f, &errnum);
            gzclose(f);
            throw FormatError("'" + path.string() + "': gzip stream error: " + msg);
        }
        if (n == 0) break;
        out.insert(out.end(), buf.begin(), buf.begin() + n);
    }
    gzclose(f);
    return out;
}

class ByteReader {
public:
    ByteReader(std::span<const unsigned char> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

    template <typename T>
    T get(std::size_t offset) const {
        std::array<unsigned char, sizeof(T)> raw{};
        std::memcpy(raw.data(), bytes_.data() + offset, sizeof(T));
        if (swap_) std::reverse(raw.begin(), raw.end());
        T v;
        std::memcpy(&v, raw.data(), sizeof(T));
        return v;
    }

private:
    std::span<const unsigned char> bytes_;
    bool swap_;
};

inline Mat3 quaternion_to_rotation(double b, double c, double d) {
    double a = 1.0 - (b * b + c * c + d * d);
    if (a < 1e-7) {
        // Header stores a 180 degree rotation; renormalise (b, c, d).
        a = 1.0 / std::sqrt(b * b + c * c + d * d);
        b *= a;
        c *= a;
        d *= a;
        a = 0.0;
    } else {
        a = std::sqrt(a);
    }
    Mat3 r;
    r.m = {a * a + b * b - c * c - d * d, 2 * (b * c - a * d),           2 * (b * d + a * c),
           2 * (b * c + a * d),           a * a + c * c - b * b - d * d, 2 * (c * d - a * b),
           2 * (b * d - a * c),           2 * (c * d + a * b),           a * a + d * d - c * c - b * b};
    return r;
}

}  // namespace detail

/// Loads a NIfTI-1 volume (optionally gzip-compressed) and converts it to HU.
template <typename Scalar = float>
BasicCtVolume<Scalar> load_nifti(const std::filesystem::path& path) {
    const std::vector<unsigned char> bytes = detail::read_maybe_gzipped(path);
    const std::string where = "'" + path.string() + "': ";
    if (bytes.size() < static_cast<std::size_t>(nifti::kHeaderSize))
        throw FormatError(where + "sizeof_hdr: file shorter than the 348-byte header");

    std::int32_t sizeof_hdr = 0;
    std::memcpy(&sizeof_hdr, bytes.data(), 4);
    bool swap = false;
    if (sizeof_hdr != nifti::kHeaderSize) {
        if (detail::byteswap(sizeof_hdr) != nifti::kHeaderSize)
            throw FormatError(where + "sizeof_hdr: expected 348, found " + std::to_string(sizeof_hdr));
        swap = true;
    }
    const detail::ByteReader hdr(bytes, swap);

    const char* magic = reinterpret_cast<const char*>(bytes.data() + nifti::kOffMagic);
    const bool single_file = std::memcmp(magic, "n+1\0", 4) == 0;
    const bool pair_file = std::memcmp(magic, "ni1\0", 4) == 0;
    if (!single_file && !pair_file) throw FormatError(where + "magic: expected \"n+1\" or \"ni1\"");

    const auto ndim = hdr.get<std::int16_t>(nifti::kOffDim);
    if (ndim < 1 || ndim > 7) throw FormatError(where + "dim[0]: out of range 1..7 (" + std::to_string(ndim) + ")");
    Dims3 dims{1, 1, 1};
    for (int a = 1; a <= ndim; ++a) {
        const auto d = hdr.get<std::int16_t>(nifti::kOffDim + 2 * static_cast<std::size_t>(a));
        if (d < 1) throw FormatError(where + "dim[" + std::to_string(a) + "]: must be >= 1");
        if (a <= 3) {
            dims[static_cast<std::size_t>(a - 1)] = static_cast<std::size_t>(d);
        } else if (d != 1) {
            throw UnsupportedFormatError(where + "dim[" + std::to_string(a) + "] = " + std::to_string(d) +
                                         ": only 3D volumes (trailing dims of size 1) are supported");
        }
    }

    const auto datatype = hdr.get<std::int16_t>(nifti::kOffDatatype);
    std::size_t bytes_per_voxel = 0;
    switch (datatype) {
        case nifti::kDtInt16: bytes_per_voxel = 2; break;
        case nifti::kDtFloat32: bytes_per_voxel = 4; break;
        case nifti::kDtFloat64: bytes_per_voxel = 8; break;
        default:
            throw UnsupportedFormatError(where + "datatype " + std::to_string(datatype) +
                                         " is not supported (int16, float32, float64 only)");
    }
    const auto bitpix = hdr.get<std::int16_t>(nifti::kOffBitpix);
    if (bitpix != 0 && static_cast<std::size_t>(bitpix) != 8 * bytes_per_voxel)
        throw FormatError(where + "bitpix: " + std::to_string(bitpix) + " disagrees with datatype");

    Vec3 spacing;
    for (std::size_t a = 0; a < 3; ++a) {
        const double p = hdr.get<float>(nifti::kOffPixdim + 4 * (a + 1));
        if (!(p > 0.0) || !std::isfinite(p)) throw FormatError(where + "pixdim[" + std::to_string(a + 1) + "]: must be > 0");
        spacing[a] = p;
    }

    double slope = hdr.get<float>(nifti::kOffSclSlope);
    double intercept = hdr.get<float>(nifti::kOffSclInter);
    if (slope == 0.0 || !std::isfinite(slope)) {
        slope = 1.0;
        intercept = 0.0;
    }
    if (!std::isfinite(intercept)) throw FormatError(where + "scl_inter: non-finite");
    const HounsfieldScaling scaling(slope, intercept);

    // RAS affine: columns are direction * spacing, plus the centre of voxel 0.
    Mat3 ras_dir;
    Vec3 ras_origin;
    const auto sform_code = hdr.get<std::int16_t>(nifti::kOffSformCode);
    const auto qform_code = hdr.get<std::int16_t>(nifti::kOffQformCode);
    if (sform_code > 0) {
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = hdr.get<float>(nifti::kOffSrow + 16 * r + 4 * c);
                if (!std::isfinite(v)) throw FormatError(where + "srow: non-finite entry");
                ras_dir(r, c) = v;
            }
            ras_origin[r] = hdr.get<float>(nifti::kOffSrow + 16 * r + 12);
        }
        for (std::size_t c = 0; c < 3; ++c) {
            const double len = norm(ras_dir.column(c));
            if (!(len > 0.0)) throw FormatError(where + "srow: degenerate column " + std::to_string(c));
            for (std::size_t r = 0; r < 3; ++r) ras_dir(r, c) /= len;
        }
    } else if (qform_code > 0) {
        const double b = hdr.get<float>(nifti::kOffQuatern);
        const double c = hdr.get<float>(nifti::kOffQuatern + 4);
        const double d = hdr.get<float>(nifti::kOffQuatern + 8);
        if (!std::isfinite(b) || !std::isfinite(c) || !std::isfinite(d))
            throw FormatError(where + "quatern: non-finite");
        ras_dir = detail::quaternion_to_rotation(b, c, d);
        const double qfac = hdr.get<float>(nifti::kOffPixdim) < 0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < 3; ++r) ras_dir(r, 2) *= qfac;
        for (std::size_t a = 0; a < 3; ++a) ras_origin[a] = hdr.get<float>(nifti::kOffQoffset + 4 * a);
    } else {
        ras_dir = Mat3::identity();
        ras_origin = {};
    }
    if (!is_finite(ras_origin)) throw FormatError(where + "origin: non-finite");

    Mat3 direction = ras_dir;
    for (std::size_t c = 0; c < 3; ++c) {
        direction(0, c) = -direction(0, c);
        direction(1, c) = -direction(1, c);
    }
    const Vec3 origin{-ras_origin.x, -ras_origin.y, ras_origin.z};
    Mat3 snapped;
    try {
        snapped = detail::snap_direction(direction);
    } catch (const UnsupportedFormatError& e) {
        throw UnsupportedFormatError(where + e.what());
    } catch (const ContractViolation& e) {
        throw FormatError(where + "orientation: " + e.what());
    }
    const Vec3 corner = origin - snapped * (0.5 * spacing);

    std::span<const unsigned char> payload;
    std::vector<unsigned char> image_bytes;
    if (single_file) {
        const double vox_offset = hdr.get<float>(nifti::kOffVoxOffset);
        if (!(vox_offset >= 352.0) || !std::isfinite(vox_offset))
            throw FormatError(where + "vox_offset: must be >= 352 for single-file NIfTI");
        const auto off = static_cast<std::size_t>(vox_offset);
        if (off > bytes.size()) throw FormatError(where + "vox_offset: beyond end of file");
        payload = std::span<const unsigned char>(bytes).subspan(off);
    } else {
        std::filesystem::path img = path;
        const bool gz = img.extension() == ".gz";
        if (gz) img.replace_extension();
        img.replace_extension(gz ? ".img.gz" : ".img");
        image_bytes = detail::read_maybe_gzipped(img);
        payload = image_bytes;
    }

    const std::size_t count = dims[0] * dims[1] * dims[2];
    if (payload.size() < count * bytes_per_voxel)
        throw FormatError(where + "data: truncated (" + std::to_string(payload.size()) + " bytes, need " +
                          std::to_string(count * bytes_per_voxel) + ")");

    const detail::ByteReader data(payload, swap);
    std::vector<Scalar> voxels(count);
    for (std::size_t n = 0; n < count; ++n) {
        double stored = 0.0;
        switch (datatype) {
            case nifti::kDtInt16: stored = data.get<std::int16_t>(n * 2); break;
            case nifti::kDtFloat32: stored = data.get<float>(n * 4); break;
            default: stored = data.get<double>(n * 8); break;
        }
        const auto hu = static_cast<Scalar>(scaling.apply(stored));
        if (!std::isfinite(hu)) {
            const std::size_t i = n % dims[0], j = (n / dims[0]) % dims[1], k = n / (dims[0] * dims[1]);
            throw DataError(where + "non-finite HU at voxel (" + std::to_string(i) + ", " + std::to_string(j) + ", " +
                            std::to_string(k) + ")");
        }
        voxels[n] = hu;
    }
    return BasicCtVolume<Scalar>(dims, spacing, corner, snapped, std::move(voxels));
}

// Raw fixture format: a text header terminated by "end\n", then little-endian
// float64 voxels in x-fastest order. Numbers use shortest round-trip formatting.

namespace detail {

inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

inline double parse_double(std::string_view s, const std::string& field) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError("raw header: bad number in '" + field + "'");
    return v;
}

}  // namespace detail

inline constexpr std::string_view kRawMagic = "DRRRAW 1";

template <typename Scalar>
void write_raw(const BasicCtVolume<Scalar>& volume, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    const auto& d = volume.dims();
    out << kRawMagic << '\n';
    out << "dims " << d[0] << ' ' << d[1] << ' ' << d[2] << '\n';
    auto vec = [](Vec3 v) {
        return detail::format_double(v.x) + ' ' + detail::format_double(v.y) + ' ' + detail::format_double(v.z);
    };
    out << "spacing " << vec(volume.spacing()) << '\n';
    out << "corner " << vec(volume.corner()) << '\n';
    out << "direction";
    for (double v : volume.direction().m) out << ' ' << detail::format_double(v);
    out << "\nend\n";
    for (Scalar v : volume.voxels()) {
        auto bits = std::bit_cast<std::uint64_t>(static_cast<double>(v));
        if constexpr (std::endian::native == std::endian::big) bits = detail::byteswap(bits);
        out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

template <typename Scalar = float>
BasicCtVolume<Scalar> load_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    const std::string where = "'" + path.string() + "': ";

    auto next_line = [&](std::string_view expect_key) {
        std::string line;
        if (!std::getline(in, line)) throw FormatError(where + "raw header: missing '" + std::string(expect_key) + "'");
        return line;
    };
    auto fields = [&](std::string_view key, std::size_t n) {
        std::istringstream ss(next_line(key));
        std::string k;
        ss >> k;
        if (k != key) throw FormatError(where + "raw header: expected '" + std::string(key) + "', found '" + k + "'");
        std::vector<std::string> out(n);
        for (auto& f : out)
            if (!(ss >> f)) throw FormatError(where + "raw header: too few values for '" + std::string(key) + "'");
        return out;
    };

    if (next_line("magic") != kRawMagic) throw FormatError(where + "raw header: bad magic");
    Dims3 dims{};
    {
        const auto f = fields("dims", 3);
        for (std::size_t a = 0; a < 3; ++a) {
            std::size_t v = 0;
            auto [ptr, ec] = std::from_chars(f[a].data(), f[a].data() + f[a].size(), v);
            if (ec != std::errc{} || v == 0) throw FormatError(where + "raw header: bad 'dims'");
            dims[a] = v;
        }
    }
    auto read_vec = [&](std::string_view key) {
        const auto f = fields(key, 3);
        return Vec3{detail::parse_double(f[0], std::string(key)), detail::parse_double(f[1], std::string(key)),
                    detail::parse_double(f[2], std::string(key))};
    };
    const Vec3 spacing = read_vec("spacing");
    const Vec3 corner = read_vec("corner");
    Mat3 direction;
    {
        const auto f = fields("direction", 9);
        for (std::size_t n = 0; n < 9; ++n) direction.m[n] = detail::parse_double(f[n], "direction");
    }
    if (next_line("end") != "end") throw FormatError(where + "raw header: missing 'end'");

    const std::size_t count = dims[0] * dims[1] * dims[2];
    std::vector<Scalar> voxels(count);
    for (std::size_t n = 0; n < count; ++n) {
        std::uint64_t bits = 0;
        if (!in.read(reinterpret_cast<char*>(&bits), sizeof(bits)))
            throw FormatError(where + "data: truncated at voxel " + std::to_string(n) + " of " + std::to_string(count));
        if constexpr (std::endian::native == std::endian::big) bits = detail::byteswap(bits);
        voxels[n] = static_cast<Scalar>(std::bit_cast<double>(bits));
    }
    return BasicCtVolume<Scalar>(dims, spacing, corner, direction, std::move(voxels));
}

/// Dispatches on extension: `.raw` goes to the fixture reader, everything else to NIfTI.
template <typename Scalar = float>
BasicCtVolume<Scalar> load_volume(const std::filesystem::path& path) {
    if (path.extension() == ".raw") return load_raw<Scalar>(path);
    return load_nifti<Scalar>(path);
}

}  // namespace drr
