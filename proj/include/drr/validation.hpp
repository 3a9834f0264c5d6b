#pragma once

// Test oracles that share no code with the Siddon traversal: analytic phantoms
// with closed-form line integrals, a brute-force Riemann-sum integrator, and a
// byte-level NIfTI-1 writer for loader round trips.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "drr/errors.hpp"
#include "drr/geometry.hpp"
#include "drr/siddon.hpp"
#include "drr/vec.hpp"
#include "drr/volume.hpp"
#include "drr/volume_io.hpp"

namespace drr::validation {

struct PhantomGrid {
    Dims3 dims{64, 64, 64};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 corner{0.0, 0.0, 0.0};
};

struct UniformBox {
    double hu = 0.0;
};

/// Voxels with index[axis] < split_index take hu_low, the rest hu_high.
struct TwoSlab {
    double hu_low = 0.0;
    double hu_high = 0.0;
    std::size_t axis = 0;
    std::size_t split_index = 0;
};

/// Voxelized by centre: a voxel is inside when its centre is within `radius`.
struct Sphere {
    Vec3 center;
    double radius = 1.0;
    double hu_in = 0.0;
    double hu_out = -1000.0;
};

/// Independent uniform HU per voxel in [lo, hi).
struct SeededRandom {
    std::uint64_t seed = 0;
    double lo = -1000.0;
    double hi = 2000.0;
};

struct Phantom {
    PhantomGrid grid;
    std::variant<UniformBox, TwoSlab, Sphere, SeededRandom> kind;
};

/// Deterministic for identical parameters and seed.
template <typename Scalar = float>
BasicCtVolume<Scalar> realize(const Phantom& ph) {
    const auto& g = ph.grid;
    std::vector<Scalar> vox(g.dims[0] * g.dims[1] * g.dims[2]);
    std::visit(
        [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, UniformBox>) {
                std::fill(vox.begin(), vox.end(), static_cast<Scalar>(k.hu));
            } else if constexpr (std::is_same_v<K, SeededRandom>) {
                std::mt19937_64 rng(k.seed);
                std::uniform_real_distribution<double> dist(k.lo, k.hi);
                for (auto& v : vox) v = static_cast<Scalar>(dist(rng));
            } else {
                std::size_t n = 0;
                for (std::size_t z = 0; z < g.dims[2]; ++z)
                    for (std::size_t y = 0; y < g.dims[1]; ++y)
                        for (std::size_t x = 0; x < g.dims[0]; ++x, ++n) {
                            if constexpr (std::is_same_v<K, TwoSlab>) {
                                const std::array<std::size_t, 3> idx{x, y, z};
                                vox[n] = static_cast<Scalar>(idx[k.axis] < k.split_index ? k.hu_low : k.hu_high);
                            } else {
                                const Vec3 c{g.corner.x + (static_cast<double>(x) + 0.5) * g.spacing.x,
                                             g.corner.y + (static_cast<double>(y) + 0.5) * g.spacing.y,
                                             g.corner.z + (static_cast<double>(z) + 0.5) * g.spacing.z};
                                vox[n] = static_cast<Scalar>(norm(c - k.center) <= k.radius ? k.hu_in : k.hu_out);
                            }
                        }
            }
        },
        ph.kind);
    return BasicCtVolume<Scalar>(g.dims, g.spacing, g.corner, std::move(vox));
}

/// Liang-Barsky clip of the segment s->p (t in [0, 1]) to an axis-aligned box.
inline std::optional<std::pair<double, double>> clip_to_box(const Ray& ray, Vec3 lo, Vec3 hi) {
    double t0 = 0.0;
    double t1 = 1.0;
    const Vec3 d = ray.p - ray.s;
    for (std::size_t a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (ray.s[a] < lo[a] || ray.s[a] > hi[a]) return std::nullopt;
            continue;
        }
        double ta = (lo[a] - ray.s[a]) / d[a];
        double tb = (hi[a] - ray.s[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 >= t1) return std::nullopt;
    }
    return std::pair{t0, t1};
}

/// Midpoint Riemann sum of mu(V(R(t))) along the clipped ray, sampled every
/// `step` mm (rounded so an integer number of samples spans the chord), with
/// floor lookup of the containing voxel.
template <typename Scalar>
double brute_force_integrate(const Ray& ray, const BasicCtVolume<Scalar>& volume, const AttenuationModel& model,
                             double step) {
    if (!(step > 0.0)) throw ContractViolation("brute_force_integrate: step must be > 0");
    const auto [lo, hi] = volume.world_bounds();
    const auto clipped = clip_to_box(ray, lo, hi);
    if (!clipped) return 0.0;
    const double length = ray.length();
    const double chord = (clipped->second - clipped->first) * length;
    const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(chord / step)));
    const double h = (clipped->second - clipped->first) / static_cast<double>(n);
    const auto& dims = volume.dims();
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = clipped->first + (static_cast<double>(k) + 0.5) * h;
        const Vec3 c = volume.world_to_index(ray.at(t));
        const double i = std::floor(c.x), j = std::floor(c.y), l = std::floor(c.z);
        if (i < 0 || j < 0 || l < 0 || i >= static_cast<double>(dims[0]) || j >= static_cast<double>(dims[1]) ||
            l >= static_cast<double>(dims[2]))
            continue;
        sum += model.mu(volume.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(l)));
    }
    return length * h * sum;
}

/// Closed-form line integral for the uniform box, two-slab and (continuous) sphere phantoms.
inline double analytic_line_integral(const Phantom& ph, const Ray& ray, const AttenuationModel& model) {
    const auto& g = ph.grid;
    const Vec3 lo = g.corner;
    const Vec3 hi = g.corner + Vec3{static_cast<double>(g.dims[0]) * g.spacing.x,
                                    static_cast<double>(g.dims[1]) * g.spacing.y,
                                    static_cast<double>(g.dims[2]) * g.spacing.z};
    const auto clipped = clip_to_box(ray, lo, hi);
    if (!clipped) return 0.0;
    const auto [t0, t1] = *clipped;
    const double length = ray.length();
    const Vec3 d = ray.p - ray.s;

    return std::visit(
        [&](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, UniformBox>) {
                return length * (t1 - t0) * model.mu(k.hu);
            } else if constexpr (std::is_same_v<K, TwoSlab>) {
                const std::size_t a = k.axis;
                const double plane = g.corner[a] + static_cast<double>(k.split_index) * g.spacing[a];
                double low = 0.0;
                if (d[a] == 0.0) {
                    low = ray.s[a] < plane ? t1 - t0 : 0.0;
                } else {
                    const double ts = std::clamp((plane - ray.s[a]) / d[a], t0, t1);
                    low = d[a] > 0 ? ts - t0 : t1 - ts;
                }
                const double high = (t1 - t0) - low;
                return length * (low * model.mu(k.hu_low) + high * model.mu(k.hu_high));
            } else if constexpr (std::is_same_v<K, Sphere>) {
                const Vec3 m = ray.s - k.center;
                const double qa = dot(d, d);
                const double qb = 2.0 * dot(m, d);
                const double qc = dot(m, m) - k.radius * k.radius;
                const double disc = qb * qb - 4.0 * qa * qc;
                double inside = 0.0;
                if (disc > 0.0) {
                    const double r = std::sqrt(disc);
                    const double a0 = std::max(t0, (-qb - r) / (2.0 * qa));
                    const double a1 = std::min(t1, (-qb + r) / (2.0 * qa));
                    inside = std::max(0.0, a1 - a0);
                }
                return length * (inside * model.mu(k.hu_in) + ((t1 - t0) - inside) * model.mu(k.hu_out));
            } else {
                throw ContractViolation("analytic_line_integral: seeded-random phantoms have no closed form");
                return 0.0;
            }
        },
        ph.kind);
}

enum class NiftiDatatype : std::int16_t { int16 = 4, float32 = 16, float64 = 64 };

struct NiftiFixtureOptions {
    NiftiDatatype datatype = NiftiDatatype::float32;
    HounsfieldScaling scaling;  ///< stored = (hu - intercept) / slope
    bool write_sform = true;
    bool write_qform = false;
    /// Offset added to the qform origin only, to tell the two transforms apart.
    Vec3 qform_origin_shift;
    bool big_endian = false;
};

namespace detail {

inline std::array<double, 4> rotation_to_quaternion(const Mat3& r) {
    // Returns (a, b, c, d) with a >= 0.
    const double trace = r(0, 0) + r(1, 1) + r(2, 2);
    double a, b, c, d;
    if (trace > 0.5) {
        a = 0.5 * std::sqrt(1.0 + trace);
        b = 0.25 * (r(2, 1) - r(1, 2)) / a;
        c = 0.25 * (r(0, 2) - r(2, 0)) / a;
        d = 0.25 * (r(1, 0) - r(0, 1)) / a;
    } else if (r(0, 0) >= r(1, 1) && r(0, 0) >= r(2, 2)) {
        b = 0.5 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
        a = 0.25 * (r(2, 1) - r(1, 2)) / b;
        c = 0.25 * (r(0, 1) + r(1, 0)) / b;
        d = 0.25 * (r(0, 2) + r(2, 0)) / b;
    } else if (r(1, 1) >= r(2, 2)) {
        c = 0.5 * std::sqrt(1.0 - r(0, 0) + r(1, 1) - r(2, 2));
        a = 0.25 * (r(0, 2) - r(2, 0)) / c;
        b = 0.25 * (r(0, 1) + r(1, 0)) / c;
        d = 0.25 * (r(1, 2) + r(2, 1)) / c;
    } else {
        d = 0.5 * std::sqrt(1.0 - r(0, 0) - r(1, 1) + r(2, 2));
        a = 0.25 * (r(1, 0) - r(0, 1)) / d;
        b = 0.25 * (r(0, 2) + r(2, 0)) / d;
        c = 0.25 * (r(1, 2) + r(2, 1)) / d;
    }
    if (a < 0) {
        a = -a;
        b = -b;
        c = -c;
        d = -d;
    }
    return {a, b, c, d};
}

}  // namespace detail

/// Writes a minimal NIfTI-1 single file; gzip-compressed when the path ends in `.gz`.
template <typename Scalar>
void write_nifti_fixture(const BasicCtVolume<Scalar>& volume, const std::filesystem::path& path,
                         const NiftiFixtureOptions& opt = {}) {
    std::vector<unsigned char> hdr(352, 0);
    auto put = [&](std::size_t off, auto value) {
        std::array<unsigned char, sizeof(value)> raw{};
        std::memcpy(raw.data(), &value, sizeof(value));
        if (opt.big_endian) std::reverse(raw.begin(), raw.end());
        std::memcpy(hdr.data() + off, raw.data(), raw.size());
    };
    const auto& dims = volume.dims();
    const Vec3 sp = volume.spacing();
    put(0, std::int32_t{348});
    put(nifti::kOffDim, std::int16_t{3});
    for (std::size_t a = 0; a < 3; ++a) put(nifti::kOffDim + 2 * (a + 1), static_cast<std::int16_t>(dims[a]));
    for (std::size_t a = 4; a < 8; ++a) put(nifti::kOffDim + 2 * a, std::int16_t{1});
    const auto dt = static_cast<std::int16_t>(opt.datatype);
    const std::int16_t bitpix = opt.datatype == NiftiDatatype::int16 ? 16 : (opt.datatype == NiftiDatatype::float32 ? 32 : 64);
    put(nifti::kOffDatatype, dt);
    put(nifti::kOffBitpix, bitpix);

    // LPS direction and voxel-0 centre, converted to the file's RAS convention.
    Mat3 ras = volume.direction();
    for (std::size_t c = 0; c < 3; ++c) {
        ras(0, c) = -ras(0, c);
        ras(1, c) = -ras(1, c);
    }
    const Vec3 origin_lps = volume.corner() + volume.direction() * (0.5 * sp);
    const Vec3 origin{-origin_lps.x, -origin_lps.y, origin_lps.z};

    float qfac = 1.0f;
    Mat3 rot = ras;
    if (ras.determinant() < 0) {
        qfac = -1.0f;
        for (std::size_t r = 0; r < 3; ++r) rot(r, 2) = -rot(r, 2);
    }
    put(nifti::kOffPixdim, qfac);
    for (std::size_t a = 0; a < 3; ++a) put(nifti::kOffPixdim + 4 * (a + 1), static_cast<float>(sp[a]));
    put(nifti::kOffVoxOffset, 352.0f);
    put(nifti::kOffSclSlope, static_cast<float>(opt.scaling.slope));
    put(nifti::kOffSclInter, static_cast<float>(opt.scaling.intercept));
    if (opt.write_qform) {
        put(nifti::kOffQformCode, std::int16_t{1});
        const auto q = detail::rotation_to_quaternion(rot);
        for (std::size_t n = 0; n < 3; ++n) put(nifti::kOffQuatern + 4 * n, static_cast<float>(q[n + 1]));
        for (std::size_t a = 0; a < 3; ++a)
            put(nifti::kOffQoffset + 4 * a, static_cast<float>(origin[a] + opt.qform_origin_shift[a]));
    }
    if (opt.write_sform) {
        put(nifti::kOffSformCode, std::int16_t{1});
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 3; ++c) put(nifti::kOffSrow + 16 * r + 4 * c, static_cast<float>(ras(r, c) * sp[c]));
            put(nifti::kOffSrow + 16 * r + 12, static_cast<float>(origin[r]));
        }
    }
    std::memcpy(hdr.data() + nifti::kOffMagic, "n+1\0", 4);

    std::vector<unsigned char> data;
    for (Scalar hu : volume.voxels()) {
        const double stored = (static_cast<double>(hu) - opt.scaling.intercept) / opt.scaling.slope;
        auto append = [&](auto value) {
            std::array<unsigned char, sizeof(value)> raw{};
            std::memcpy(raw.data(), &value, sizeof(value));
            if (opt.big_endian) std::reverse(raw.begin(), raw.end());
            data.insert(data.end(), raw.begin(), raw.end());
        };
        switch (opt.datatype) {
            case NiftiDatatype::int16: append(static_cast<std::int16_t>(std::lround(stored))); break;
            case NiftiDatatype::float32: append(static_cast<float>(stored)); break;
            case NiftiDatatype::float64: append(stored); break;
        }
    }

    if (path.extension() == ".gz") {
        gzFile f = gzopen(path.string().c_str(), "wb");
        if (f == nullptr) throw IoError("cannot open '" + path.string() + "' for writing");
        const bool ok = gzwrite(f, hdr.data(), static_cast<unsigned>(hdr.size())) == static_cast<int>(hdr.size()) &&
                        gzwrite(f, data.data(), static_cast<unsigned>(data.size())) == static_cast<int>(data.size());
        if (gzclose(f) != Z_OK || !ok) throw IoError("write failed for '" + path.string() + "'");
    } else {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        if (!out) throw IoError("write failed for '" + path.string() + "'");
    }
}

}  // namespace drr::validation
