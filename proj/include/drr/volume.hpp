#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "drr/errors.hpp"
#include "drr/vec.hpp"

namespace drr {

using Dims3 = std::array<std::size_t, 3>;
using Index3 = std::array<std::int64_t, 3>;

/// Affine map from stored values to Hounsfield units: hu = slope * stored + intercept.
struct HounsfieldScaling {
    double slope = 1.0;
    double intercept = 0.0;

    HounsfieldScaling() = default;
    HounsfieldScaling(double slope_, double intercept_) : slope(slope_), intercept(intercept_) {
        if (slope == 0.0 || !std::isfinite(slope) || !std::isfinite(intercept))
            throw ContractViolation("HounsfieldScaling: slope must be finite and non-zero, intercept finite");
    }

    double apply(double stored) const { return slope * stored + intercept; }
};

namespace detail {

inline constexpr double kDirectionTolerance = 1e-6;

/// Checks orthonormality and snaps an axis-aligned (signed permutation) matrix to exact entries.
inline Mat3 snap_direction(const Mat3& d) {
    for (std::size_t c = 0; c < 3; ++c) {
        const Vec3 col = d.column(c);
        if (!is_finite(col) || std::abs(norm(col) - 1.0) > kDirectionTolerance)
            throw ContractViolation("direction column " + std::to_string(c) + " is not unit length");
        for (std::size_t o = c + 1; o < 3; ++o)
            if (std::abs(dot(col, d.column(o))) > kDirectionTolerance)
                throw ContractViolation("direction columns " + std::to_string(c) + " and " + std::to_string(o) +
                                        " are not orthogonal");
    }
    Mat3 snapped;
    snapped.m.fill(0.0);
    std::array<bool, 3> row_used{};
    for (std::size_t c = 0; c < 3; ++c) {
        std::size_t hit = 3;
        for (std::size_t r = 0; r < 3; ++r) {
            const double v = d(r, c);
            if (std::abs(std::abs(v) - 1.0) <= kDirectionTolerance) {
                hit = r;
            } else if (std::abs(v) > kDirectionTolerance) {
                throw UnsupportedFormatError(
                    "oblique direction matrices are not supported (only axis-aligned permutations/flips)");
            }
        }
        if (hit == 3 || row_used[hit])
            throw UnsupportedFormatError("direction matrix is not a signed permutation");
        row_used[hit] = true;
        snapped(hit, c) = d(hit, c) > 0 ? 1.0 : -1.0;
    }
    return snapped;
}

}  // namespace detail

/// Immutable CT voxel grid in Hounsfield units.
///
/// Voxel (i, j, k) covers the half-open box [i, i+1) x [j, j+1) x [k, k+1) in index
/// space; its world extent is corner + direction * ((i, j, k) * spacing) onwards.
/// `corner` is the world position of the outer corner of voxel (0, 0, 0), which is
/// the minimum corner whenever `direction` is the identity. Voxels are x-fastest.
/// Copies share the voxel buffer; nothing mutates it after construction.
template <typename Scalar>
class BasicCtVolume {
    static_assert(std::is_floating_point_v<Scalar>, "voxel scalar must be floating point");

public:
    using value_type = Scalar;

    BasicCtVolume(Dims3 dims, Vec3 spacing, Vec3 corner, Mat3 direction, std::vector<Scalar> voxels)
        : dims_(dims), spacing_(spacing), corner_(corner) {
        for (std::size_t a = 0; a < 3; ++a) {
            if (dims[a] < 1) throw ContractViolation("volume dims must be >= 1 on every axis");
            if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
                throw ContractViolation("volume spacing must be finite and > 0 on every axis");
        }
        if (!is_finite(corner)) throw ContractViolation("volume corner must be finite");
        direction_ = detail::snap_direction(direction);
        if (voxels.size() != dims[0] * dims[1] * dims[2])
            throw ContractViolation("voxel count " + std::to_string(voxels.size()) + " does not match dims " +
                                    std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "x" +
                                    std::to_string(dims[2]));
        for (std::size_t n = 0; n < voxels.size(); ++n)
            if (!std::isfinite(voxels[n])) throw DataError("non-finite HU value at voxel " + index_string(n));
        voxels_ = std::make_shared<const std::vector<Scalar>>(std::move(voxels));
    }

    BasicCtVolume(Dims3 dims, Vec3 spacing, Vec3 corner, std::vector<Scalar> voxels)
        : BasicCtVolume(dims, spacing, corner, Mat3::identity(), std::move(voxels)) {}

    const Dims3& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const Vec3& corner() const { return corner_; }
    const Mat3& direction() const { return direction_; }
    std::span<const Scalar> voxels() const { return *voxels_; }
    std::size_t voxel_count() const { return voxels_->size(); }

    std::size_t linear_index(std::size_t i, std::size_t j, std::size_t k) const {
        return i + dims_[0] * (j + dims_[1] * k);
    }

    Scalar at(std::size_t i, std::size_t j, std::size_t k) const { return (*voxels_)[linear_index(i, j, k)]; }

    /// Physical size of the grid along each index axis (mm).
    Vec3 extent() const {
        return {static_cast<double>(dims_[0]) * spacing_.x, static_cast<double>(dims_[1]) * spacing_.y,
                static_cast<double>(dims_[2]) * spacing_.z};
    }

    /// World point expressed in the grid frame: index-aligned axes, mm, origin at `corner`.
    Vec3 grid_from_world(Vec3 world) const { return direction_.transposed() * (world - corner_); }
    Vec3 world_from_grid(Vec3 grid) const { return corner_ + direction_ * grid; }

    /// Continuous index; flooring it gives the containing voxel.
    Vec3 world_to_index(Vec3 world) const {
        const Vec3 g = grid_from_world(world);
        return {g.x / spacing_.x, g.y / spacing_.y, g.z / spacing_.z};
    }

    Vec3 voxel_center(std::size_t i, std::size_t j, std::size_t k) const {
        return world_from_grid({(static_cast<double>(i) + 0.5) * spacing_.x, (static_cast<double>(j) + 0.5) * spacing_.y,
                                (static_cast<double>(k) + 0.5) * spacing_.z});
    }

    Vec3 center() const { return world_from_grid(0.5 * extent()); }

    /// Axis-aligned world bounding box (min, max).
    std::array<Vec3, 2> world_bounds() const {
        const Vec3 a = corner_;
        const Vec3 b = world_from_grid(extent());
        return {Vec3{std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)},
                Vec3{std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)}};
    }

    bool contains_world(Vec3 world) const {
        const Vec3 g = grid_from_world(world);
        const Vec3 e = extent();
        return g.x >= 0 && g.y >= 0 && g.z >= 0 && g.x <= e.x && g.y <= e.y && g.z <= e.z;
    }

    /// FNV-1a over geometry and voxel bytes; identifies a volume in provenance records.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const void* data, std::size_t n) {
            const auto* p = static_cast<const unsigned char*>(data);
            for (std::size_t k = 0; k < n; ++k) {
                h ^= p[k];
                h *= 1099511628211ull;
            }
        };
        mix(dims_.data(), sizeof(dims_));
        mix(&spacing_, sizeof(spacing_));
        mix(&corner_, sizeof(corner_));
        mix(direction_.m.data(), sizeof(direction_.m));
        mix(voxels_->data(), voxels_->size() * sizeof(Scalar));
        return h;
    }

    friend bool operator==(const BasicCtVolume& a, const BasicCtVolume& b) {
        if (a.dims_ != b.dims_ || !(a.spacing_ == b.spacing_) || !(a.corner_ == b.corner_) ||
            !(a.direction_ == b.direction_))
            return false;
        return a.voxels_ == b.voxels_ ||
               std::memcmp(a.voxels_->data(), b.voxels_->data(), a.voxels_->size() * sizeof(Scalar)) == 0;
    }

private:
    std::string index_string(std::size_t n) const {
        const std::size_t i = n % dims_[0];
        const std::size_t j = (n / dims_[0]) % dims_[1];
        const std::size_t k = n / (dims_[0] * dims_[1]);
        return "(" + std::to_string(i) + ", " + std::to_string(j) + ", " + std::to_string(k) + ")";
    }

    Dims3 dims_;
    Vec3 spacing_;
    Vec3 corner_;
    Mat3 direction_;
    std::shared_ptr<const std::vector<Scalar>> voxels_;
};

using CtVolume = BasicCtVolume<float>;

}  // namespace drr
