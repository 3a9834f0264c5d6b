#pragma once

// Exact Siddon-Jacobs ray traversal of a voxel grid.
//
// For each grid axis the ray crosses the planes b + i * spacing (i = 0..N) at
//     t(i) = (b + i * spacing - s) / (p - s).
// The crossings of all three axes, together with the entry and exit parameters,
// form an ascending sequence t_0 < t_1 < ... < t_M. Each interval [t_m, t_m+1]
// lies in exactly one voxel, found by flooring the interval midpoint, so
//     E = |p - s| * sum_m (t_m+1 - t_m) * mu(V[midpoint]).

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "drr/errors.hpp"
#include "drr/geometry.hpp"
#include "drr/vec.hpp"
#include "drr/volume.hpp"

namespace drr {

/// Rays whose component along an axis is below this (mm) never cross that axis' planes.
inline constexpr double kParallelCutoff = 1e-12;
/// Ray parameters closer than this are merged.
inline constexpr double kMergeTolerance = 1e-12;

/// Thresholded attenuation: mu(hu) = hu - threshold above the threshold, 0 otherwise.
struct AttenuationModel {
    double threshold = -100.0;

    double mu(double hu) const { return hu > threshold ? hu - threshold : 0.0; }

    void validate() const {
        if (!std::isfinite(threshold)) throw ContractViolation("attenuation threshold must be finite");
    }

    friend bool operator==(const AttenuationModel&, const AttenuationModel&) = default;
};

template <typename M>
concept ContributionModel = requires(const M& m, double hu) {
    { m.mu(hu) } -> std::convertible_to<double>;
};

struct VoxelSegment {
    Index3 index{};
    double t_enter = 0.0;
    double t_exit = 0.0;
    double length = 0.0;  ///< mm
};

struct ParameterInterval {
    double t_min = 0.0;
    double t_max = 0.0;
};

struct TraversalResult {
    double energy = 0.0;
    std::vector<VoxelSegment> segments;
};

namespace detail {

/// Per grid axis: which world component it runs along, with what sign, from which base.
struct GridAxes {
    std::array<std::size_t, 3> world{};
    std::array<double, 3> sign{};
    std::array<double, 3> base{};
    std::array<double, 3> spacing{};
    std::array<std::int64_t, 3> count{};

    template <typename Scalar>
    explicit GridAxes(const BasicCtVolume<Scalar>& v) {
        const Mat3& d = v.direction();
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t r = 0; r < 3; ++r)
                if (d(r, a) != 0.0) {
                    world[a] = r;
                    sign[a] = d(r, a);
                }
            base[a] = v.corner()[world[a]];
            spacing[a] = v.spacing()[a];
            count[a] = static_cast<std::int64_t>(v.dims()[a]);
        }
    }

    /// World coordinate of plane i along grid axis a.
    double plane(std::size_t a, std::int64_t i) const {
        return base[a] + sign[a] * (static_cast<double>(i) * spacing[a]);
    }
};

struct RayAxes {
    std::array<double, 3> s{};  ///< source, world component of each grid axis
    std::array<double, 3> d{};  ///< p - s, same components
    std::array<bool, 3> parallel{};

    RayAxes(const Ray& ray, const GridAxes& g) {
        for (std::size_t a = 0; a < 3; ++a) {
            s[a] = ray.s[g.world[a]];
            d[a] = ray.p[g.world[a]] - s[a];
            parallel[a] = std::abs(d[a]) < kParallelCutoff;
        }
    }

    double crossing(const GridAxes& g, std::size_t a, std::int64_t i) const { return (g.plane(a, i) - s[a]) / d[a]; }

    /// Continuous grid coordinate along axis a at ray parameter t, in voxels.
    double grid_coord(const GridAxes& g, std::size_t a, double t) const {
        return g.sign[a] * (s[a] + t * d[a] - g.base[a]) / g.spacing[a];
    }
};

inline std::optional<ParameterInterval> clip(const GridAxes& g, const RayAxes& r) {
    double t_min = 0.0;
    double t_max = 1.0;
    for (std::size_t a = 0; a < 3; ++a) {
        if (r.parallel[a]) {
            const double c = g.sign[a] * (r.s[a] - g.base[a]);
            if (c < 0.0 || c > static_cast<double>(g.count[a]) * g.spacing[a]) return std::nullopt;
            continue;
        }
        const double t0 = r.crossing(g, a, 0);
        const double t1 = r.crossing(g, a, g.count[a]);
        t_min = std::max(t_min, std::min(t0, t1));
        t_max = std::min(t_max, std::max(t0, t1));
    }
    if (!(t_max - t_min > kMergeTolerance)) return std::nullopt;
    return ParameterInterval{t_min, t_max};
}

/// Ascending-t cursor over one axis' plane crossings inside [t_lo, t_hi].
class PlaneCursor {
public:
    PlaneCursor(const GridAxes& g, const RayAxes& r, std::size_t axis, double t_lo, double t_hi)
        : g_(&g), r_(&r), axis_(axis), t_hi_(t_hi) {
        if (r.parallel[axis]) return;
        const double c0 = r.grid_coord(g, axis, t_lo);
        const double c1 = r.grid_coord(g, axis, t_hi);
        const bool ascending = g.sign[axis] * r.d[axis] > 0.0;
        step_ = ascending ? 1 : -1;
        const double lo = std::floor(std::min(c0, c1)) - 1.0;
        const double hi = std::ceil(std::max(c0, c1)) + 1.0;
        const auto n = static_cast<double>(g.count[axis]);
        const auto first = static_cast<std::int64_t>(std::clamp(ascending ? lo : hi, 0.0, n));
        last_ = static_cast<std::int64_t>(std::clamp(ascending ? hi : lo, 0.0, n));
        next_ = first;
        active_ = true;
        advance_to(t_lo);
    }

    double peek() const { return active_ ? t_ : std::numeric_limits<double>::infinity(); }

    void pop() {
        next_ += step_;
        load();
    }

private:
    void load() {
        if (!active_) return;
        if ((step_ > 0 && next_ > last_) || (step_ < 0 && next_ < last_)) {
            active_ = false;
            return;
        }
        t_ = r_->crossing(*g_, axis_, next_);
        if (t_ > t_hi_) active_ = false;
    }

    void advance_to(double t_lo) {
        load();
        while (active_ && t_ < t_lo) pop();
    }

    const GridAxes* g_;
    const RayAxes* r_;
    std::size_t axis_;
    double t_hi_;
    double t_ = 0.0;
    std::int64_t next_ = 0;
    std::int64_t last_ = 0;
    std::int64_t step_ = 1;
    bool active_ = false;
};

/// Visits every voxel interval of the ray in ascending t order. The visitor gets
/// (t_enter, t_exit, index, in_bounds). Returns false when the ray misses.
template <typename Visitor>
bool walk(const GridAxes& g, const RayAxes& r, Visitor&& visit) {
    const auto clipped = clip(g, r);
    if (!clipped) return false;
    const double t_min = clipped->t_min;
    const double t_max = clipped->t_max;

    std::array<PlaneCursor, 3> cursors{PlaneCursor(g, r, 0, t_min, t_max), PlaneCursor(g, r, 1, t_min, t_max),
                                       PlaneCursor(g, r, 2, t_min, t_max)};
    auto emit = [&](double t0, double t1) {
        const double mid = 0.5 * (t0 + t1);
        Index3 idx{};
        bool inside = true;
        for (std::size_t a = 0; a < 3; ++a) {
            const double f = std::floor(r.grid_coord(g, a, mid));
            if (!(f >= 0.0) || f >= static_cast<double>(g.count[a])) {
                inside = false;
                break;
            }
            idx[a] = static_cast<std::int64_t>(f);
        }
        visit(t0, t1, idx, inside);
    };

    double last = t_min;
    for (;;) {
        std::size_t best = 0;
        double t = cursors[0].peek();
        for (std::size_t a = 1; a < 3; ++a)
            if (cursors[a].peek() < t) {
                t = cursors[a].peek();
                best = a;
            }
        if (!(t < t_max - kMergeTolerance)) break;
        cursors[best].pop();
        if (t - last < kMergeTolerance) continue;
        emit(last, t);
        last = t;
    }
    emit(last, t_max);
    return true;
}

}  // namespace detail

/// Ascending parameters at which the ray crosses the planes of one grid axis,
/// restricted to [0, 1]. Empty when the ray runs parallel to those planes.
template <typename Scalar>
std::vector<double> plane_crossings(const Ray& ray, const BasicCtVolume<Scalar>& volume, std::size_t axis) {
    if (axis > 2) throw ContractViolation("axis must be 0, 1 or 2");
    const detail::GridAxes g(volume);
    const detail::RayAxes r(ray, g);
    std::vector<double> out;
    if (r.parallel[axis]) return out;
    out.reserve(static_cast<std::size_t>(g.count[axis]) + 1);
    for (std::int64_t i = 0; i <= g.count[axis]; ++i) {
        const double t = r.crossing(g, axis, i);
        if (t >= 0.0 && t <= 1.0) out.push_back(t);
    }
    if (out.size() > 1 && out.front() > out.back()) std::reverse(out.begin(), out.end());
    return out;
}

/// Clips [0, 1] against the volume's bounding box; empty when the ray misses
/// or only grazes it.
template <typename Scalar>
std::optional<ParameterInterval> entry_exit(const Ray& ray, const BasicCtVolume<Scalar>& volume) {
    const detail::GridAxes g(volume);
    return detail::clip(g, detail::RayAxes(ray, g));
}

template <typename Scalar, ContributionModel Model = AttenuationModel>
TraversalResult traverse(const Ray& ray, const BasicCtVolume<Scalar>& volume, const Model& model = {}) {
    ray.validate();
    const detail::GridAxes g(volume);
    const detail::RayAxes r(ray, g);
    const double length = ray.length();
    const auto& dims = volume.dims();
    const auto voxels = volume.voxels();
    TraversalResult result;
    double sum = 0.0;
    detail::walk(g, r, [&](double t0, double t1, const Index3& idx, bool inside) {
        if (!inside) return;
        const auto lin = static_cast<std::size_t>(idx[0]) +
                         dims[0] * (static_cast<std::size_t>(idx[1]) + dims[1] * static_cast<std::size_t>(idx[2]));
        sum += (t1 - t0) * model.mu(static_cast<double>(voxels[lin]));
        result.segments.push_back({idx, t0, t1, (t1 - t0) * length});
    });
    result.energy = length * sum;
    return result;
}

/// Energy-only traversal used by the renderer; identical arithmetic to `traverse`.
template <typename Scalar, ContributionModel Model = AttenuationModel>
double ray_energy(const Ray& ray, const BasicCtVolume<Scalar>& volume, const Model& model = {}) {
    const detail::GridAxes g(volume);
    const detail::RayAxes r(ray, g);
    const auto& dims = volume.dims();
    const Scalar* voxels = volume.voxels().data();
    double sum = 0.0;
    detail::walk(g, r, [&](double t0, double t1, const Index3& idx, bool inside) {
        if (!inside) return;
        const auto lin = static_cast<std::size_t>(idx[0]) +
                         dims[0] * (static_cast<std::size_t>(idx[1]) + dims[1] * static_cast<std::size_t>(idx[2]));
        sum += (t1 - t0) * model.mu(static_cast<double>(voxels[lin]));
    });
    return ray.length() * sum;
}

}  // namespace drr
