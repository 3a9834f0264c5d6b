#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "drr/errors.hpp"
#include "drr/geometry.hpp"
#include "drr/parallel.hpp"
#include "drr/siddon.hpp"
#include "drr/volume.hpp"

namespace drr {

inline constexpr const char* kEngineVersion = "1.0.0";

/// Everything needed to reproduce an energy image.
struct RenderParameters {
    ProjectionGeometry geometry;
    RigidTransform transform;
    AttenuationModel model;

    friend bool operator==(const RenderParameters&, const RenderParameters&) = default;
};

/// Accumulated energies per detector pixel, before any intensity mapping.
/// Row-major with u fastest: energies[v * width + u]; row v = 0 is the top row.
struct EnergyImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> energies;
    RenderParameters parameters;
    std::uint64_t volume_fingerprint = 0;

    double at(std::size_t u, std::size_t v) const { return energies[v * width + u]; }
};

/// Renders one DRR: a Siddon traversal per detector pixel, with pixel rays
/// pulled back into the volume's native frame through the inverse transform.
/// Output is bit-identical for any worker count; 0 workers means the default.
template <typename Scalar>
EnergyImage render_drr(const BasicCtVolume<Scalar>& volume, const ProjectionGeometry& geom, const RigidTransform& xf,
                       const AttenuationModel& model, std::size_t workers = 0) {
    geom.validate();
    xf.validate();
    model.validate();
    const VolumePose pose(xf, volume.center());
    if (volume.contains_world(pose.to_native(geom.source())))
        throw GeometryError("source lies inside the transformed volume; increase scd or change the translation");

    EnergyImage img;
    img.width = geom.detector_px[0];
    img.height = geom.detector_px[1];
    img.energies.assign(img.width * img.height, 0.0);
    img.parameters = {geom, xf, model};
    img.volume_fingerprint = volume.fingerprint();

    const Vec3 source = pose.to_native(geom.source());
    parallel_for(img.height, workers == 0 ? default_worker_count() : workers, [&](std::size_t v) {
        for (std::size_t u = 0; u < img.width; ++u) {
            const Ray ray{source, pose.to_native(pixel_ray(geom, u, v).p)};
            const double e = ray_energy(ray, volume, model);
            if (!std::isfinite(e) || e < 0.0)
                throw InternalError("invalid energy " + std::to_string(e) + " at pixel (" + std::to_string(u) + ", " +
                                    std::to_string(v) + ")");
            img.energies[v * img.width + u] = e;
        }
    });
    return img;
}

struct NormalizationSpec {
    enum class Mode { min_max, fixed_range };

    Mode mode = Mode::min_max;
    double lo = 0.0;
    double hi = 1.0;
    /// Maps g -> 255 - g after scaling, so high energies come out dark.
    bool invert = false;

    void validate() const {
        if (mode == Mode::fixed_range && !(lo < hi)) throw ContractViolation("fixed-range normalization needs lo < hi");
    }

    friend bool operator==(const NormalizationSpec&, const NormalizationSpec&) = default;
};

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  ///< row-major, u fastest

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Linear map to 8 bits with round-half-up. A constant image maps to 0 under min-max.
inline GrayImage normalize(const EnergyImage& img, const NormalizationSpec& spec) {
    spec.validate();
    GrayImage out{img.width, img.height, std::vector<std::uint8_t>(img.energies.size(), 0)};
    double lo = spec.lo;
    double hi = spec.hi;
    if (spec.mode == NormalizationSpec::Mode::min_max && !img.energies.empty()) {
        const auto [mn, mx] = std::minmax_element(img.energies.begin(), img.energies.end());
        lo = *mn;
        hi = *mx;
    }
    const bool constant = !(hi > lo);
    for (std::size_t n = 0; n < img.energies.size(); ++n) {
        int g = 0;
        if (!constant) {
            const double e = std::clamp(img.energies[n], lo, hi);
            g = static_cast<int>(std::floor((e - lo) / (hi - lo) * 255.0 + 0.5));
            g = std::clamp(g, 0, 255);
        }
        out.pixels[n] = static_cast<std::uint8_t>(spec.invert ? 255 - g : g);
    }
    return out;
}

}  // namespace drr
