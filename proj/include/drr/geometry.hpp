#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <string_view>

#include "drr/errors.hpp"
#include "drr/vec.hpp"
#include "drr/volume.hpp"

namespace drr {

/// Parametric segment R(t) = s + t (p - s), t in [0, 1], from source s to detector point p.
struct Ray {
    Vec3 s;
    Vec3 p;

    Vec3 direction() const { return p - s; }
    double length() const { return norm(p - s); }
    Vec3 at(double t) const { return s + t * (p - s); }

    void validate() const {
        const double len = length();
        if (!is_finite(s) || !is_finite(p) || !(len > 0.0) || !std::isfinite(len))
            throw ContractViolation("ray endpoints must be finite and distinct");
    }
};

/// Cone-beam imaging system. The central ray runs along world +y through the
/// isocenter; the detector u axis is world +x and the v axis is world -z, so
/// superior anatomy lands at the top of the image.
struct ProjectionGeometry {
    double scd = 1000.0;  ///< source to isocenter, mm
    double sdd = 1500.0;  ///< source to detector plane, mm
    std::array<std::size_t, 2> detector_px{512, 512};
    std::array<double, 2> detector_spacing{1.0, 1.0};
    std::array<double, 2> detector_offset{0.0, 0.0};
    Vec3 isocenter;

    static constexpr Vec3 kBeamAxis{0.0, 1.0, 0.0};
    static constexpr Vec3 kUAxis{1.0, 0.0, 0.0};
    static constexpr Vec3 kVAxis{0.0, 0.0, -1.0};

    void validate() const {
        if (!(scd > 0.0) || !(sdd > scd) || !std::isfinite(sdd))
            throw ContractViolation("geometry requires 0 < scd < sdd");
        if (detector_px[0] < 1 || detector_px[1] < 1) throw ContractViolation("detector must be at least 1x1 pixels");
        if (!(detector_spacing[0] > 0.0) || !(detector_spacing[1] > 0.0) || !std::isfinite(detector_spacing[0]) ||
            !std::isfinite(detector_spacing[1]))
            throw ContractViolation("detector spacing must be finite and > 0");
        if (!std::isfinite(detector_offset[0]) || !std::isfinite(detector_offset[1]) || !is_finite(isocenter))
            throw ContractViolation("detector offset and isocenter must be finite");
    }

    Vec3 source() const { return isocenter - scd * kBeamAxis; }

    Vec3 detector_center() const {
        return isocenter + (sdd - scd) * kBeamAxis + detector_offset[0] * kUAxis + detector_offset[1] * kVAxis;
    }

    friend bool operator==(const ProjectionGeometry&, const ProjectionGeometry&) = default;
};

template <typename Scalar>
ProjectionGeometry default_frontal_geometry(const BasicCtVolume<Scalar>& volume) {
    ProjectionGeometry g;
    g.isocenter = volume.center();
    return g;
}

/// Ray from the source to the centre of detector pixel (u, v).
inline Ray pixel_ray(const ProjectionGeometry& geom, std::size_t u, std::size_t v) {
    if (u >= geom.detector_px[0] || v >= geom.detector_px[1])
        throw ContractViolation("pixel (" + std::to_string(u) + ", " + std::to_string(v) + ") outside detector " +
                                std::to_string(geom.detector_px[0]) + "x" + std::to_string(geom.detector_px[1]));
    const double du = (static_cast<double>(u) - 0.5 * static_cast<double>(geom.detector_px[0] - 1)) *
                      geom.detector_spacing[0];
    const double dv = (static_cast<double>(v) - 0.5 * static_cast<double>(geom.detector_px[1] - 1)) *
                      geom.detector_spacing[1];
    return {geom.source(), geom.detector_center() + du * ProjectionGeometry::kUAxis + dv * ProjectionGeometry::kVAxis};
}

namespace detail {

/// cos/sin of an angle in degrees; exact for multiples of 90.
inline std::array<double, 2> cos_sin_degrees(double deg) {
    const double quarters = deg / 90.0;
    if (quarters == std::nearbyint(quarters)) {
        static constexpr std::array<std::array<double, 2>, 4> table{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
        auto q = static_cast<long long>(quarters) % 4;
        if (q < 0) q += 4;
        return table[static_cast<std::size_t>(q)];
    }
    const double rad = deg * std::numbers::pi / 180.0;
    return {std::cos(rad), std::sin(rad)};
}

}  // namespace detail

/// Rigid motion of the volume: Euler rotation in degrees about the volume
/// isocenter, applied x then y then z, followed by a translation in mm.
struct RigidTransform {
    Vec3 rotation;
    Vec3 translation;

    void validate() const {
        if (!is_finite(rotation) || !is_finite(translation))
            throw ContractViolation("transform parameters must be finite");
    }

    /// Rz * Ry * Rx. Positive angles turn counterclockwise looking down the axis.
    Mat3 rotation_matrix() const {
        const auto [cx, sx] = detail::cos_sin_degrees(rotation.x);
        const auto [cy, sy] = detail::cos_sin_degrees(rotation.y);
        const auto [cz, sz] = detail::cos_sin_degrees(rotation.z);
        Mat3 rx, ry, rz;
        rx.m = {1, 0, 0, 0, cx, -sx, 0, sx, cx};
        ry.m = {cy, 0, sy, 0, 1, 0, -sy, 0, cy};
        rz.m = {cz, -sz, 0, sz, cz, 0, 0, 0, 1};
        return rz * (ry * rx);
    }

    friend bool operator==(const RigidTransform&, const RigidTransform&) = default;
};

enum class View { frontal, lateral };

inline std::string_view to_string(View v) { return v == View::frontal ? "frontal" : "lateral"; }

inline View parse_view(std::string_view s) {
    if (s == "frontal") return View::frontal;
    if (s == "lateral") return View::lateral;
    throw ContractViolation("unknown view '" + std::string(s) + "' (expected frontal or lateral)");
}

/// Generation protocol presets: the volume is shifted 300 mm along +y, and the
/// lateral view additionally turns it by rz = -90 degrees.
inline RigidTransform preset_transform(View view) {
    RigidTransform xf;
    xf.translation = {0.0, 300.0, 0.0};
    if (view == View::lateral) xf.rotation = {0.0, 0.0, -90.0};
    return xf;
}

/// A volume placed in the world by a rigid transform. The voxel array stays in
/// its native frame; world points and rays are pulled back through the inverse motion.
class VolumePose {
public:
    VolumePose(const RigidTransform& xf, Vec3 pivot) : pivot_(pivot), translation_(xf.translation) {
        xf.validate();
        if (!is_finite(pivot)) throw ContractViolation("rotation pivot must be finite");
        rotation_ = xf.rotation_matrix();
        inverse_ = rotation_.transposed();
        pure_translation_ = rotation_ == Mat3::identity();
    }

    /// Native volume point -> world position after the motion.
    Vec3 forward(Vec3 native) const {
        if (pure_translation_) return native + translation_;
        return rotation_ * (native - pivot_) + pivot_ + translation_;
    }

    /// World point -> native volume point. Exact when there is no rotation.
    Vec3 to_native(Vec3 world) const {
        if (pure_translation_) return world - translation_;
        return inverse_ * (world - pivot_ - translation_) + pivot_;
    }

    Ray to_native(const Ray& ray) const { return {to_native(ray.s), to_native(ray.p)}; }

    const Mat3& rotation() const { return rotation_; }
    const Vec3& pivot() const { return pivot_; }

private:
    Vec3 pivot_;
    Vec3 translation_;
    Mat3 rotation_;
    Mat3 inverse_;
    bool pure_translation_ = false;
};

/// Resolved world-to-index map for a transformed volume.
template <typename Scalar>
class PlacedVolume {
public:
    PlacedVolume(BasicCtVolume<Scalar> volume, const RigidTransform& xf)
        : volume_(std::move(volume)), pose_(xf, volume_.center()) {}

    const BasicCtVolume<Scalar>& volume() const { return volume_; }
    const VolumePose& pose() const { return pose_; }

    Vec3 world_to_index(Vec3 world) const { return volume_.world_to_index(pose_.to_native(world)); }
    Ray native_ray(const Ray& ray) const { return pose_.to_native(ray); }

private:
    BasicCtVolume<Scalar> volume_;
    VolumePose pose_;
};

template <typename Scalar>
PlacedVolume<Scalar> apply_transform(const RigidTransform& xf, const BasicCtVolume<Scalar>& volume) {
    return PlacedVolume<Scalar>(volume, xf);
}

}  // namespace drr
