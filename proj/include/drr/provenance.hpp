#pragma once

// JSON provenance sidecars: every PNG at `x.png` gets `x.png.json` recording the
// source volume, geometry, transform, attenuation model and intensity mapping,
// enough to re-render the identical image.

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "drr/errors.hpp"
#include "drr/geometry.hpp"
#include "drr/png_io.hpp"
#include "drr/render.hpp"
#include "drr/siddon.hpp"
#include "drr/volume_io.hpp"

namespace drr {

using json = nlohmann::json;

inline json vec_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline void to_json(json& j, const ProjectionGeometry& g) {
    j = json{{"scd", g.scd},
             {"sdd", g.sdd},
             {"detector_px", g.detector_px},
             {"detector_spacing", g.detector_spacing},
             {"detector_offset", g.detector_offset},
             {"isocenter", vec_json(g.isocenter)},
             {"beam_axis", vec_json(ProjectionGeometry::kBeamAxis)},
             {"u_axis", vec_json(ProjectionGeometry::kUAxis)},
             {"v_axis", vec_json(ProjectionGeometry::kVAxis)}};
}

inline void from_json(const json& j, ProjectionGeometry& g) {
    g.scd = j.at("scd").get<double>();
    g.sdd = j.at("sdd").get<double>();
    g.detector_px = j.at("detector_px").get<std::array<std::size_t, 2>>();
    g.detector_spacing = j.at("detector_spacing").get<std::array<double, 2>>();
    g.detector_offset = j.at("detector_offset").get<std::array<double, 2>>();
    g.isocenter = vec_from_json(j.at("isocenter"));
}

inline void to_json(json& j, const RigidTransform& xf) {
    j = json{{"rotation_deg", vec_json(xf.rotation)},
             {"translation_mm", vec_json(xf.translation)},
             {"rotation_order", "x,y,z about volume center"}};
}

inline void from_json(const json& j, RigidTransform& xf) {
    xf.rotation = vec_from_json(j.at("rotation_deg"));
    xf.translation = vec_from_json(j.at("translation_mm"));
}

inline void to_json(json& j, const AttenuationModel& m) {
    j = json{{"threshold_hu", m.threshold}, {"mu", "max(hu - threshold, 0)"}};
}

inline void from_json(const json& j, AttenuationModel& m) { m.threshold = j.at("threshold_hu").get<double>(); }

inline void to_json(json& j, const NormalizationSpec& n) {
    j = json{{"mode", n.mode == NormalizationSpec::Mode::min_max ? "min-max" : "fixed-range"}, {"invert", n.invert}};
    if (n.mode == NormalizationSpec::Mode::fixed_range) j["range"] = {n.lo, n.hi};
}

inline void from_json(const json& j, NormalizationSpec& n) {
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "min-max") {
        n.mode = NormalizationSpec::Mode::min_max;
    } else if (mode == "fixed-range") {
        n.mode = NormalizationSpec::Mode::fixed_range;
        n.lo = j.at("range").at(0).get<double>();
        n.hi = j.at("range").at(1).get<double>();
    } else {
        throw FormatError("unknown normalization mode '" + mode + "'");
    }
    n.invert = j.at("invert").get<bool>();
}

inline void to_json(json& j, const RenderParameters& p) {
    j = json{{"geometry", p.geometry}, {"transform", p.transform}, {"attenuation", p.model}};
}

inline void from_json(const json& j, RenderParameters& p) {
    p.geometry = j.at("geometry").get<ProjectionGeometry>();
    p.transform = j.at("transform").get<RigidTransform>();
    p.model = j.at("attenuation").get<AttenuationModel>();
}

inline std::string fingerprint_hex(std::uint64_t f) {
    std::array<char, 17> buf{};
    std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(f));
    return buf.data();
}

struct Sidecar {
    std::string engine_version = kEngineVersion;
    std::string volume_path;
    std::uint64_t volume_fingerprint = 0;
    RenderParameters parameters;
    NormalizationSpec normalization;
    std::size_t width = 0;
    std::size_t height = 0;
    std::array<double, 2> energy_range{0.0, 0.0};
    std::optional<std::string> energy_dump;
    /// Caller-supplied sections (batch request, study record); kept verbatim.
    json extra = json::object();
};

inline void to_json(json& j, const Sidecar& s) {
    j = json{{"engine", "drr"},
             {"engine_version", s.engine_version},
             {"volume", {{"path", s.volume_path}, {"fingerprint", fingerprint_hex(s.volume_fingerprint)}}},
             {"parameters", s.parameters},
             {"normalization", s.normalization},
             {"image", {{"width", s.width}, {"height", s.height}, {"format", "png-gray8"}, {"layout", "row-major, u fastest, v=0 top"}}},
             {"energy_range", s.energy_range}};
    if (s.energy_dump)
        j["energy_dump"] = {{"path", *s.energy_dump},
                            {"dtype", "float32-le"},
                            {"width", s.width},
                            {"height", s.height},
                            {"layout", "row-major, u fastest"}};
    for (const auto& [k, v] : s.extra.items()) j[k] = v;
}

inline void from_json(const json& j, Sidecar& s) {
    s.engine_version = j.at("engine_version").get<std::string>();
    s.volume_path = j.at("volume").at("path").get<std::string>();
    s.volume_fingerprint = std::stoull(j.at("volume").at("fingerprint").get<std::string>(), nullptr, 16);
    s.parameters = j.at("parameters").get<RenderParameters>();
    s.normalization = j.at("normalization").get<NormalizationSpec>();
    s.width = j.at("image").at("width").get<std::size_t>();
    s.height = j.at("image").at("height").get<std::size_t>();
    s.energy_range = j.at("energy_range").get<std::array<double, 2>>();
    if (j.contains("energy_dump")) s.energy_dump = j.at("energy_dump").at("path").get<std::string>();
    s.extra = json::object();
    for (const auto& [k, v] : j.items())
        if (k != "engine" && k != "engine_version" && k != "volume" && k != "parameters" && k != "normalization" &&
            k != "image" && k != "energy_range" && k != "energy_dump")
            s.extra[k] = v;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& png) {
    std::filesystem::path p = png;
    p += ".json";
    return p;
}

inline std::filesystem::path energy_dump_path(const std::filesystem::path& png) {
    std::filesystem::path p = png;
    p += ".energy.f32";
    return p;
}

inline Sidecar read_sidecar(const std::filesystem::path& png) {
    const auto path = sidecar_path(png);
    try {
        return json::parse(read_file(path)).get<Sidecar>();
    } catch (const json::exception& e) {
        throw FormatError("'" + path.string() + "': " + e.what());
    }
}

/// Normalizes and writes `png`, its sidecar and, optionally, the float32 energy dump.
inline Sidecar write_drr_outputs(const EnergyImage& energy, const std::filesystem::path& png,
                                 const std::filesystem::path& volume_path, const NormalizationSpec& normalization,
                                 bool keep_energy, const json& extra = json::object()) {
    Sidecar sc;
    sc.volume_path = std::filesystem::absolute(volume_path).lexically_normal().string();
    sc.volume_fingerprint = energy.volume_fingerprint;
    sc.parameters = energy.parameters;
    sc.normalization = normalization;
    sc.width = energy.width;
    sc.height = energy.height;
    if (!energy.energies.empty()) {
        const auto [mn, mx] = std::minmax_element(energy.energies.begin(), energy.energies.end());
        sc.energy_range = {*mn, *mx};
    }
    sc.extra = extra;
    encode_png(normalize(energy, normalization), png);
    if (keep_energy) {
        write_energy_dump(energy, energy_dump_path(png));
        sc.energy_dump = energy_dump_path(png).filename().string();
    }
    atomic_write_file(sidecar_path(png), json(sc).dump(2) + "\n");
    return sc;
}

/// Re-renders the image described by a sidecar. Throws DataError when the
/// volume on disk no longer matches the recorded fingerprint.
template <typename Scalar = float>
GrayImage rerender_from_sidecar(const Sidecar& sc, std::size_t workers = 0) {
    const auto volume = load_volume<Scalar>(sc.volume_path);
    if (volume.fingerprint() != sc.volume_fingerprint)
        throw DataError("volume '" + sc.volume_path + "' does not match the recorded fingerprint");
    const auto energy =
        render_drr(volume, sc.parameters.geometry, sc.parameters.transform, sc.parameters.model, workers);
    return normalize(energy, sc.normalization);
}

}  // namespace drr
