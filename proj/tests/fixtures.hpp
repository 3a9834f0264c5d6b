#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "drr/csv.hpp"
#include "drr/png_io.hpp"
#include "drr/study.hpp"
#include "drr/validation.hpp"

namespace drr::testing {

struct ManifestRow {
    std::string volume_name;
    std::string split = "train";
    std::uint32_t labels = 0;  ///< bit n set: class n positive
    std::optional<std::string> path{};
    std::string patient_id{};
    std::string age{};
    std::string sex{};
};

inline std::string manifest_csv(const std::vector<ManifestRow>& rows) {
    std::vector<std::string> header{"volume_name", "split", "path", "patient_id", "age", "sex"};
    for (auto n : kLabelNames) header.emplace_back(n);
    std::string out = csv::format_row(header);
    for (const auto& r : rows) {
        std::vector<std::string> f{r.volume_name, r.split, r.path.value_or(""), r.patient_id, r.age, r.sex};
        for (std::size_t n = 0; n < kLabelCount; ++n) f.push_back((r.labels >> n) & 1u ? "1" : "0");
        out += csv::format_row(f);
    }
    return out;
}

/// Writes `<dir>/<name>.nii.gz` as a small seeded-random phantom.
inline std::filesystem::path write_phantom_volume(const std::filesystem::path& dir, const std::string& name,
                                                  std::uint64_t seed, std::size_t n = 12) {
    namespace v = drr::validation;
    const auto vol = v::realize(v::Phantom{{{n, n, n}, {1.5, 1.5, 1.5}, {-9, -9, -9}}, v::SeededRandom{seed}});
    const auto path = dir / (name + ".nii.gz");
    v::write_nifti_fixture(vol, path);
    return path;
}

}  // namespace drr::testing
