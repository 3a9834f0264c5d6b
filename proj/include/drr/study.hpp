#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drr/csv.hpp"
#include "drr/errors.hpp"

namespace drr {

inline constexpr std::size_t kLabelCount = 18;

/// Pathology classes in the dataset's canonical label order.
inline constexpr std::array<std::string_view, kLabelCount> kLabelNames{
    "Medical material",
    "Arterial wall calcification",
    "Cardiomegaly",
    "Pericardial effusion",
    "Coronary artery wall calcification",
    "Hiatal hernia",
    "Lymphadenopathy",
    "Emphysema",
    "Atelectasis",
    "Lung nodule",
    "Lung opacity",
    "Pulmonary fibrotic sequela",
    "Pleural effusion",
    "Mosaic attenuation pattern",
    "Peribronchial thickening",
    "Consolidation",
    "Bronchiectasis",
    "Interlobular septal thickening",
};

enum class Sex { male, female, unknown };
enum class Split { train, valid };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "valid"; }

inline std::optional<Split> parse_split(std::string_view s) {
    if (s == "train" || s == "training") return Split::train;
    if (s == "valid" || s == "validation" || s == "val") return Split::valid;
    return std::nullopt;
}

inline Sex parse_sex(std::string_view s) {
    if (s == "M" || s == "m" || s == "Male" || s == "male") return Sex::male;
    if (s == "F" || s == "f" || s == "Female" || s == "female") return Sex::female;
    return Sex::unknown;
}

/// Parses "47", "47.5" or DICOM-style "047Y". Empty or anything else yields nullopt.
inline std::optional<double> parse_age(std::string_view s) {
    if (!s.empty() && (s.back() == 'Y' || s.back() == 'y')) s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    try {
        std::size_t used = 0;
        const double v = std::stod(std::string(s), &used);
        if (used != s.size() || !std::isfinite(v) || v < 0) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

struct StudyRecord {
    std::string volume_name;
    std::filesystem::path volume_path;
    std::string patient_id;
    std::optional<double> age;
    Sex sex = Sex::unknown;
    std::array<std::uint8_t, kLabelCount> labels{};
    std::optional<std::string> findings_text;
    Split split = Split::train;
};

namespace detail {

inline std::uint8_t parse_label(std::string_view v, const std::string& where) {
    if (v == "1" || v == "1.0") return 1;
    if (v == "0" || v == "0.0") return 0;
    throw FormatError(where + ": label value '" + std::string(v) + "' is not 0 or 1");
}

}  // namespace detail

/// Label columns of a table, in canonical order. Throws naming the first missing class.
inline std::array<std::size_t, kLabelCount> label_columns(const csv::Table& t, const std::string& source) {
    std::array<std::size_t, kLabelCount> cols{};
    for (std::size_t n = 0; n < kLabelCount; ++n) {
        const auto c = t.column(kLabelNames[n]);
        if (!c) throw FormatError(source + ": missing class column '" + std::string(kLabelNames[n]) + "'");
        cols[n] = *c;
    }
    return cols;
}

inline std::size_t volume_name_column(const csv::Table& t, const std::string& source) {
    const auto c = t.column_any({"volume_name", "VolumeName"});
    if (!c) throw FormatError(source + ": missing column 'volume_name'");
    return *c;
}

/// Reads a study manifest: volume_name, split and the 18 class columns are
/// required; path, patient_id, age, sex and findings are optional. A missing
/// path defaults to `<manifest dir>/<volume_name>.nii.gz`; relative paths
/// resolve against the manifest directory. Findings may also come from a
/// separate reports CSV joined on volume_name.
inline std::vector<StudyRecord> load_manifest(const std::filesystem::path& manifest,
                                              const std::optional<std::filesystem::path>& reports = std::nullopt) {
    const std::string src = manifest.string();
    const csv::Table t = csv::read(manifest);
    const auto name_col = volume_name_column(t, src);
    const auto split_col = t.column("split");
    if (!split_col) throw FormatError(src + ": missing column 'split'");
    const auto labels = label_columns(t, src);
    const auto path_col = t.column_any({"path", "volume_path"});
    const auto pid_col = t.column_any({"patient_id", "PatientID"});
    const auto age_col = t.column_any({"age", "PatientAge"});
    const auto sex_col = t.column_any({"sex", "PatientSex"});
    const auto findings_col = t.column_any({"findings", "Findings_EN", "findings_text"});

    std::map<std::string, std::string, std::less<>> findings;
    if (reports) {
        const csv::Table r = csv::read(*reports);
        const auto rn = volume_name_column(r, reports->string());
        const auto rf = r.column_any({"findings", "Findings_EN", "findings_text"});
        if (!rf) throw FormatError(reports->string() + ": missing column 'findings'");
        for (const auto& row : r.rows) findings[row[rn]] = row[*rf];
    }

    const auto base = manifest.parent_path();
    std::vector<StudyRecord> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string where = src + ": row " + std::to_string(r + 1);
        StudyRecord rec;
        rec.volume_name = row[name_col];
        if (rec.volume_name.empty()) throw FormatError(where + ": empty volume_name");
        const auto split = parse_split(row[*split_col]);
        if (!split) throw FormatError(where + ": split '" + row[*split_col] + "' is not train or valid");
        rec.split = *split;
        for (std::size_t n = 0; n < kLabelCount; ++n) rec.labels[n] = detail::parse_label(row[labels[n]], where);
        const std::filesystem::path p =
            path_col && !row[*path_col].empty() ? std::filesystem::path(row[*path_col]) : std::filesystem::path(rec.volume_name + ".nii.gz");
        rec.volume_path = p.is_absolute() ? p : base / p;
        rec.patient_id = pid_col && !row[*pid_col].empty() ? row[*pid_col] : rec.volume_name;
        if (age_col) rec.age = parse_age(row[*age_col]);
        if (sex_col) rec.sex = parse_sex(row[*sex_col]);
        if (findings_col && !row[*findings_col].empty()) rec.findings_text = row[*findings_col];
        if (auto it = findings.find(rec.volume_name); it != findings.end()) rec.findings_text = it->second;
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace drr
