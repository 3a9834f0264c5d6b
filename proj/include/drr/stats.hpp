#pragma once

// Dataset summaries: per-class positive counts by split with the valid/train
// ratio, and per-split patient demographics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "drr/csv.hpp"
#include "drr/errors.hpp"
#include "drr/provenance.hpp"
#include "drr/study.hpp"

namespace drr {

struct AgeSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double stddev = 0.0;  ///< sample (n - 1) standard deviation
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double min = 0.0;
    double max = 0.0;
};

namespace detail {

inline double median_of_sorted(const std::vector<double>& v, std::size_t begin, std::size_t end) {
    const std::size_t n = end - begin;
    const std::size_t mid = begin + n / 2;
    return n % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace detail

/// Quartiles are medians of the lower and upper halves, excluding the overall
/// median when n is odd; {34, 45, 61} gives Q1 = 34, median 45, Q3 = 61.
inline AgeSummary summarize_ages(std::vector<double> ages) {
    AgeSummary s;
    s.n = ages.size();
    if (ages.empty()) return s;
    std::sort(ages.begin(), ages.end());
    const double n = static_cast<double>(ages.size());
    s.mean = std::accumulate(ages.begin(), ages.end(), 0.0) / n;
    if (ages.size() > 1) {
        double ss = 0.0;
        for (double a : ages) ss += (a - s.mean) * (a - s.mean);
        s.stddev = std::sqrt(ss / (n - 1.0));
    }
    s.median = detail::median_of_sorted(ages, 0, ages.size());
    if (ages.size() == 1) {
        s.q1 = s.q3 = ages.front();
    } else {
        const std::size_t half = ages.size() / 2;
        s.q1 = detail::median_of_sorted(ages, 0, half);
        s.q3 = detail::median_of_sorted(ages, ages.size() - half, ages.size());
    }
    s.min = ages.front();
    s.max = ages.back();
    return s;
}

struct ClassCount {
    std::string name;
    std::size_t train = 0;
    std::size_t valid = 0;
    std::optional<double> ratio;  ///< round(valid / train, 3); absent when train == 0
};

struct SplitSummary {
    std::size_t patients = 0;
    std::size_t volumes = 0;
    AgeSummary age;
    std::size_t male = 0;
    std::size_t female = 0;
    std::size_t sex_unknown = 0;
    std::vector<std::size_t> age_histogram;
};

struct DatasetStats {
    std::vector<ClassCount> classes;
    std::map<Split, SplitSummary> splits;
    double histogram_bin_width = 5.0;
    double histogram_max = 105.0;
    std::size_t ages_missing = 0;
    std::size_t ages_unparseable = 0;
};

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

struct StatsOptions {
    double histogram_bin_width = 5.0;
    double histogram_max = 105.0;
};

/// Label CSV: volume_name, split and the 18 classes. Age and sex come from the
/// optional metadata CSV (joined on volume_name) or from columns in the label
/// CSV. Demographics count each patient once (patient_id, else volume_name).
inline DatasetStats dataset_stats(const std::filesystem::path& labels_csv,
                                  const std::optional<std::filesystem::path>& metadata_csv = std::nullopt,
                                  const StatsOptions& opt = {}) {
    if (!(opt.histogram_bin_width > 0.0) || !(opt.histogram_max > 0.0))
        throw ContractViolation("histogram bin width and max must be > 0");
    const std::string src = labels_csv.string();
    const csv::Table t = csv::read(labels_csv);
    const auto cols = label_columns(t, src);
    const auto split_col = t.column("split");
    if (!split_col) throw FormatError(src + ": missing column 'split'");
    const auto name_col = t.column_any({"volume_name", "VolumeName"});

    struct Demo {
        std::string patient;
        std::string age;
        bool has_age = false;
        std::string sex;
    };
    std::map<std::string, Demo, std::less<>> meta;
    auto add_demo = [&](const csv::Table& m, const std::string& msrc, bool required) {
        const auto n = m.column_any({"volume_name", "VolumeName"});
        if (!n) {
            if (required) throw FormatError(msrc + ": missing column 'volume_name'");
            return;
        }
        const auto p = m.column_any({"patient_id", "PatientID"});
        const auto a = m.column_any({"age", "PatientAge"});
        const auto s = m.column_any({"sex", "PatientSex"});
        for (const auto& row : m.rows) {
            Demo& d = meta[row[*n]];
            if (p && !row[*p].empty()) d.patient = row[*p];
            if (a) {
                d.age = row[*a];
                d.has_age = true;
            }
            if (s) d.sex = row[*s];
        }
    };
    add_demo(t, src, false);
    if (metadata_csv) add_demo(csv::read(*metadata_csv), metadata_csv->string(), true);

    DatasetStats out;
    out.histogram_bin_width = opt.histogram_bin_width;
    out.histogram_max = opt.histogram_max;
    for (auto n : kLabelNames) out.classes.push_back({std::string(n), 0, 0, std::nullopt});

    std::map<Split, std::map<std::string, Demo>> patients;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string where = src + ": row " + std::to_string(r + 1);
        const auto split = parse_split(row[*split_col]);
        if (!split) throw FormatError(where + ": split '" + row[*split_col] + "' is not train or valid");
        for (std::size_t n = 0; n < kLabelCount; ++n)
            if (detail::parse_label(row[cols[n]], where)) {
                auto& c = out.classes[n];
                (*split == Split::train ? c.train : c.valid) += 1;
            }
        SplitSummary& ss = out.splits[*split];
        ++ss.volumes;
        Demo d;
        if (name_col) {
            d.patient = row[*name_col];
            if (auto it = meta.find(row[*name_col]); it != meta.end()) {
                d = it->second;
                if (d.patient.empty()) d.patient = row[*name_col];
            }
        } else {
            d.patient = "row" + std::to_string(r);
        }
        patients[*split].try_emplace(d.patient, d);
    }

    for (auto& c : out.classes)
        if (c.train > 0) c.ratio = round3(static_cast<double>(c.valid) / static_cast<double>(c.train));

    const auto bins = static_cast<std::size_t>(std::ceil(opt.histogram_max / opt.histogram_bin_width));
    for (auto& [split, ss] : out.splits) {
        ss.age_histogram.assign(bins, 0);
        std::vector<double> ages;
        for (const auto& [pid, d] : patients[split]) {
            ++ss.patients;
            switch (parse_sex(d.sex)) {
                case Sex::male: ++ss.male; break;
                case Sex::female: ++ss.female; break;
                default: ++ss.sex_unknown;
            }
            if (!d.has_age || d.age.empty()) {
                ++out.ages_missing;
                continue;
            }
            const auto age = parse_age(d.age);
            if (!age) {
                ++out.ages_unparseable;
                continue;
            }
            ages.push_back(*age);
            const auto bin = static_cast<std::size_t>(std::floor(*age / opt.histogram_bin_width));
            ss.age_histogram[std::min(bin, bins - 1)] += 1;
        }
        ss.age = summarize_ages(std::move(ages));
    }
    return out;
}

inline json stats_json(const DatasetStats& s) {
    json classes = json::array();
    for (const auto& c : s.classes) {
        json e{{"class", c.name}, {"train", c.train}, {"valid", c.valid}};
        e["ratio"] = c.ratio ? json(*c.ratio) : json(nullptr);
        classes.push_back(e);
    }
    json splits = json::object();
    for (const auto& [split, ss] : s.splits) {
        json hist = json::array();
        for (std::size_t b = 0; b < ss.age_histogram.size(); ++b)
            hist.push_back({{"lo", static_cast<double>(b) * s.histogram_bin_width},
                            {"hi", static_cast<double>(b + 1) * s.histogram_bin_width},
                            {"count", ss.age_histogram[b]}});
        splits[std::string(to_string(split))] = {
            {"patients", ss.patients},
            {"volumes", ss.volumes},
            {"age",
             {{"n", ss.age.n},
              {"mean", ss.age.mean},
              {"std", ss.age.stddev},
              {"median", ss.age.median},
              {"q1", ss.age.q1},
              {"q3", ss.age.q3},
              {"min", ss.age.min},
              {"max", ss.age.max}}},
            {"sex", {{"M", ss.male}, {"F", ss.female}, {"unknown", ss.sex_unknown}}},
            {"age_histogram", hist}};
    }
    return json{{"ratio_definition", "valid / train, rounded to 3 decimals"},
                {"quartile_method", "medians of lower/upper halves, median excluded for odd n"},
                {"std_definition", "sample (n - 1)"},
                {"classes", classes},
                {"splits", splits},
                {"ages_missing", s.ages_missing},
                {"ages_unparseable", s.ages_unparseable}};
}

inline std::string stats_table(const DatasetStats& s) {
    std::ostringstream os;
    std::size_t w = 5;
    for (const auto& c : s.classes) w = std::max(w, c.name.size());
    os << "Ratio = valid / train, rounded to 3 decimals\n";
    os << std::left << std::setw(static_cast<int>(w)) << "Class" << std::right << std::setw(10) << "Training"
       << std::setw(12) << "Validation" << std::setw(8) << "Ratio" << '\n';
    for (const auto& c : s.classes) {
        os << std::left << std::setw(static_cast<int>(w)) << c.name << std::right << std::setw(10) << c.train
           << std::setw(12) << c.valid << std::setw(8);
        if (c.ratio) os << std::fixed << std::setprecision(3) << *c.ratio << std::defaultfloat;
        else os << "n/a";
        os << '\n';
    }
    for (const auto& [split, ss] : s.splits) {
        os << '\n' << to_string(split) << ": N = " << ss.patients << " patients (" << ss.volumes << " volumes)\n";
        os << std::fixed << std::setprecision(2);
        os << "  age: n = " << ss.age.n << ", mean = " << ss.age.mean << ", std = " << ss.age.stddev
           << ", median = " << ss.age.median << ", Q1 = " << ss.age.q1 << ", Q3 = " << ss.age.q3
           << ", range = " << ss.age.min << " - " << ss.age.max << '\n';
        os << std::defaultfloat;
        os << "  sex: M = " << ss.male << ", F = " << ss.female << ", unknown = " << ss.sex_unknown << '\n';
    }
    if (s.ages_missing || s.ages_unparseable)
        os << "\nexcluded ages: missing = " << s.ages_missing << ", unparseable = " << s.ages_unparseable << '\n';
    return os.str();
}

}  // namespace drr
