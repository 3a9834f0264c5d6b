#pragma once

// Batch generation over a study manifest: every record x view is rendered with
// the protocol defaults (threshold -100 HU, volume shifted 300 mm along +y,
// lateral views turned rz = -90), written as `<volume_name>_<view>.png` plus a
// provenance sidecar, and summarised in a JSON report.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "drr/csv.hpp"
#include "drr/errors.hpp"
#include "drr/geometry.hpp"
#include "drr/parallel.hpp"
#include "drr/png_io.hpp"
#include "drr/provenance.hpp"
#include "drr/render.hpp"
#include "drr/study.hpp"
#include "drr/volume_io.hpp"

namespace drr {

/// Optional replacements for the default frontal geometry.
struct GeometryOverrides {
    std::optional<std::array<std::size_t, 2>> size;
    std::optional<std::array<double, 2>> spacing;
    std::optional<double> scd;
    std::optional<double> sdd;

    ProjectionGeometry apply(ProjectionGeometry g) const {
        if (size) g.detector_px = *size;
        if (spacing) g.detector_spacing = *spacing;
        if (scd) g.scd = *scd;
        if (sdd) g.sdd = *sdd;
        return g;
    }
};

inline void to_json(json& j, const GeometryOverrides& o) {
    j = json::object();
    if (o.size) j["size"] = *o.size;
    if (o.spacing) j["spacing"] = *o.spacing;
    if (o.scd) j["scd"] = *o.scd;
    if (o.sdd) j["sdd"] = *o.sdd;
}

struct BatchConfig {
    std::filesystem::path out_dir;
    std::vector<View> views{View::frontal, View::lateral};
    std::size_t workers = 0;  ///< 0: DRR_WORKERS or hardware concurrency
    AttenuationModel model{-100.0};
    Vec3 translation{0.0, 300.0, 0.0};
    GeometryOverrides geometry;
    NormalizationSpec normalization;
    bool keep_energy = false;
    std::optional<std::filesystem::path> reports_csv;
    /// Report destination; defaults to `<out_dir>/batch_report.json`.
    std::optional<std::filesystem::path> report_path;
};

/// One record x view unit of work.
struct GenerationJob {
    StudyRecord record;
    View view = View::frontal;
    RigidTransform transform;
    AttenuationModel model;
    GeometryOverrides geometry;
    std::filesystem::path output;
};

enum class JobStatus { rendered, skipped, failed };

inline std::string_view to_string(JobStatus s) {
    switch (s) {
        case JobStatus::rendered: return "rendered";
        case JobStatus::skipped: return "skipped";
        default: return "failed";
    }
}

struct JobOutcome {
    std::string volume_name;
    View view = View::frontal;
    JobStatus status = JobStatus::failed;
    std::string reason;
    std::string output;  ///< PNG filename relative to the output directory
    double seconds = 0.0;
};

struct BatchReport {
    std::vector<JobOutcome> jobs;
    std::size_t rendered = 0;
    std::size_t skipped = 0;
    std::size_t failed = 0;
    std::size_t classifier_rows = 0;
    std::vector<std::string> classifier_warnings;

    int exit_code() const { return failed == 0 ? 0 : 2; }
};

inline void to_json(json& j, const JobOutcome& o) {
    j = json{{"volume_name", o.volume_name}, {"view", to_string(o.view)}, {"status", to_string(o.status)},
             {"output", o.output},           {"seconds", o.seconds}};
    if (!o.reason.empty()) j["reason"] = o.reason;
}

inline void from_json(const json& j, JobOutcome& o) {
    o.volume_name = j.at("volume_name").get<std::string>();
    o.view = parse_view(j.at("view").get<std::string>());
    const auto s = j.at("status").get<std::string>();
    o.status = s == "rendered" ? JobStatus::rendered : (s == "skipped" ? JobStatus::skipped : JobStatus::failed);
    o.output = j.at("output").get<std::string>();
    o.seconds = j.value("seconds", 0.0);
    o.reason = j.value("reason", std::string{});
}

inline void to_json(json& j, const BatchReport& r) {
    j = json{{"engine_version", kEngineVersion},
             {"summary",
              {{"total", r.jobs.size()}, {"rendered", r.rendered}, {"skipped", r.skipped}, {"failed", r.failed}}},
             {"jobs", r.jobs},
             {"classifier_manifest", {{"rows", r.classifier_rows}, {"warnings", r.classifier_warnings}}}};
}

inline void from_json(const json& j, BatchReport& r) {
    r.jobs = j.at("jobs").get<std::vector<JobOutcome>>();
    r.rendered = r.skipped = r.failed = 0;
    for (const auto& o : r.jobs) {
        if (o.status == JobStatus::rendered) ++r.rendered;
        else if (o.status == JobStatus::skipped) ++r.skipped;
        else ++r.failed;
    }
}

inline std::string output_name(const StudyRecord& rec, View view) {
    return rec.volume_name + "_" + std::string(to_string(view)) + ".png";
}

inline RigidTransform protocol_transform(View view, Vec3 translation) {
    RigidTransform xf = preset_transform(view);
    xf.translation = translation;
    return xf;
}

inline json study_json(const StudyRecord& rec) {
    json labels = json::object();
    for (std::size_t n = 0; n < kLabelCount; ++n) labels[std::string(kLabelNames[n])] = rec.labels[n];
    json j{{"volume_name", rec.volume_name},
           {"patient_id", rec.patient_id},
           {"split", to_string(rec.split)},
           {"labels", labels},
           {"label_vector", rec.labels}};
    if (rec.findings_text) j["findings"] = *rec.findings_text;
    return j;
}

/// Parameters a finished output must match to be reused on resume.
inline json job_request(const GenerationJob& job, const NormalizationSpec& norm, bool keep_energy) {
    return json{{"volume_path", std::filesystem::absolute(job.record.volume_path).lexically_normal().string()},
                {"view", to_string(job.view)},
                {"transform", job.transform},
                {"attenuation", job.model},
                {"geometry_overrides", job.geometry},
                {"normalization", norm},
                {"keep_energy", keep_energy},
                {"engine_version", kEngineVersion}};
}

inline bool output_is_current(const std::filesystem::path& png, const json& request) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(png, ec) || !std::filesystem::is_regular_file(sidecar_path(png), ec))
        return false;
    try {
        const Sidecar sc = read_sidecar(png);
        return sc.extra.contains("request") && sc.extra["request"] == request;
    } catch (const Error&) {
        return false;
    }
}

struct ClassifierManifest {
    std::string csv;
    std::size_t rows = 0;
    /// Volume names that have labels but no frontal image.
    std::vector<std::string> warnings;
};

/// One row per generated frontal image (path, split, 18 labels), sorted by volume_name.
inline ClassifierManifest export_classifier_manifest(const BatchReport& report, std::vector<StudyRecord> records) {
    std::map<std::string, std::string, std::less<>> frontal;
    for (const auto& o : report.jobs)
        if (o.view == View::frontal && o.status != JobStatus::failed) frontal[o.volume_name] = o.output;
    std::sort(records.begin(), records.end(),
              [](const StudyRecord& a, const StudyRecord& b) { return a.volume_name < b.volume_name; });

    ClassifierManifest out;
    std::vector<std::string> header{"path", "split"};
    for (auto n : kLabelNames) header.emplace_back(n);
    out.csv = csv::format_row(header);
    for (const auto& rec : records) {
        const auto it = frontal.find(rec.volume_name);
        if (it == frontal.end()) {
            out.warnings.push_back(rec.volume_name);
            continue;
        }
        std::vector<std::string> row{it->second, std::string(to_string(rec.split))};
        for (auto l : rec.labels) row.push_back(l ? "1" : "0");
        out.csv += csv::format_row(row);
        ++out.rows;
    }
    return out;
}

inline std::filesystem::path default_report_path(const std::filesystem::path& out_dir) {
    return out_dir / "batch_report.json";
}

/// Writes a file only when its content differs, so resumed runs leave outputs untouched.
inline void write_if_changed(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (std::filesystem::is_regular_file(path, ec)) {
        try {
            if (read_file(path) == content) return;
        } catch (const IoError&) {
        }
    }
    atomic_write_file(path, content);
}

/// Renders every record x view. Per-job failures are recorded, not thrown;
/// an unreadable manifest throws. Jobs run in parallel, one render per worker.
inline BatchReport run_batch(const std::filesystem::path& manifest, const BatchConfig& cfg) {
    if (cfg.views.empty()) throw ContractViolation("batch needs at least one view");
    cfg.model.validate();
    cfg.normalization.validate();
    const auto records = load_manifest(manifest, cfg.reports_csv);
    std::filesystem::create_directories(cfg.out_dir);

    std::vector<GenerationJob> jobs;
    for (const auto& rec : records)
        for (View v : cfg.views)
            jobs.push_back({rec, v, protocol_transform(v, cfg.translation), cfg.model, cfg.geometry,
                            cfg.out_dir / output_name(rec, v)});

    BatchReport report;
    report.jobs.resize(jobs.size());
    std::mutex log_mutex;
    parallel_for(jobs.size(), cfg.workers == 0 ? default_worker_count() : cfg.workers, [&](std::size_t n) {
        const auto& job = jobs[n];
        const auto started = std::chrono::steady_clock::now();
        JobOutcome o{job.record.volume_name, job.view, JobStatus::failed, {}, job.output.filename().string(), 0.0};
        const json request = job_request(job, cfg.normalization, cfg.keep_energy);
        try {
            if (output_is_current(job.output, request)) {
                o.status = JobStatus::skipped;
            } else {
                std::error_code ec;
                if (!std::filesystem::is_regular_file(job.record.volume_path, ec))
                    throw IoError("volume file not found: " + job.record.volume_path.string());
                const auto volume = load_volume<float>(job.record.volume_path);
                const auto geom = job.geometry.apply(default_frontal_geometry(volume));
                const auto energy = render_drr(volume, geom, job.transform, job.model, 1);
                write_drr_outputs(energy, job.output, job.record.volume_path, cfg.normalization, cfg.keep_energy,
                                  json{{"request", request}, {"view", to_string(job.view)}, {"study", study_json(job.record)}});
                o.status = JobStatus::rendered;
            }
        } catch (const std::exception& e) {
            o.status = JobStatus::failed;
            o.reason = e.what();
        }
        o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        std::lock_guard lock(log_mutex);
        report.jobs[n] = std::move(o);
    });

    for (const auto& o : report.jobs) {
        if (o.status == JobStatus::rendered) ++report.rendered;
        else if (o.status == JobStatus::skipped) ++report.skipped;
        else ++report.failed;
    }

    if (std::find(cfg.views.begin(), cfg.views.end(), View::frontal) != cfg.views.end()) {
        const auto cm = export_classifier_manifest(report, records);
        report.classifier_rows = cm.rows;
        report.classifier_warnings = cm.warnings;
        write_if_changed(cfg.out_dir / "classifier_manifest.csv", cm.csv);
    }
    atomic_write_file(cfg.report_path.value_or(default_report_path(cfg.out_dir)), json(report).dump(2) + "\n");
    return report;
}

}  // namespace drr
