// drr: render digitally reconstructed radiographs from CT volumes.
//
//   drr generate <volume> -o <png> [--threshold HU] [--translate tx ty tz]
//                [--rotate rx ry rz] [--view frontal|lateral] [--size W H]
//                [--spacing du dv] [--scd mm] [--sdd mm] [--keep-energy]
//   drr batch <manifest.csv> --out <dir> [--views frontal lateral] [--workers N]
//   drr stats <labels.csv> [--meta <meta.csv>] [--json <out.json>]
//   drr export <batch_report.json> <manifest.csv> -o <classifier.csv>
//   drr verify <png>
//
// Exit codes: 0 success, 1 fatal error, 2 partial failure.

#include <array>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "drr/drr.hpp"

namespace {

constexpr int kExitFatal = 1;

struct NormalizationFlags {
    bool invert = false;
    std::vector<double> range;

    drr::NormalizationSpec spec() const {
        drr::NormalizationSpec n;
        n.invert = invert;
        if (!range.empty()) {
            n.mode = drr::NormalizationSpec::Mode::fixed_range;
            n.lo = range[0];
            n.hi = range[1];
        }
        return n;
    }

    void add_to(CLI::App* app) {
        app->add_flag("--invert", invert, "Map high attenuation to dark (255 - g)");
        app->add_option("--range", range, "Fixed energy range lo hi instead of per-image min-max")->expected(2);
    }
};

struct GeometryFlags {
    std::vector<std::size_t> size;
    std::vector<double> spacing;
    std::optional<double> scd;
    std::optional<double> sdd;

    drr::GeometryOverrides overrides() const {
        drr::GeometryOverrides o;
        if (!size.empty()) o.size = std::array<std::size_t, 2>{size[0], size[1]};
        if (!spacing.empty()) o.spacing = std::array<double, 2>{spacing[0], spacing[1]};
        o.scd = scd;
        o.sdd = sdd;
        return o;
    }

    void add_to(CLI::App* app) {
        app->add_option("--size", size, "Detector size W H in pixels [512 512]")->expected(2);
        app->add_option("--spacing", spacing, "Detector pixel spacing du dv in mm [1 1]")->expected(2);
        app->add_option("--scd", scd, "Source to isocenter distance in mm [1000]");
        app->add_option("--sdd", sdd, "Source to detector distance in mm [1500]");
    }
};

drr::Vec3 to_vec(const std::vector<double>& v) { return {v[0], v[1], v[2]}; }

std::size_t worker_flag(const std::optional<std::size_t>& workers) {
    return workers && *workers > 0 ? *workers : drr::default_worker_count();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Digitally reconstructed radiographs from CT volumes (Siddon-Jacobs ray tracing)"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Render one DRR");
    std::string gen_volume;
    std::string gen_out;
    double gen_threshold = -100.0;
    std::vector<double> gen_translate;
    std::vector<double> gen_rotate;
    std::string gen_view;
    bool gen_keep_energy = false;
    std::optional<std::size_t> gen_workers;
    GeometryFlags gen_geom;
    NormalizationFlags gen_norm;
    gen->add_option("volume", gen_volume, "CT volume (.nii, .nii.gz or .raw)")->required();
    gen->add_option("-o,--output", gen_out, "Output PNG")->required();
    gen->add_option("--threshold", gen_threshold, "HU threshold; voxels at or below contribute nothing [-100]");
    gen->add_option("--translate", gen_translate, "Volume translation tx ty tz in mm")->expected(3);
    gen->add_option("--rotate", gen_rotate, "Volume rotation rx ry rz in degrees (x, then y, then z)")->expected(3);
    gen->add_option("--view", gen_view, "Protocol preset: frontal (t = 0 300 0) or lateral (adds rz = -90)")
        ->check(CLI::IsMember({"frontal", "lateral"}));
    gen->add_flag("--keep-energy", gen_keep_energy, "Also write raw float32 energies to <png>.energy.f32");
    gen->add_option("--workers", gen_workers, "Render threads [DRR_WORKERS or all cores]");
    gen_geom.add_to(gen);
    gen_norm.add_to(gen);

    // batch
    auto* batch = app.add_subcommand("batch", "Render every manifest record in the requested views");
    std::string batch_manifest;
    std::string batch_out;
    std::vector<std::string> batch_views{"frontal", "lateral"};
    std::optional<std::size_t> batch_workers;
    std::optional<std::string> batch_reports;
    std::optional<std::string> batch_report_path;
    double batch_threshold = -100.0;
    std::vector<double> batch_translate{0.0, 300.0, 0.0};
    bool batch_keep_energy = false;
    GeometryFlags batch_geom;
    NormalizationFlags batch_norm;
    batch->add_option("manifest", batch_manifest, "Manifest CSV")->required();
    batch->add_option("--out", batch_out, "Output directory")->required();
    batch->add_option("--views", batch_views, "Views to render [frontal lateral]")
        ->check(CLI::IsMember({"frontal", "lateral"}));
    batch->add_option("--workers", batch_workers, "Concurrent jobs [DRR_WORKERS or all cores]");
    batch->add_option("--reports", batch_reports, "Findings CSV joined on volume_name");
    batch->add_option("--report", batch_report_path, "Report JSON path [<out>/batch_report.json]");
    batch->add_option("--threshold", batch_threshold, "HU threshold [-100]");
    batch->add_option("--translate", batch_translate, "Volume translation in mm [0 300 0]")->expected(3);
    batch->add_flag("--keep-energy", batch_keep_energy, "Also write raw float32 energies");
    batch_geom.add_to(batch);
    batch_norm.add_to(batch);

    // stats
    auto* stats = app.add_subcommand("stats", "Label distribution and patient statistics");
    std::string stats_labels;
    std::optional<std::string> stats_meta;
    std::optional<std::string> stats_json_path;
    double stats_bin = 5.0;
    stats->add_option("labels", stats_labels, "Label CSV (volume_name, split, 18 classes)")->required();
    stats->add_option("--meta", stats_meta, "Metadata CSV with age/sex, joined on volume_name");
    stats->add_option("--json", stats_json_path, "Also write the statistics as JSON");
    stats->add_option("--bin-width", stats_bin, "Age histogram bin width in years [5]");

    // export
    auto* exp = app.add_subcommand("export", "Classifier manifest from a batch report");
    std::string exp_report;
    std::string exp_manifest;
    std::string exp_out;
    exp->add_option("report", exp_report, "batch_report.json")->required();
    exp->add_option("manifest", exp_manifest, "Manifest or label CSV")->required();
    exp->add_option("-o,--output", exp_out, "Output CSV")->required();

    // verify
    auto* verify = app.add_subcommand("verify", "Re-render a PNG from its sidecar and compare");
    std::string verify_png;
    verify->add_option("png", verify_png, "Rendered PNG with a .json sidecar")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            drr::RigidTransform xf;
            if (!gen_view.empty()) xf = drr::preset_transform(drr::parse_view(gen_view));
            if (!gen_translate.empty()) xf.translation = to_vec(gen_translate);
            if (!gen_rotate.empty()) xf.rotation = to_vec(gen_rotate);
            const auto volume = drr::load_volume<float>(gen_volume);
            const auto geom = gen_geom.overrides().apply(drr::default_frontal_geometry(volume));
            const auto energy = drr::render_drr(volume, geom, xf, drr::AttenuationModel{gen_threshold},
                                                worker_flag(gen_workers));
            drr::json extra = drr::json::object();
            if (!gen_view.empty()) extra["view"] = gen_view;
            drr::write_drr_outputs(energy, gen_out, gen_volume, gen_norm.spec(), gen_keep_energy, extra);
            std::cout << "wrote " << gen_out << " (" << energy.width << "x" << energy.height << ")\n";
            return 0;
        }
        if (*batch) {
            drr::BatchConfig cfg;
            cfg.out_dir = batch_out;
            cfg.views.clear();
            for (const auto& v : batch_views) cfg.views.push_back(drr::parse_view(v));
            cfg.workers = worker_flag(batch_workers);
            cfg.model.threshold = batch_threshold;
            cfg.translation = to_vec(batch_translate);
            cfg.geometry = batch_geom.overrides();
            cfg.normalization = batch_norm.spec();
            cfg.keep_energy = batch_keep_energy;
            if (batch_reports) cfg.reports_csv = *batch_reports;
            if (batch_report_path) cfg.report_path = *batch_report_path;
            const auto report = drr::run_batch(batch_manifest, cfg);
            for (const auto& o : report.jobs)
                if (o.status == drr::JobStatus::failed)
                    std::cerr << "failed: " << o.volume_name << " " << drr::to_string(o.view) << ": " << o.reason << '\n';
            std::cout << "jobs: " << report.jobs.size() << ", rendered: " << report.rendered
                      << ", skipped: " << report.skipped << ", failed: " << report.failed << '\n';
            return report.exit_code();
        }
        if (*stats) {
            drr::StatsOptions opt;
            opt.histogram_bin_width = stats_bin;
            const auto s = drr::dataset_stats(stats_labels,
                                              stats_meta ? std::optional<std::filesystem::path>(*stats_meta) : std::nullopt,
                                              opt);
            std::cout << drr::stats_table(s);
            if (stats_json_path) drr::atomic_write_file(*stats_json_path, drr::stats_json(s).dump(2) + "\n");
            return 0;
        }
        if (*exp) {
            const auto report = drr::json::parse(drr::read_file(exp_report)).get<drr::BatchReport>();
            const auto cm = drr::export_classifier_manifest(report, drr::load_manifest(exp_manifest));
            drr::atomic_write_file(exp_out, cm.csv);
            std::cout << "rows: " << cm.rows << ", warnings: " << cm.warnings.size() << '\n';
            for (const auto& w : cm.warnings) std::cerr << "warning: no frontal image for " << w << '\n';
            return cm.warnings.empty() ? 0 : 2;
        }
        if (*verify) {
            const auto sc = drr::read_sidecar(verify_png);
            const auto expected = drr::decode_png(verify_png);
            const auto again = drr::rerender_from_sidecar<float>(sc);
            if (again == expected) {
                std::cout << "identical\n";
                return 0;
            }
            std::cout << "differs\n";
            return 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "drr: " << e.what() << '\n';
        return kExitFatal;
    }
    return kExitFatal;
}
