#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "drr/drr.hpp"
#include "drr/validation.hpp"
#include "test_support.hpp"

using namespace drr;
using drr::testing::Gen;
using drr::testing::TempDir;
namespace v = drr::validation;

namespace {

ProjectionGeometry small_geometry(const CtVolume& vol, std::size_t px = 48, double spacing = 1.25) {
    ProjectionGeometry g = default_frontal_geometry(vol);
    g.detector_px = {px, px};
    g.detector_spacing = {spacing, spacing};
    return g;
}

double max_abs_diff(const EnergyImage& a, const EnergyImage& b) {
    double m = 0.0;
    for (std::size_t n = 0; n < a.energies.size(); ++n) m = std::max(m, std::abs(a.energies[n] - b.energies[n]));
    return m;
}

CtVolume centred_sphere(std::size_t n) {
    const double c = static_cast<double>(n) / 2.0;
    return v::realize(v::Phantom{{{n, n, n}, {1, 1, 1}, {}}, v::Sphere{{c, c, c}, 0.4 * c * 2 * 0.9, 800, -1000}});
}

EnergyImage energy_of(std::size_t w, std::size_t h, std::vector<double> e) {
    EnergyImage img;
    img.width = w;
    img.height = h;
    img.energies = std::move(e);
    return img;
}

}  // namespace

TEST(Render, EmptyVolumeGivesZeroImage) {
    const CtVolume vol({16, 16, 16}, {1, 1, 1}, {}, std::vector<float>(4096, -1000.0f));
    const auto img = render_drr(vol, small_geometry(vol), preset_transform(View::frontal), AttenuationModel{-100});
    EXPECT_EQ(img.width, 48u);
    EXPECT_TRUE(std::all_of(img.energies.begin(), img.energies.end(), [](double e) { return e == 0.0; }));
    const auto gray = normalize(img, {});
    EXPECT_TRUE(std::all_of(gray.pixels.begin(), gray.pixels.end(), [](auto p) { return p == 0; }));
}

TEST(Render, CentralPixelMatchesSingleTraversal) {
    const auto vol = v::realize(v::Phantom{{{20, 20, 20}, {1, 1, 1}, {}}, v::SeededRandom{3}});
    auto g = small_geometry(vol, 9, 2.0);
    const RigidTransform xf{{10, -20, 30}, {4, 300, -7}};
    const auto img = render_drr(vol, g, xf, AttenuationModel{});
    const VolumePose pose(xf, vol.center());
    for (std::size_t vv = 0; vv < 9; vv += 4)
        for (std::size_t u = 0; u < 9; u += 4) {
            const Ray native = pose.to_native(pixel_ray(g, u, vv));
            EXPECT_EQ(img.at(u, vv), ray_energy(native, vol, AttenuationModel{}));
        }
}

TEST(Render, SphereIsInvariantUnderQuarterTurns) {
    const auto vol = centred_sphere(24);
    const auto g = small_geometry(vol);
    const auto base = render_drr(vol, g, preset_transform(View::frontal), AttenuationModel{});
    EXPECT_GT(*std::max_element(base.energies.begin(), base.energies.end()), 0.0);
    for (double rz : {90.0, 180.0, 270.0, -90.0}) {
        RigidTransform xf = preset_transform(View::frontal);
        xf.rotation.z = rz;
        EXPECT_LE(max_abs_diff(render_drr(vol, g, xf, AttenuationModel{}), base), 1e-6) << rz;
    }
}

TEST(Render, SphereIsNearlyInvariantUnderAnyTurn) {
    // Voxelisation breaks exact symmetry for other angles; the images stay close.
    Gen gen(41);
    const auto vol = centred_sphere(32);
    const auto g = small_geometry(vol);
    const auto base = render_drr(vol, g, preset_transform(View::frontal), AttenuationModel{});
    double total = 0.0;
    for (double e : base.energies) total += e;
    for (int n = 0; n < 3; ++n) {
        RigidTransform xf = preset_transform(View::frontal);
        xf.rotation.z = gen.uniform(-180, 180);
        const auto img = render_drr(vol, g, xf, AttenuationModel{});
        double sum = 0.0, diff = 0.0;
        for (std::size_t k = 0; k < img.energies.size(); ++k) {
            sum += img.energies[k];
            diff += std::abs(img.energies[k] - base.energies[k]);
        }
        EXPECT_LT(std::abs(sum - total) / total, 0.03);
        EXPECT_LT(diff / total, 0.1);
    }
}

TEST(Render, LateralEqualsFrontalOfPermutedVolume) {
    const std::size_t n = 20;
    const auto vol = v::realize(v::Phantom{{{n, n, n}, {1.5, 1.5, 1.5}, {-7, 3, 11}}, v::SeededRandom{9}});
    std::vector<float> permuted(n * n * n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) permuted[i + n * (j + n * k)] = vol.at(n - 1 - j, i, k);
    const CtVolume turned(vol.dims(), vol.spacing(), vol.corner(), permuted);
    const auto g = small_geometry(vol, 40, 1.5);
    const auto lateral = render_drr(vol, g, preset_transform(View::lateral), AttenuationModel{});
    const auto frontal = render_drr(turned, g, preset_transform(View::frontal), AttenuationModel{});
    EXPECT_LE(max_abs_diff(lateral, frontal), 1e-6);
    // and the turn is not a no-op on this phantom
    EXPECT_GT(max_abs_diff(render_drr(vol, g, preset_transform(View::frontal), AttenuationModel{}), frontal), 1.0);
}

TEST(Render, WorkerCountDoesNotChangeBits) {
    const auto vol = v::realize(v::Phantom{{{24, 24, 24}, {1, 1, 1}, {}}, v::SeededRandom{5}});
    const auto g = small_geometry(vol, 64, 0.8);
    const RigidTransform xf{{7, 0, -33}, {1, 300, 2}};
    const auto one = render_drr(vol, g, xf, AttenuationModel{}, 1);
    for (std::size_t w : {2u, 3u, 8u}) {
        const auto many = render_drr(vol, g, xf, AttenuationModel{}, w);
        EXPECT_EQ(0, std::memcmp(one.energies.data(), many.energies.data(), one.energies.size() * sizeof(double)));
    }
}

TEST(Render, SourceInsideVolumeIsGeometryError) {
    const CtVolume vol({8, 8, 8}, {1, 1, 1}, {}, std::vector<float>(512, 0.0f));
    auto g = small_geometry(vol, 4);
    RigidTransform xf;
    xf.translation = {0, -1000, 0};
    EXPECT_THROW(render_drr(vol, g, xf, AttenuationModel{}), GeometryError);
    g.scd = 2;
    g.sdd = 3;
    EXPECT_THROW(render_drr(vol, g, RigidTransform{}, AttenuationModel{}), GeometryError);
}

TEST(Render, InvalidParametersAreContractViolations) {
    const CtVolume vol({8, 8, 8}, {1, 1, 1}, {}, std::vector<float>(512, 0.0f));
    auto g = small_geometry(vol, 4);
    EXPECT_THROW(render_drr(vol, g, RigidTransform{{NAN, 0, 0}, {}}, AttenuationModel{}), ContractViolation);
    EXPECT_THROW(render_drr(vol, g, RigidTransform{}, AttenuationModel{INFINITY}), ContractViolation);
    g.detector_px = {0, 0};
    EXPECT_THROW(render_drr(vol, g, RigidTransform{}, AttenuationModel{}), ContractViolation);
}

TEST(Normalize, WorkedExamples) {
    EXPECT_EQ(normalize(energy_of(3, 1, {0, 50, 100}), {}).pixels, (std::vector<std::uint8_t>{0, 128, 255}));
    NormalizationSpec inv;
    inv.invert = true;
    EXPECT_EQ(normalize(energy_of(2, 1, {0, 100}), inv).pixels, (std::vector<std::uint8_t>{255, 0}));
    EXPECT_EQ(normalize(energy_of(2, 2, {7, 7, 7, 7}), {}).pixels, (std::vector<std::uint8_t>(4, 0)));
    EXPECT_EQ(normalize(energy_of(2, 2, {7, 7, 7, 7}), inv).pixels, (std::vector<std::uint8_t>(4, 255)));
}

TEST(Normalize, FixedRangeClamps) {
    NormalizationSpec fixed;
    fixed.mode = NormalizationSpec::Mode::fixed_range;
    fixed.lo = 10;
    fixed.hi = 20;
    EXPECT_EQ(normalize(energy_of(4, 1, {0, 10, 15, 99}), fixed).pixels, (std::vector<std::uint8_t>{0, 0, 128, 255}));
    fixed.hi = 10;
    EXPECT_THROW(normalize(energy_of(1, 1, {0}), fixed), ContractViolation);
}

TEST(Normalize, MonotoneInEnergy) {
    Gen g(42);
    for (int n = 0; n < 50; ++n) {
        std::vector<double> e(200);
        for (auto& x : e) x = g.uniform(0, 1) < 0.1 ? 0.0 : g.uniform(0, 1e5);
        const auto img = energy_of(20, 10, e);
        const auto gray = normalize(img, {});
        for (int k = 0; k < 500; ++k) {
            const std::size_t a = g.index(200), b = g.index(200);
            if (e[a] <= e[b]) {
                EXPECT_LE(gray.pixels[a], gray.pixels[b]);
            }
        }
    }
}

TEST(Png, TinyImageRoundTrip) {
    TempDir dir("png");
    const GrayImage img{2, 2, {0, 85, 170, 255}};
    encode_png(img, dir / "t.png");
    EXPECT_EQ(decode_png(dir / "t.png"), img);
    const auto bytes = read_file(dir / "t.png");
    EXPECT_EQ(bytes.substr(1, 3), "PNG");
    EXPECT_EQ(static_cast<unsigned char>(bytes[24]), 8u);  // bit depth
    EXPECT_EQ(static_cast<unsigned char>(bytes[25]), 0u);  // colour type: grayscale
}

TEST(Png, FullSizeDimensions) {
    TempDir dir("png");
    Gen g(43);
    GrayImage img{512, 512, std::vector<std::uint8_t>(512 * 512)};
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(g.index(256));
    encode_png(img, dir / "big.png");
    const auto back = decode_png(dir / "big.png");
    EXPECT_EQ(back.width, 512u);
    EXPECT_EQ(back.height, 512u);
    EXPECT_EQ(back, img);
}

TEST(Png, BadInputs) {
    TempDir dir("png");
    EXPECT_THROW(encode_png(GrayImage{2, 2, {1, 2, 3}}, dir / "x.png"), ContractViolation);
    atomic_write_file(dir / "junk.png", "not a png");
    EXPECT_THROW(decode_png(dir / "junk.png"), FormatError);
    EXPECT_THROW(decode_png(dir / "absent.png"), IoError);
}

TEST(Sidecar, RoundTripsParametersAndReRenders) {
    TempDir dir("sidecar");
    Gen g(44);
    for (int n = 0; n < 5; ++n) {
        const auto vol = v::realize(v::Phantom{{{12, 10, 14}, {g.uniform(0.5, 2), 1.1, 0.9}, {3, -4, 5}},
                                               v::SeededRandom{static_cast<std::uint64_t>(n)}});
        write_raw(vol, dir / "vol.raw");
        auto geom = small_geometry(vol, 24 + g.index(16), g.uniform(0.5, 2));
        geom.scd = g.uniform(500, 1500);
        geom.sdd = geom.scd + g.uniform(100, 800);
        geom.detector_offset = {g.uniform(-3, 3), g.uniform(-3, 3)};
        const RigidTransform xf{{g.uniform(-30, 30), g.uniform(-30, 30), g.uniform(-180, 180)},
                                {g.uniform(-10, 10), 300, g.uniform(-10, 10)}};
        const AttenuationModel m{g.uniform(-500, 100)};
        NormalizationSpec norm;
        norm.invert = n % 2 == 1;
        const auto energy = render_drr(vol, geom, xf, m);
        const auto written = write_drr_outputs(energy, dir / "out.png", dir / "vol.raw", norm, true);
        const auto back = read_sidecar(dir / "out.png");
        EXPECT_EQ(back.parameters, energy.parameters);
        EXPECT_EQ(back.normalization, norm);
        EXPECT_EQ(back.volume_fingerprint, vol.fingerprint());
        EXPECT_EQ(back.width, geom.detector_px[0]);
        EXPECT_EQ(back.energy_dump, std::optional<std::string>("out.png.energy.f32"));
        EXPECT_EQ(json(back), json(written));
        EXPECT_EQ(rerender_from_sidecar(back), decode_png(dir / "out.png"));
    }
}

TEST(Sidecar, EnergyDumpIsLittleEndianFloat32) {
    TempDir dir("dump");
    const auto img = energy_of(3, 2, {0, 1.5, -2, 1e10, 3.25, 7});
    write_energy_dump(img, dir / "e.f32");
    const auto bytes = read_file(dir / "e.f32");
    ASSERT_EQ(bytes.size(), 24u);
    for (std::size_t n = 0; n < 6; ++n) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * n + b])) << (8 * b);
        EXPECT_EQ(std::bit_cast<float>(bits), static_cast<float>(img.energies[n]));
    }
}

TEST(Sidecar, ChangedVolumeIsDetected) {
    TempDir dir("sidecar");
    const auto vol = v::realize(v::Phantom{{{8, 8, 8}, {1, 1, 1}, {}}, v::SeededRandom{1}});
    write_raw(vol, dir / "vol.raw");
    const auto energy = render_drr(vol, small_geometry(vol, 8), RigidTransform{}, AttenuationModel{});
    write_drr_outputs(energy, dir / "o.png", dir / "vol.raw", {}, false);
    write_raw(v::realize(v::Phantom{{{8, 8, 8}, {1, 1, 1}, {}}, v::SeededRandom{2}}), dir / "vol.raw");
    EXPECT_THROW(rerender_from_sidecar(read_sidecar(dir / "o.png")), DataError);
}
