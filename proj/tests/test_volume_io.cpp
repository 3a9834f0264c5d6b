#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>

#include "drr/validation.hpp"
#include "drr/volume_io.hpp"
#include "test_support.hpp"

using namespace drr;
using drr::testing::Gen;
using drr::testing::TempDir;
namespace v = drr::validation;

namespace {

CtVolume ramp_4x5x6() {
    std::vector<float> vox;
    for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < 4; ++i) vox.push_back(static_cast<float>(i + 10 * j + 100 * k));
    return CtVolume({4, 5, 6}, {1, 1, 1}, {-0.5, -0.5, -0.5}, std::move(vox));
}

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
void poke(std::vector<unsigned char>& bytes, std::size_t off, T value) {
    std::memcpy(bytes.data() + off, &value, sizeof(T));
}

template <typename E>
std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const E& e) {
        return e.what();
    }
    return "<no exception>";
}

}  // namespace

TEST(CtVolume, RejectsBadInvariants) {
    EXPECT_THROW(CtVolume({0, 1, 1}, {1, 1, 1}, {}, std::vector<float>{}), ContractViolation);
    EXPECT_THROW(CtVolume({1, 1, 1}, {1, 0, 1}, {}, std::vector<float>{0}), ContractViolation);
    EXPECT_THROW(CtVolume({1, 1, 1}, {1, 1, -2}, {}, std::vector<float>{0}), ContractViolation);
    EXPECT_THROW(CtVolume({2, 1, 1}, {1, 1, 1}, {}, std::vector<float>{0}), ContractViolation);
    const std::string msg = message_of<DataError>([] {
        CtVolume({2, 2, 1}, {1, 1, 1}, {}, std::vector<float>{0, 0, 0, std::numeric_limits<float>::quiet_NaN()});
    });
    EXPECT_NE(msg.find("(1, 1, 0)"), std::string::npos) << msg;
}

TEST(CtVolume, DirectionMustBeSignedPermutation) {
    Mat3 swap_xy;
    swap_xy.m = {0, 1, 0, 1, 0, 0, 0, 0, -1};
    EXPECT_NO_THROW(CtVolume({1, 1, 1}, {1, 1, 1}, {}, swap_xy, std::vector<float>{0}));
    Mat3 oblique;
    const double c = std::cos(0.3), s = std::sin(0.3);
    oblique.m = {c, -s, 0, s, c, 0, 0, 0, 1};
    EXPECT_THROW(CtVolume({1, 1, 1}, {1, 1, 1}, {}, oblique, std::vector<float>{0}), UnsupportedFormatError);
    Mat3 skew;
    skew.m = {1, 0.5, 0, 0, 1, 0, 0, 0, 1};
    EXPECT_THROW(CtVolume({1, 1, 1}, {1, 1, 1}, {}, skew, std::vector<float>{0}), ContractViolation);
}

TEST(CtVolume, IsocenterOfClinicalGrid) {
    const CtVolume vol({512, 512, 300}, {0.75, 0.75, 1.5}, {0, 0, 0}, std::vector<float>(512 * 512 * 300, 0.0f));
    EXPECT_EQ(vol.center(), (Vec3{192, 192, 225}));
}

TEST(CtVolume, IdentityWorldToIndexAtVoxelCentres) {
    Gen g(11);
    const CtVolume vol({7, 5, 3}, {0.7, 1.3, 2.5}, {-4, 2, 9}, std::vector<float>(105, 0.0f));
    for (int n = 0; n < 50; ++n) {
        const std::size_t i = g.index(7), j = g.index(5), k = g.index(3);
        const Vec3 c = vol.world_to_index(vol.voxel_center(i, j, k));
        EXPECT_NEAR(c.x, i + 0.5, 1e-12);
        EXPECT_NEAR(c.y, j + 0.5, 1e-12);
        EXPECT_NEAR(c.z, k + 0.5, 1e-12);
    }
}

TEST(Nifti, CornerIsHalfVoxelBeforeOrigin) {
    TempDir dir("nifti");
    const CtVolume vol({3, 3, 3}, {1, 1, 1}, {-0.5, -0.5, -0.5}, std::vector<float>(27, 0.0f));
    v::write_nifti_fixture(vol, dir / "a.nii");
    const auto back = load_nifti(dir / "a.nii");
    EXPECT_EQ(back.corner(), (Vec3{-0.5, -0.5, -0.5}));
}

TEST(Nifti, OriginAndAnisotropicSpacing) {
    TempDir dir("nifti");
    // voxel-0 centre at (10, 20, 30) with spacing (1, 2, 3)
    const CtVolume vol({2, 2, 2}, {1, 2, 3}, {9.5, 19, 28.5}, std::vector<float>(8, 1.0f));
    v::write_nifti_fixture(vol, dir / "a.nii");
    const auto back = load_nifti(dir / "a.nii");
    EXPECT_EQ(back.corner(), (Vec3{9.5, 19, 28.5}));
    EXPECT_EQ(back.spacing(), (Vec3{1, 2, 3}));
    EXPECT_EQ(back.voxel_center(0, 0, 0), (Vec3{10, 20, 30}));
}

TEST(Nifti, SlopeInterceptGivesWater) {
    TempDir dir("nifti");
    const CtVolume vol({1, 1, 1}, {1, 1, 1}, {}, std::vector<float>{0.0f});
    v::NiftiFixtureOptions opt;
    opt.datatype = v::NiftiDatatype::int16;
    opt.scaling = HounsfieldScaling(1.0, -1024.0);
    v::write_nifti_fixture(vol, dir / "w.nii", opt);
    const auto raw = slurp(dir / "w.nii");
    std::int16_t stored = 0;
    std::memcpy(&stored, raw.data() + 352, 2);
    EXPECT_EQ(stored, 1024);
    EXPECT_EQ(load_nifti(dir / "w.nii").at(0, 0, 0), 0.0f);
}

TEST(Nifti, RampRoundTrip) {
    TempDir dir("nifti");
    const auto vol = ramp_4x5x6();
    for (auto dt : {v::NiftiDatatype::int16, v::NiftiDatatype::float32, v::NiftiDatatype::float64}) {
        v::NiftiFixtureOptions opt;
        opt.datatype = dt;
        v::write_nifti_fixture(vol, dir / "r.nii", opt);
        const auto back = load_nifti(dir / "r.nii");
        ASSERT_EQ(back.dims(), (Dims3{4, 5, 6}));
        for (std::size_t k = 0; k < 6; ++k)
            for (std::size_t j = 0; j < 5; ++j)
                for (std::size_t i = 0; i < 4; ++i)
                    ASSERT_EQ(back.at(i, j, k), static_cast<float>(i + 10 * j + 100 * k));
        EXPECT_EQ(back, vol);
    }
}

TEST(Nifti, BigEndianMatchesLittleEndian) {
    TempDir dir("nifti");
    const auto vol = ramp_4x5x6();
    v::NiftiFixtureOptions be;
    be.big_endian = true;
    v::write_nifti_fixture(vol, dir / "be.nii", be);
    EXPECT_EQ(load_nifti(dir / "be.nii"), vol);
}

TEST(Nifti, GzippedEqualsPlain) {
    TempDir dir("nifti");
    Gen g(5);
    std::vector<float> vox(9 * 7 * 4);
    for (auto& x : vox) x = static_cast<float>(g.uniform(-1000, 2000));
    Mat3 flip;
    flip.m = {-1, 0, 0, 0, 1, 0, 0, 0, -1};
    const CtVolume vol({9, 7, 4}, {0.75, 0.75, 2.0}, {12, -40, 3}, flip, vox);
    v::write_nifti_fixture(vol, dir / "v.nii");
    v::write_nifti_fixture(vol, dir / "v.nii.gz");
    const auto plain = load_nifti(dir / "v.nii");
    const auto gz = load_nifti(dir / "v.nii.gz");
    EXPECT_EQ(plain, gz);
    EXPECT_EQ(plain, vol);
    EXPECT_NE(slurp(dir / "v.nii"), slurp(dir / "v.nii.gz"));
}

TEST(Nifti, SformPreferredOverQform) {
    TempDir dir("nifti");
    const auto vol = ramp_4x5x6();
    v::NiftiFixtureOptions opt;
    opt.write_qform = true;
    opt.qform_origin_shift = {5, 5, 5};
    v::write_nifti_fixture(vol, dir / "both.nii", opt);
    EXPECT_EQ(load_nifti(dir / "both.nii").corner(), vol.corner());

    opt.write_sform = false;
    opt.qform_origin_shift = {};
    v::write_nifti_fixture(vol, dir / "q.nii", opt);
    EXPECT_EQ(load_nifti(dir / "q.nii").corner(), vol.corner());
}

TEST(Nifti, QformHandlesPermutedDirections) {
    TempDir dir("nifti");
    Gen g(8);
    const std::array<Mat3, 3> dirs{Mat3{{0, -1, 0, 1, 0, 0, 0, 0, 1}}, Mat3{{1, 0, 0, 0, -1, 0, 0, 0, -1}},
                                   Mat3{{0, 0, 1, 1, 0, 0, 0, 1, 0}}};
    for (const auto& d : dirs) {
        std::vector<float> vox(3 * 4 * 5);
        for (auto& x : vox) x = static_cast<float>(std::round(g.uniform(-1000, 1000)));
        const CtVolume vol({3, 4, 5}, {1, 2, 3}, {4, 8, 16}, d, vox);
        v::NiftiFixtureOptions opt;
        opt.write_sform = false;
        opt.write_qform = true;
        v::write_nifti_fixture(vol, dir / "q.nii", opt);
        const auto back = load_nifti(dir / "q.nii");
        EXPECT_EQ(back.direction(), vol.direction());
        EXPECT_EQ(back.corner(), vol.corner());
        EXPECT_EQ(back, vol);
    }
}

TEST(Nifti, NoTransformMeansRasIdentity) {
    TempDir dir("nifti");
    v::NiftiFixtureOptions opt;
    opt.write_sform = false;
    const CtVolume vol({2, 2, 2}, {1, 1, 1}, {-0.5, -0.5, -0.5}, std::vector<float>(8, 3.0f));
    v::write_nifti_fixture(vol, dir / "n.nii", opt);
    const auto back = load_nifti(dir / "n.nii");
    Mat3 lps;
    lps.m = {-1, 0, 0, 0, -1, 0, 0, 0, 1};
    EXPECT_EQ(back.direction(), lps);
    EXPECT_EQ(back.voxel_center(0, 0, 0), (Vec3{0, 0, 0}));
    EXPECT_EQ(back.corner(), (Vec3{0.5, 0.5, -0.5}));
}

TEST(Nifti, HeaderErrorsNameTheField) {
    TempDir dir("nifti");
    const auto vol = ramp_4x5x6();
    v::write_nifti_fixture(vol, dir / "ok.nii");
    const auto good = slurp(dir / "ok.nii");
    struct Case {
        const char* field;
        std::function<void(std::vector<unsigned char>&)> corrupt;
    };
    const std::vector<Case> cases{
        {"sizeof_hdr", [](auto& b) { poke(b, 0, std::int32_t{1234}); }},
        {"magic", [](auto& b) { std::memcpy(b.data() + 344, "xyz\0", 4); }},
        {"dim[0]", [](auto& b) { poke(b, 40, std::int16_t{0}); }},
        {"dim[2]", [](auto& b) { poke(b, 44, std::int16_t{-3}); }},
        {"bitpix", [](auto& b) { poke(b, 72, std::int16_t{8}); }},
        {"pixdim[3]", [](auto& b) { poke(b, 88, 0.0f); }},
        {"vox_offset", [](auto& b) { poke(b, 108, 100.0f); }},
        {"srow", [](auto& b) { poke(b, 280, std::numeric_limits<float>::infinity()); }},
    };
    for (const auto& c : cases) {
        auto bytes = good;
        c.corrupt(bytes);
        spit(dir / "bad.nii", bytes);
        const std::string msg = message_of<FormatError>([&] { load_nifti(dir / "bad.nii"); });
        EXPECT_NE(msg.find(c.field), std::string::npos) << c.field << ": " << msg;
    }
    auto truncated = good;
    truncated.resize(good.size() - 3);
    spit(dir / "short.nii", truncated);
    EXPECT_NE(message_of<FormatError>([&] { load_nifti(dir / "short.nii"); }).find("truncated"), std::string::npos);
    spit(dir / "tiny.nii", std::vector<unsigned char>(100, 0));
    EXPECT_THROW(load_nifti(dir / "tiny.nii"), FormatError);
    EXPECT_THROW(load_nifti(dir / "missing.nii"), IoError);
}

TEST(Nifti, UnsupportedInputs) {
    TempDir dir("nifti");
    const auto vol = ramp_4x5x6();
    v::write_nifti_fixture(vol, dir / "ok.nii");
    const auto good = slurp(dir / "ok.nii");

    auto dt = good;
    poke(dt, 70, std::int16_t{2});  // uint8
    poke(dt, 72, std::int16_t{8});
    spit(dir / "dt.nii", dt);
    EXPECT_THROW(load_nifti(dir / "dt.nii"), UnsupportedFormatError);

    auto four_d = good;
    poke(four_d, 40, std::int16_t{4});
    poke(four_d, 48, std::int16_t{2});
    spit(dir / "4d.nii", four_d);
    EXPECT_THROW(load_nifti(dir / "4d.nii"), UnsupportedFormatError);

    auto oblique = good;
    const float c = std::cos(0.4f), s = std::sin(0.4f);
    poke(oblique, 280, -c);
    poke(oblique, 284, s);
    poke(oblique, 296, -s);
    poke(oblique, 300, -c);
    spit(dir / "ob.nii", oblique);
    EXPECT_THROW(load_nifti(dir / "ob.nii"), UnsupportedFormatError);
}

TEST(Nifti, NonFiniteVoxelNamesIndex) {
    TempDir dir("nifti");
    std::vector<float> vox(8, 0.0f);
    const CtVolume vol({2, 2, 2}, {1, 1, 1}, {}, vox);
    v::write_nifti_fixture(vol, dir / "n.nii");
    auto bytes = slurp(dir / "n.nii");
    poke(bytes, 352 + 4 * 5, std::numeric_limits<float>::infinity());  // (1, 0, 1)
    spit(dir / "n.nii", bytes);
    const std::string msg = message_of<DataError>([&] { load_nifti(dir / "n.nii"); });
    EXPECT_NE(msg.find("(1, 0, 1)"), std::string::npos) << msg;
}

TEST(Nifti, HeaderPairFile) {
    TempDir dir("nifti");
    const auto vol = ramp_4x5x6();
    v::write_nifti_fixture(vol, dir / "p.nii");
    auto bytes = slurp(dir / "p.nii");
    std::vector<unsigned char> hdr(bytes.begin(), bytes.begin() + 348);
    std::vector<unsigned char> img(bytes.begin() + 352, bytes.end());
    std::memcpy(hdr.data() + 344, "ni1\0", 4);
    spit(dir / "p.hdr", hdr);
    spit(dir / "p.img", img);
    EXPECT_EQ(load_nifti(dir / "p.hdr"), vol);
}

TEST(Raw, SingleVoxelRoundTrip) {
    TempDir dir("raw");
    const CtVolume vol({1, 1, 1}, {1, 1, 1}, {0, 0, 0}, std::vector<float>{0.0f});
    write_raw(vol, dir / "one.raw");
    EXPECT_EQ(load_raw(dir / "one.raw"), vol);
}

TEST(Raw, RandomVolumeRoundTripIsBitwise) {
    TempDir dir("raw");
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Gen g(seed);
        std::vector<double> vox(64 * 64 * 64);
        for (auto& x : vox) x = g.uniform(-1000, 2000);
        Mat3 d;
        d.m = {0, 0, -1, 0, 1, 0, 1, 0, 0};
        const BasicCtVolume<double> vol({64, 64, 64}, {g.uniform(0.1, 3), 0.1 * 3, 1.0 / 3.0},
                                        {g.uniform(-500, 500), -1e-17, 123.456}, d, vox);
        write_raw(vol, dir / "r.raw");
        const auto back = load_raw<double>(dir / "r.raw");
        EXPECT_EQ(back.dims(), vol.dims());
        EXPECT_EQ(back.spacing(), vol.spacing());
        EXPECT_EQ(back.corner(), vol.corner());
        EXPECT_EQ(back.direction(), vol.direction());
        EXPECT_EQ(0, std::memcmp(back.voxels().data(), vol.voxels().data(), vox.size() * sizeof(double)));
        EXPECT_EQ(back.fingerprint(), vol.fingerprint());
    }
}

TEST(Raw, TruncatedFileIsFormatError) {
    TempDir dir("raw");
    const CtVolume vol({4, 4, 4}, {1, 1, 1}, {}, std::vector<float>(64, 7.0f));
    write_raw(vol, dir / "t.raw");
    auto bytes = slurp(dir / "t.raw");
    bytes.resize(bytes.size() - 8);
    spit(dir / "t.raw", bytes);
    EXPECT_THROW(load_raw(dir / "t.raw"), FormatError);
    bytes.resize(20);
    spit(dir / "t.raw", bytes);
    EXPECT_THROW(load_raw(dir / "t.raw"), FormatError);
}

TEST(Raw, LoadVolumeDispatchesOnExtension) {
    TempDir dir("raw");
    const auto vol = ramp_4x5x6();
    write_raw(vol, dir / "x.raw");
    v::write_nifti_fixture(vol, dir / "x.nii.gz");
    EXPECT_EQ(load_volume(dir / "x.raw"), load_volume(dir / "x.nii.gz"));
}
