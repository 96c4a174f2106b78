#include <doctest.h>

#include <limits>
#include <stdexcept>

#include <cmath>

#include "texloc/features.hpp"
#include "texloc/matching.hpp"
#include "texloc/rigid.hpp"
#include "texloc/rng.hpp"
#include "texloc/synth.hpp"

using namespace texloc;

TEST_SUITE_BEGIN("synth");

TEST_CASE("same seed gives bit-identical rasters") {
    const auto a = synth::generate_texture(123, 512, 512, synth::TextureStyle::scratchy);
    const auto b = synth::generate_texture(123, 512, 512, synth::TextureStyle::scratchy);
    REQUIRE(a.image.pixels.size() == b.image.pixels.size());
    CHECK(a.image.pixels == b.image.pixels);

    const auto c = synth::generate_texture(124, 512, 512, synth::TextureStyle::scratchy);
    CHECK(a.image.pixels != c.image.pixels);
}

TEST_CASE("degenerate dimensions rejected") {
    CHECK_THROWS_AS(synth::generate_texture(1, 256, 512, synth::TextureStyle::granular),
                    std::invalid_argument);
    CHECK_THROWS_AS(synth::generate_texture(1, 512, 100, synth::TextureStyle::granular),
                    std::invalid_argument);
}

TEST_CASE("pixel values stay in [0,1]") {
    const auto tex = synth::generate_texture(5, 512, 512, synth::TextureStyle::fibrous);
    for (float v : tex.image.pixels) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("every style yields enough detectable keypoints per 1280x960 window") {
    for (auto style : {synth::TextureStyle::scratchy, synth::TextureStyle::granular,
                       synth::TextureStyle::fibrous}) {
        const auto tex = synth::generate_texture(31, 1280, 960, style);
        const auto kps = features::detect(tex.image);
        CAPTURE(synth::style_name(style));
        CHECK(kps.size() >= 500);
    }
}

TEST_CASE("different seeds give spatially inconsistent cross-matches") {
    const auto ta = synth::generate_texture(41, 512, 512, synth::TextureStyle::scratchy);
    const auto tb = synth::generate_texture(42, 512, 512, synth::TextureStyle::scratchy);
    const auto fa = features::detect_and_describe(ta.image);
    const auto fb = features::detect_and_describe(tb.image);
    REQUIRE(fa.size() > 50);
    REQUIRE(fb.size() > 50);

    // Nearest-neighbor cross-matches, then the largest rigidly consistent
    // subset; on unrelated textures it must stay tiny.
    const auto matches = matching::match_ratio(fa, fb, 1.0);
    REQUIRE(matches.size() > 20);
    std::vector<Vec2> src, dst;
    for (const auto& [ia, ib] : matches) {
        src.push_back({fb.keypoints[static_cast<size_t>(ib)].x,
                       fb.keypoints[static_cast<size_t>(ib)].y});
        dst.push_back({fa.keypoints[static_cast<size_t>(ia)].x,
                       fa.keypoints[static_cast<size_t>(ia)].y});
    }
    rigid::RansacParams rp;
    rp.min_inliers = 2;
    const auto fit = rigid::ransac_rigid(src, dst, rp);
    const size_t consistent = fit.ok ? fit.inliers.size() : 0;
    CHECK(static_cast<double>(consistent) <= 0.10 * static_cast<double>(matches.size()));
}

TEST_CASE("identity pose returns the exact sub-raster") {
    const auto tex = synth::generate_texture(7, 512, 512, synth::TextureStyle::granular);
    const auto q = synth::sample_query(tex, Pose2{0.0, 32.0, 16.0}, 128, 96);
    for (int y = 0; y < 96; ++y) {
        for (int x = 0; x < 128; ++x) {
            CHECK(q.image.at(x, y) == doctest::Approx(tex.image.at(x + 32, y + 16)).epsilon(1e-6));
        }
    }
    CHECK(q.truth.tx == 32.0);
    CHECK(q.degradation.occlusion_fraction == 0.0);
}

TEST_CASE("rotated crop matches an independent inverse-warp oracle") {
    const auto tex = synth::generate_texture(8, 512, 512, synth::TextureStyle::scratchy);
    const double theta = 30.0 * kPi / 180.0;
    const Pose2 pose{theta, 250.0, 60.0};
    const int w = 96, h = 80;
    REQUIRE(synth::crop_in_bounds(tex, pose, w, h));
    const auto q = synth::sample_query(tex, pose, w, h);

    // Oracle: explicit 3x3 matrix and a separate bilinear interpolation.
    const double m[2][3] = {{std::cos(theta), -std::sin(theta), pose.tx},
                            {std::sin(theta), std::cos(theta), pose.ty}};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double wx = m[0][0] * x + m[0][1] * y + m[0][2];
            const double wy = m[1][0] * x + m[1][1] * y + m[1][2];
            const int x0 = static_cast<int>(std::floor(wx));
            const int y0 = static_cast<int>(std::floor(wy));
            const double fx = wx - x0, fy = wy - y0;
            const double expected =
                (1 - fx) * (1 - fy) * tex.image.at(x0, y0) + fx * (1 - fy) * tex.image.at(x0 + 1, y0) +
                (1 - fx) * fy * tex.image.at(x0, y0 + 1) + fx * fy * tex.image.at(x0 + 1, y0 + 1);
            CHECK(std::fabs(q.image.at(x, y) - expected) < 1e-5);
        }
    }
}

TEST_CASE("out-of-bounds pose rejected") {
    const auto tex = synth::generate_texture(9, 512, 512, synth::TextureStyle::granular);
    CHECK_THROWS_AS(synth::sample_query(tex, Pose2{0.0, 480.0, 0.0}, 128, 96),
                    std::invalid_argument);
    CHECK_THROWS_AS(synth::sample_query(tex, Pose2{kPi / 4, 0.0, 0.0}, 128, 96),
                    std::invalid_argument);
    CHECK_FALSE(synth::crop_in_bounds(tex, Pose2{0.0, -5.0, 0.0}, 128, 96));
}

TEST_CASE("occlusion overwrites the requested pixel fraction") {
    const auto tex = synth::generate_texture(10, 640, 640, synth::TextureStyle::scratchy);
    const Pose2 pose{0.0, 40.0, 40.0};
    const auto clean = synth::sample_query(tex, pose, 320, 240);
    for (double fraction : {0.25, 0.5, 0.75}) {
        synth::Degradation deg;
        deg.occlusion_fraction = fraction;
        deg.seed = 77;
        const auto occluded = synth::sample_query(tex, pose, 320, 240, deg);
        int replaced = 0;
        for (size_t i = 0; i < clean.image.pixels.size(); ++i) {
            if (clean.image.pixels[i] != occluded.image.pixels[i]) ++replaced;
        }
        const double measured = static_cast<double>(replaced) / clean.image.pixels.size();
        CAPTURE(fraction);
        CHECK(measured >= fraction - 0.02);
        CHECK(measured <= fraction + 0.02);
        CHECK(occluded.occluded_fraction == doctest::Approx(fraction).epsilon(0.02));
    }
}

TEST_CASE("degradations are deterministic per seed") {
    const auto tex = synth::generate_texture(11, 512, 512, synth::TextureStyle::fibrous);
    synth::Degradation deg;
    deg.occlusion_fraction = 0.3;
    deg.blur_length = 5.0;
    deg.noise_sigma = 0.02;
    deg.impulse_density = 1e-4;
    deg.seed = 5;
    const Pose2 pose{0.1, 100.0, 100.0};
    const auto a = synth::sample_query(tex, pose, 256, 192, deg);
    const auto b = synth::sample_query(tex, pose, 256, 192, deg);
    CHECK(a.image.pixels == b.image.pixels);

    deg.seed = 6;
    const auto c = synth::sample_query(tex, pose, 256, 192, deg);
    CHECK(a.image.pixels != c.image.pixels);
}

TEST_SUITE_END();
