#include <doctest.h>

#include <limits>
#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "texloc/features.hpp"
#include "texloc/matching.hpp"
#include "texloc/rng.hpp"
#include "texloc/synth.hpp"

using namespace texloc;

namespace {

// Exact 90-degree rotation (no resampling): out((H-1) - y, x) = in(x, y).
GrayImage rotate90(const GrayImage& in) {
    GrayImage out(in.height, in.width);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            out.at(in.height - 1 - y, x) = in.at(x, y);
        }
    }
    return out;
}

// Pose mapping original image coordinates into rotate90's frame.
Pose2 rotate90_pose(const GrayImage& in) {
    return Pose2{kPi / 2, static_cast<double>(in.height - 1), 0.0};
}

}  // namespace

TEST_SUITE_BEGIN("features");

TEST_CASE("blank image has no keypoints") {
    const GrayImage blank(256, 256, 0.5f);
    CHECK(features::detect(blank).empty());
}

TEST_CASE("input smaller than 64x64 rejected") {
    const GrayImage tiny(32, 32, 0.5f);
    CHECK_THROWS_AS(features::detect(tiny), std::invalid_argument);
    CHECK_THROWS_AS(features::detect_and_describe(tiny), std::invalid_argument);
}

TEST_CASE("bad configs rejected") {
    features::DetectorConfig cfg;
    cfg.octaves = 0;
    const GrayImage img(128, 128, 0.5f);
    CHECK_THROWS_AS(features::detect(img, cfg), std::invalid_argument);
    cfg = {};
    cfg.contrast_threshold = -1.0;
    CHECK_THROWS_AS(features::detect(img, cfg), std::invalid_argument);
}

TEST_CASE("scratchy texture yields 1000-2000 keypoints per 1280x960 frame") {
    const auto tex = synth::generate_texture(3, 1280, 960, synth::TextureStyle::scratchy);
    const auto kps = features::detect(tex.image);
    CHECK(kps.size() >= 1000);
    CHECK(kps.size() <= 2000);
    for (const Keypoint& kp : kps) {
        CHECK(kp.scale > 0.0);
        CHECK(kp.orientation > -kPi);
        CHECK(kp.orientation <= kPi);
    }
}

TEST_CASE("detection is deterministic") {
    const auto tex = synth::generate_texture(4, 512, 512, synth::TextureStyle::granular);
    const auto a = features::detect_and_describe(tex.image);
    const auto b = features::detect_and_describe(tex.image);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a.keypoints[i].x == b.keypoints[i].x);
        CHECK(a.keypoints[i].y == b.keypoints[i].y);
        CHECK(a.keypoints[i].scale == b.keypoints[i].scale);
        CHECK(a.keypoints[i].orientation == b.keypoints[i].orientation);
        CHECK(a.descriptors[i].values == b.descriptors[i].values);
    }
}

TEST_CASE("90-degree rotation preserves most keypoints") {
    const auto tex = synth::generate_texture(6, 512, 512, synth::TextureStyle::scratchy);
    const GrayImage rotated = rotate90(tex.image);
    const Pose2 map = rotate90_pose(tex.image);

    const auto orig = features::detect(tex.image);
    const auto rot = features::detect(rotated);
    REQUIRE(orig.size() > 200);

    const double scale_step = std::pow(2.0, 1.0 / 3.0) * 1.05;
    int with_counterpart = 0;
    for (const Keypoint& kp : orig) {
        const Vec2 expect = apply(map, {kp.x, kp.y});
        bool found = false;
        for (const Keypoint& rk : rot) {
            if (std::hypot(rk.x - expect.x, rk.y - expect.y) <= 1.5 &&
                rk.scale / kp.scale <= scale_step && kp.scale / rk.scale <= scale_step) {
                found = true;
                break;
            }
        }
        if (found) ++with_counterpart;
    }
    CHECK(static_cast<double>(with_counterpart) >= 0.7 * static_cast<double>(orig.size()));
}

TEST_CASE("descriptors are unit length") {
    const auto tex = synth::generate_texture(12, 512, 512, synth::TextureStyle::fibrous);
    const auto fs = features::detect_and_describe(tex.image);
    REQUIRE(fs.size() > 100);
    for (const Descriptor& d : fs.descriptors) {
        REQUIRE(d.dim() == 128);
        double norm2 = 0.0;
        for (float v : d.values) {
            CHECK(v >= 0.0f);
            norm2 += static_cast<double>(v) * v;
        }
        CHECK(std::fabs(std::sqrt(norm2) - 1.0) < 1e-6);
    }
}

TEST_CASE("clamped histogram entries stay within 0.2 before renormalization") {
    const auto tex = synth::generate_texture(13, 512, 512, synth::TextureStyle::scratchy);
    const auto kps = features::detect(tex.image);
    REQUIRE(kps.size() > 20);
    int tested = 0;
    for (size_t i = 0; i < kps.size() && tested < 20; i += kps.size() / 20) {
        const Keypoint& kp = kps[i];
        if (kp.x < 100 || kp.y < 100 || kp.x > 412 || kp.y > 412) continue;
        const auto hist = features::detail::raw_clamped_histogram(tex.image, kp, {});
        for (float v : hist) {
            CHECK(v >= 0.0f);
            CHECK(v <= 0.2f + 1e-6f);
        }
        ++tested;
    }
    CHECK(tested > 0);
}

TEST_CASE("descriptor is stable under exact 90-degree rotation") {
    const auto tex = synth::generate_texture(14, 512, 512, synth::TextureStyle::scratchy);
    const GrayImage rotated = rotate90(tex.image);
    const Pose2 map = rotate90_pose(tex.image);

    auto kps = features::detect(tex.image);
    REQUIRE(kps.size() > 60);
    // Keep keypoints away from the border so both descriptors exist.
    std::vector<Keypoint> inner;
    for (const Keypoint& kp : kps) {
        if (kp.x > 120 && kp.x < 392 && kp.y > 120 && kp.y < 392) inner.push_back(kp);
    }
    REQUIRE(inner.size() > 30);
    if (inner.size() > 50) inner.resize(50);

    std::vector<Keypoint> mapped;
    for (const Keypoint& kp : inner) {
        Keypoint rk = kp;
        const Vec2 p = apply(map, {kp.x, kp.y});
        rk.x = p.x;
        rk.y = p.y;
        rk.orientation = wrap_angle(kp.orientation + kPi / 2);
        mapped.push_back(rk);
    }

    const auto da = features::describe(tex.image, inner);
    const auto db = features::describe(rotated, mapped);
    REQUIRE(da.size() == inner.size());
    REQUIRE(db.size() == mapped.size());

    std::vector<double> dists;
    for (size_t i = 0; i < da.size(); ++i) {
        dists.push_back(std::sqrt(squared_distance(da.descriptors[i], db.descriptors[i])));
    }
    std::sort(dists.begin(), dists.end());
    const double median = dists[dists.size() / 2];
    CHECK(median < 0.35);
}

TEST_CASE("integer shifts move keypoints and keep descriptors") {
    const auto tex = synth::generate_texture(15, 720, 720, synth::TextureStyle::granular);
    // Shift by a multiple of 2^(octaves-1) so every pyramid level shifts
    // by an integer amount.
    const int dx = 16, dy = 24;
    GrayImage view(640, 640), shifted(640, 640);
    for (int y = 0; y < 640; ++y) {
        for (int x = 0; x < 640; ++x) {
            view.at(x, y) = tex.image.at(x, y);
            shifted.at(x, y) = tex.image.at(x + dx, y + dy);
        }
    }
    const auto fa = features::detect_and_describe(view);
    const auto fb = features::detect_and_describe(shifted);
    REQUIRE(fa.size() > 200);

    // Keypoints of the shifted view, mapped back, must appear in the
    // original (borders excluded), descriptors equal within 1e-3. Border
    // replication in the blur cascade pollutes a band that grows with the
    // octave, so the comparison sticks to the first two octaves and a wide
    // interior margin.
    int found = 0, compared = 0;
    for (size_t j = 0; j < fb.size(); ++j) {
        const Keypoint& kb = fb.keypoints[j];
        if (kb.scale >= 6.4) continue;
        const double ox = kb.x + dx, oy = kb.y + dy;
        if (ox < 140 || oy < 140 || ox > 500 || oy > 500) continue;
        ++compared;
        for (size_t i = 0; i < fa.size(); ++i) {
            const Keypoint& ka = fa.keypoints[i];
            if (std::fabs(ka.x - ox) < 0.25 && std::fabs(ka.y - oy) < 0.25 &&
                std::fabs(ka.scale - kb.scale) / kb.scale < 0.05 &&
                std::fabs(wrap_angle(ka.orientation - kb.orientation)) < 0.01) {
                double max_diff = 0.0;
                for (int v = 0; v < 128; ++v) {
                    max_diff = std::max(max_diff,
                                        static_cast<double>(std::fabs(
                                            fa.descriptors[i].values[static_cast<size_t>(v)] -
                                            fb.descriptors[j].values[static_cast<size_t>(v)])));
                }
                if (max_diff < 1e-3) ++found;
                break;
            }
        }
    }
    REQUIRE(compared > 80);
    CHECK(static_cast<double>(found) >= 0.9 * static_cast<double>(compared));
}

TEST_CASE("geometrically consistent matches dwarf a random-pairing baseline") {
    const auto tex = synth::generate_texture(16, 768, 768, synth::TextureStyle::scratchy);
    const Pose2 pose_a{0.0, 64.0, 64.0};
    const Pose2 pose_b{25.0 * kPi / 180.0, 300.0, 120.0};  // overlapping, rotated view
    const auto crop_a = synth::sample_query(tex, pose_a, 384, 384);
    const auto crop_b = synth::sample_query(tex, pose_b, 384, 384);
    const auto fa = features::detect_and_describe(crop_a.image);
    const auto fb = features::detect_and_describe(crop_b.image);
    REQUIRE(fa.size() > 100);
    REQUIRE(fb.size() > 100);

    const Pose2 b_to_a = compose(inverse(pose_a), pose_b);
    const auto consistent = [&](int ia, int ib) {
        const Keypoint& ka = fa.keypoints[static_cast<size_t>(ia)];
        const Keypoint& kb = fb.keypoints[static_cast<size_t>(ib)];
        const Vec2 expect = apply(b_to_a, {kb.x, kb.y});
        return std::hypot(expect.x - ka.x, expect.y - ka.y) <= 3.0;
    };

    int nn_consistent = 0;
    const auto matches = matching::match_ratio(fa, fb, 0.9);
    for (const auto& [ia, ib] : matches) {
        if (consistent(ia, ib)) ++nn_consistent;
    }

    Rng rng(99);
    int random_consistent = 0;
    for (size_t ib = 0; ib < fb.size(); ++ib) {
        const int ia = static_cast<int>(uniform_below(rng, fa.size()));
        if (consistent(ia, static_cast<int>(ib))) ++random_consistent;
    }

    CAPTURE(nn_consistent);
    CAPTURE(random_consistent);
    CHECK(nn_consistent >= 5 * std::max(1, random_consistent));
}

TEST_CASE("describe drops keypoints near the border") {
    const auto tex = synth::generate_texture(17, 512, 512, synth::TextureStyle::granular);
    std::vector<Keypoint> kps;
    kps.push_back({2.0, 2.0, 2.0, 0.0, 0.1});      // hugging the corner
    kps.push_back({256.0, 256.0, 2.0, 0.0, 0.1});  // interior
    const auto fs = features::describe(tex.image, kps);
    REQUIRE(fs.size() == 1);
    CHECK(fs.keypoints[0].x == 256.0);
}

TEST_CASE("max_features keeps the strongest responses") {
    const auto tex = synth::generate_texture(18, 512, 512, synth::TextureStyle::scratchy);
    features::DetectorConfig cfg;
    const auto all = features::detect(tex.image, cfg);
    cfg.max_features = 50;
    const auto capped = features::detect(tex.image, cfg);
    REQUIRE(capped.size() == 50);
    double min_capped = 1e9;
    for (const Keypoint& kp : capped) min_capped = std::min(min_capped, std::fabs(kp.response));
    size_t stronger = 0;
    for (const Keypoint& kp : all) {
        if (std::fabs(kp.response) > min_capped) ++stronger;
    }
    CHECK(stronger <= 50);
}

TEST_CASE("feature file round trip") {
    const auto tex = synth::generate_texture(19, 512, 512, synth::TextureStyle::fibrous);
    auto fs = features::detect_and_describe(tex.image);
    fs.keypoints.resize(25);
    fs.descriptors.resize(25);

    const std::string path =
        (std::filesystem::temp_directory_path() / "texloc_test_features.feat").string();
    features::write_feature_file(fs, path);
    const auto loaded = features::read_feature_file(path);
    REQUIRE(loaded.size() == fs.size());
    for (size_t i = 0; i < fs.size(); ++i) {
        CHECK(std::fabs(loaded.keypoints[i].x - fs.keypoints[i].x) < 1e-6);
        CHECK(std::fabs(loaded.keypoints[i].scale - fs.keypoints[i].scale) < 1e-6);
        for (int v = 0; v < 128; ++v) {
            CHECK(std::fabs(loaded.descriptors[i].values[static_cast<size_t>(v)] -
                            fs.descriptors[i].values[static_cast<size_t>(v)]) < 1e-5);
        }
    }
    std::filesystem::remove(path);

    CHECK_THROWS_AS(features::read_feature_file("/nonexistent/features.feat"), std::runtime_error);
}

TEST_SUITE_END();
