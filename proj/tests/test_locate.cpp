#include <doctest.h>

#include <limits>
#include <stdexcept>

#include <cmath>

#include "texloc/eval.hpp"
#include "texloc/locate.hpp"
#include "texloc/rigid.hpp"
#include "texloc/rng.hpp"

using namespace texloc;

namespace {

locate::FeatureMatch make_match(const Pose2& db_pose, double qx, double qy, double qtheta) {
    locate::FeatureMatch m;
    m.query = Keypoint{qx, qy, 2.0, qtheta, 0.1};
    m.database.pose = db_pose;
    m.database.scale = 2.0;
    m.distance = 0.0;
    return m;
}

locate::GridGeometry simple_grid(int cols, int rows, double cell = 50.0) {
    locate::GridGeometry geo;
    geo.cell_size = cell;
    geo.origin_x = 0.0;
    geo.origin_y = 0.0;
    geo.cols = cols;
    geo.rows = rows;
    return geo;
}

}  // namespace

TEST_SUITE_BEGIN("locate");

TEST_CASE("origin votes match the matrix oracle") {
    // f_d at identity, f_t at the image origin: vote lands at the world origin.
    const Pose2 v0 = locate::vote_origin(make_match(Pose2::identity(), 0, 0, 0));
    CHECK(std::fabs(v0.tx) < 1e-12);
    CHECK(std::fabs(v0.ty) < 1e-12);

    // f_d at (100, 0), f_t at image (30, 40): origin vote at (70, -40).
    const Pose2 v1 = locate::vote_origin(make_match(Pose2{0, 100, 0}, 30, 40, 0));
    CHECK(v1.tx == doctest::Approx(70.0));
    CHECK(v1.ty == doctest::Approx(-40.0));

    // Matrix oracle on random matches: compose then read the translation.
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const Pose2 fd{uniform_range(rng, -kPi, kPi), uniform_range(rng, -500, 500),
                       uniform_range(rng, -500, 500)};
        const double qx = uniform_range(rng, 0, 640);
        const double qy = uniform_range(rng, 0, 480);
        const double qt = uniform_range(rng, -kPi, kPi);
        const Pose2 vote = locate::vote_origin(make_match(fd, qx, qy, qt));

        const double c = std::cos(fd.theta - qt), s = std::sin(fd.theta - qt);
        const double ex = fd.tx - (c * qx - s * qy);
        const double ey = fd.ty - (s * qx + c * qy);
        CHECK(vote.tx == doctest::Approx(ex).epsilon(1e-9));
        CHECK(vote.ty == doctest::Approx(ey).epsilon(1e-9));
    }
}

TEST_CASE("rotating both feature frames leaves the vote unchanged") {
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        const Pose2 fd{uniform_range(rng, -kPi, kPi), uniform_range(rng, -200, 200),
                       uniform_range(rng, -200, 200)};
        const double qx = uniform_range(rng, 0, 640);
        const double qy = uniform_range(rng, 0, 480);
        const double qt = uniform_range(rng, -kPi, kPi);
        const double delta = uniform_range(rng, -kPi, kPi);

        const Pose2 base = locate::vote_origin(make_match(fd, qx, qy, qt));
        const Pose2 fd_rot = compose(fd, Pose2{delta, 0, 0});
        const Pose2 rotated = locate::vote_origin(make_match(fd_rot, qx, qy, wrap_angle(qt + delta)));
        CHECK(rotated.tx == doctest::Approx(base.tx).epsilon(1e-9));
        CHECK(rotated.ty == doctest::Approx(base.ty).epsilon(1e-9));
        CHECK(std::fabs(wrap_angle(rotated.theta - base.theta)) < 1e-9);
    }
}

TEST_CASE("empty match list accumulates an empty grid") {
    const auto grid = locate::accumulate({}, simple_grid(10, 10));
    CHECK(grid.total_votes == 0);
    CHECK(grid.sink_count == 0);
    CHECK_THROWS_AS(locate::find_peak(grid), std::invalid_argument);
}

TEST_CASE("identical votes pile into one cell") {
    std::vector<locate::FeatureMatch> matches(10, make_match(Pose2{0, 260, 130}, 0, 0, 0));
    const auto grid = locate::accumulate(matches, simple_grid(10, 10));
    const auto peak = locate::find_peak(grid);
    CHECK(peak.votes == 10);
    CHECK(peak.row == 2);
    CHECK(peak.col == 5);
    CHECK(peak.candidates.size() == 10);
    CHECK(grid.total_votes == 10);
}

TEST_CASE("uniform votes stay within the multinomial ceiling") {
    // 2000 votes over 10000 cells: max cell count <= 6 at 99% confidence.
    Rng rng(3);
    std::vector<locate::FeatureMatch> matches;
    for (int i = 0; i < 2000; ++i) {
        matches.push_back(
            make_match(Pose2{0, uniform_range(rng, 0, 5000), uniform_range(rng, 0, 5000)}, 0, 0, 0));
    }
    const auto grid = locate::accumulate(matches, simple_grid(100, 100));
    CHECK(grid.sink_count == 0);
    const auto peak = locate::find_peak(grid);
    CHECK(peak.votes <= 6);
}

TEST_CASE("out-of-map votes land in the sink and never win") {
    std::vector<locate::FeatureMatch> matches;
    for (int i = 0; i < 50; ++i) {
        matches.push_back(make_match(Pose2{0, -1000.0 - i, -900.0}, 0, 0, 0));  // off grid
    }
    matches.push_back(make_match(Pose2{0, 120, 130}, 0, 0, 0));
    const auto grid = locate::accumulate(matches, simple_grid(10, 10));
    CHECK(grid.sink_count == 50);
    CHECK(grid.total_votes == 51);
    const auto peak = locate::find_peak(grid);
    CHECK(peak.votes == 1);
    CHECK(peak.row == 2);
    CHECK(peak.col == 2);
}

TEST_CASE("planted cluster beats a uniform background") {
    Rng rng(4);
    std::vector<locate::FeatureMatch> matches;
    for (int i = 0; i < 500; ++i) {
        matches.push_back(
            make_match(Pose2{0, uniform_range(rng, 0, 2500), uniform_range(rng, 0, 2500)}, 0, 0, 0));
    }
    for (int i = 0; i < 8; ++i) {
        matches.push_back(make_match(Pose2{0, 1275.0 + 0.5 * i, 1530.0}, 0, 0, 0));
    }
    const auto grid = locate::accumulate(matches, simple_grid(50, 50));
    const auto peak = locate::find_peak(grid);
    CHECK(peak.row == 30);
    CHECK(peak.col == 25);
    CHECK(peak.votes >= 8);
}

TEST_CASE("one-ring gathering recovers clusters straddling a cell boundary") {
    std::vector<locate::FeatureMatch> matches;
    // Cluster centered on the boundary x = 100 (cells 1 and 2 of row 0).
    for (int i = 0; i < 6; ++i) matches.push_back(make_match(Pose2{0, 96.0 + i, 20.0}, 0, 0, 0));
    const auto grid = locate::accumulate(matches, simple_grid(10, 10));
    const auto peak = locate::find_peak(grid);
    CHECK(peak.votes == 4);  // 96..99 in cell 1
    CHECK(static_cast<int>(peak.candidates.size()) == 6);
}

TEST_CASE("peak ties break toward the lowest row and column") {
    std::vector<locate::FeatureMatch> matches;
    matches.push_back(make_match(Pose2{0, 470, 20}, 0, 0, 0));   // cell (0, 9)
    matches.push_back(make_match(Pose2{0, 20, 470}, 0, 0, 0));   // cell (9, 0)
    matches.push_back(make_match(Pose2{0, 470, 470}, 0, 0, 0));  // cell (9, 9)
    const auto grid = locate::accumulate(matches, simple_grid(10, 10));
    const auto peak = locate::find_peak(grid);
    CHECK(peak.row == 0);
    CHECK(peak.col == 9);
}

TEST_CASE("second peak excludes the one-ring neighborhood") {
    std::vector<locate::FeatureMatch> matches;
    for (int i = 0; i < 5; ++i) matches.push_back(make_match(Pose2{0, 120, 120}, 0, 0, 0));
    for (int i = 0; i < 4; ++i) matches.push_back(make_match(Pose2{0, 170, 120}, 0, 0, 0));  // neighbor
    for (int i = 0; i < 3; ++i) matches.push_back(make_match(Pose2{0, 420, 420}, 0, 0, 0));  // far
    const auto grid = locate::accumulate(matches, simple_grid(10, 10));
    const auto peak = locate::find_peak(grid);
    CHECK(peak.votes == 5);
    CHECK(peak.second_votes == 3);  // the far cell, not the adjacent 4
    CHECK(peak.candidates.size() == 9);
}

TEST_CASE("ransac_pose recovers a planted pose exactly from clean matches") {
    Rng rng(5);
    const Pose2 truth{0.8, 300.0, -150.0};
    std::vector<locate::FeatureMatch> candidates;
    for (int i = 0; i < 10; ++i) {
        const double qx = uniform_range(rng, 0, 640);
        const double qy = uniform_range(rng, 0, 480);
        const Vec2 world = apply(truth, {qx, qy});
        candidates.push_back(make_match(Pose2{0, world.x, world.y}, qx, qy, 0));
    }
    const auto fit = locate::ransac_pose(candidates, {});
    REQUIRE(fit.ok);
    CHECK(fit.inliers.size() == 10);
    double dt, dr;
    pose_delta(truth, fit.pose, dt, dr);
    CHECK(dt < 1e-6);
    CHECK(dr < 1e-9);
}

TEST_CASE("ransac_pose rejects a single candidate") {
    const auto fit = locate::ransac_pose({make_match(Pose2{}, 0, 0, 0)}, {});
    CHECK_FALSE(fit.ok);
}

TEST_CASE("ransac_pose survives 75 percent contamination in 99 of 100 trials") {
    int good = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(static_cast<uint64_t>(500 + trial));
        const Pose2 truth{uniform_range(rng, -kPi, kPi), uniform_range(rng, 0, 2000),
                          uniform_range(rng, 0, 2000)};
        std::vector<locate::FeatureMatch> candidates;
        for (int i = 0; i < 5; ++i) {
            const double qx = uniform_range(rng, 0, 640);
            const double qy = uniform_range(rng, 0, 480);
            const Vec2 world = apply(truth, {qx, qy});
            candidates.push_back(make_match(Pose2{0, world.x, world.y}, qx, qy, 0));
        }
        for (int i = 0; i < 15; ++i) {
            candidates.push_back(make_match(
                Pose2{0, uniform_range(rng, 0, 2500), uniform_range(rng, 0, 2500)},
                uniform_range(rng, 0, 640), uniform_range(rng, 0, 480), 0));
        }
        locate::LocateConfig cfg;
        cfg.seed = static_cast<uint64_t>(trial);
        const auto fit = locate::ransac_pose(candidates, cfg);
        if (!fit.ok) continue;
        double dt, dr;
        pose_delta(truth, fit.pose, dt, dr);
        if (dt <= 1.0 && dr * 180.0 / kPi <= 0.1) ++good;
    }
    CAPTURE(good);
    CHECK(good >= 99);
}

TEST_CASE("poisson null threshold matches hand-computed tails") {
    // mu=0.2 over 1e4 cells: P(X>=5)*cells ~ 2e-2 > 0.01, P(X>=6)*cells ~ 7e-4.
    CHECK(locate::poisson_null_threshold(0.2, 1e4, 0.01) == 6);
    CHECK(locate::poisson_null_threshold(0.0, 1e4, 0.01) == 1);
    // Larger mean pushes the threshold up.
    CHECK(locate::poisson_null_threshold(2.0, 1e4, 0.01) > 6);
}

TEST_CASE("localize recovers an undegraded query and is deterministic") {
    eval::SuiteConfig cfg;
    cfg.grid_rows = 2;
    cfg.grid_cols = 3;
    cfg.frame_width = 480;
    cfg.frame_height = 360;
    cfg.query_width = 320;
    cfg.query_height = 240;
    const auto suite = eval::build_suite(71, cfg);

    const Pose2 pose = eval::sample_query_pose(suite, cfg, 5);
    const auto sample = synth::sample_query(suite.texture, pose, cfg.query_width, cfg.query_height);

    locate::LocateConfig lc;
    lc.seed = 9;
    const auto a = locate::localize(suite.db, suite.index, sample.image, lc);
    const auto b = locate::localize(suite.db, suite.index, sample.image, lc);
    REQUIRE(a.success);
    REQUIRE(b.success);
    CHECK(a.result.pose.theta == b.result.pose.theta);
    CHECK(a.result.pose.tx == b.result.pose.tx);
    CHECK(a.result.pose.ty == b.result.pose.ty);
    CHECK(a.result.inliers.size() == b.result.inliers.size());

    double dt, dr;
    pose_delta(pose, a.result.pose, dt, dr);
    CHECK(dt < 2.0);
    CHECK(dr * 180.0 / kPi < 0.1);
    // The inliers are a subset of the peak-neighborhood candidates.
    CHECK(a.result.peak_votes >= static_cast<int>(a.result.inliers.size()));
    CHECK(a.result.total_matches > 0);

    // The reported pose is exactly the least-squares fit over its inliers.
    std::vector<Vec2> src, dst;
    for (const auto& m : a.result.inliers) {
        src.push_back({m.query.x, m.query.y});
        dst.push_back({m.database.pose.tx, m.database.pose.ty});
    }
    const Pose2 refit = rigid::fit_rigid(src, dst);
    CHECK(a.result.pose.theta == refit.theta);
    CHECK(a.result.pose.tx == refit.tx);
    CHECK(a.result.pose.ty == refit.ty);
}

TEST_CASE("a query from a foreign texture fails with a weak peak") {
    eval::SuiteConfig cfg;
    cfg.grid_rows = 2;
    cfg.grid_cols = 3;
    cfg.frame_width = 480;
    cfg.frame_height = 360;
    cfg.query_width = 320;
    cfg.query_height = 240;
    const auto suite = eval::build_suite(72, cfg);

    const auto foreign = synth::generate_texture(4242, 1024, 768, synth::TextureStyle::scratchy);
    const auto sample = synth::sample_query(foreign, Pose2{0.3, 280.0, 60.0}, 320, 240);
    const auto out = locate::localize(suite.db, suite.index, sample.image, {});
    CHECK_FALSE(out.success);
    CHECK(out.reason == locate::FailureReason::weak_peak);
}

TEST_CASE("blank queries fail with no features") {
    eval::SuiteConfig cfg;
    cfg.grid_rows = 2;
    cfg.grid_cols = 2;
    cfg.frame_width = 480;
    cfg.frame_height = 360;
    const auto suite = eval::build_suite(73, cfg);
    const GrayImage blank(480, 360, 0.5f);
    const auto out = locate::localize(suite.db, suite.index, blank, {});
    CHECK_FALSE(out.success);
    CHECK(out.reason == locate::FailureReason::no_features);
    CHECK(out.result.timings.total_ms > 0.0);
}

TEST_SUITE_END();
