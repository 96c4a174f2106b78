#include "texloc/locate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "texloc/rigid.hpp"
#include "texloc/rng.hpp"

namespace texloc::locate {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

std::string to_string(FailureReason reason) {
    switch (reason) {
        case FailureReason::none: return "none";
        case FailureReason::no_features: return "no_features";
        case FailureReason::no_matches: return "no_matches";
        case FailureReason::weak_peak: return "weak_peak";
        case FailureReason::ransac_failure: return "ransac_failure";
    }
    return "?";
}

Pose2 vote_origin(const FeatureMatch& match) {
    return compose(match.database.pose, inverse(keypoint_pose(match.query)));
}

GridGeometry grid_for_database(const mapdb::MapDatabase& db, double cell_size, double padding) {
    if (db.features.empty()) throw std::invalid_argument("grid_for_database: empty database");
    double min_x = db.features[0].pose.tx, max_x = min_x;
    double min_y = db.features[0].pose.ty, max_y = min_y;
    for (const WorldFeature& f : db.features) {
        min_x = std::min(min_x, f.pose.tx);
        max_x = std::max(max_x, f.pose.tx);
        min_y = std::min(min_y, f.pose.ty);
        max_y = std::max(max_y, f.pose.ty);
    }
    GridGeometry geo;
    geo.cell_size = cell_size;
    geo.origin_x = min_x - padding;
    geo.origin_y = min_y - padding;
    geo.cols = std::max(1, static_cast<int>(std::ceil((max_x - min_x + 2.0 * padding) / cell_size)));
    geo.rows = std::max(1, static_cast<int>(std::ceil((max_y - min_y + 2.0 * padding) / cell_size)));
    return geo;
}

VoteGrid accumulate(const std::vector<FeatureMatch>& matches, const GridGeometry& geo,
                    VoteMode mode) {
    if (geo.cols < 1 || geo.rows < 1 || geo.cell_size <= 0.0) {
        throw std::invalid_argument("accumulate: bad grid geometry");
    }
    VoteGrid grid;
    grid.geo = geo;
    grid.counts.assign(geo.cell_count(), 0);
    grid.cell_votes.resize(geo.cell_count());
    for (size_t m = 0; m < matches.size(); ++m) {
        Vec2 at;
        if (mode == VoteMode::origin) {
            const Pose2 vote = vote_origin(matches[m]);
            at = {vote.tx, vote.ty};
        } else {
            at = {matches[m].database.pose.tx, matches[m].database.pose.ty};
        }
        const double fx = (at.x - geo.origin_x) / geo.cell_size;
        const double fy = (at.y - geo.origin_y) / geo.cell_size;
        ++grid.total_votes;
        if (fx < 0.0 || fy < 0.0 || fx >= geo.cols || fy >= geo.rows) {
            ++grid.sink_count;
            continue;
        }
        const size_t cell = static_cast<size_t>(static_cast<int>(fy)) * geo.cols +
                            static_cast<size_t>(static_cast<int>(fx));
        ++grid.counts[cell];
        grid.cell_votes[cell].push_back(static_cast<int>(m));
    }
    return grid;
}

Peak find_peak(const VoteGrid& grid) {
    if (grid.total_votes - grid.sink_count <= 0) {
        throw std::invalid_argument("find_peak: grid holds no votes");
    }
    Peak peak;
    int best = -1;
    for (int r = 0; r < grid.geo.rows; ++r) {
        for (int c = 0; c < grid.geo.cols; ++c) {
            const int v = grid.count_at(r, c);
            if (v > best) {
                best = v;
                peak.row = r;
                peak.col = c;
            }
        }
    }
    peak.votes = best;

    for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
            const int r = peak.row + dr;
            const int c = peak.col + dc;
            if (r < 0 || c < 0 || r >= grid.geo.rows || c >= grid.geo.cols) continue;
            const auto& votes = grid.cell_votes[static_cast<size_t>(r) * grid.geo.cols +
                                                static_cast<size_t>(c)];
            peak.candidates.insert(peak.candidates.end(), votes.begin(), votes.end());
        }
    }
    std::sort(peak.candidates.begin(), peak.candidates.end());

    for (int r = 0; r < grid.geo.rows; ++r) {
        for (int c = 0; c < grid.geo.cols; ++c) {
            if (std::abs(r - peak.row) <= 1 && std::abs(c - peak.col) <= 1) continue;
            peak.second_votes = std::max(peak.second_votes, grid.count_at(r, c));
        }
    }
    return peak;
}

RansacPoseResult ransac_pose(const std::vector<FeatureMatch>& candidates,
                             const LocateConfig& cfg) {
    RansacPoseResult out;
    if (candidates.size() < 2) return out;

    std::vector<Vec2> src, dst;
    src.reserve(candidates.size());
    dst.reserve(candidates.size());
    for (const FeatureMatch& m : candidates) {
        src.push_back({m.query.x, m.query.y});
        dst.push_back({m.database.pose.tx, m.database.pose.ty});
    }

    rigid::RansacParams rp;
    rp.inlier_threshold = cfg.inlier_threshold;
    rp.min_inliers = cfg.min_inliers;
    rp.seed = derive_seed(cfg.seed, 0x10CA7E);
    const rigid::RansacResult res = rigid::ransac_rigid(src, dst, rp);
    if (!res.ok) return out;
    out.ok = true;
    out.pose = res.pose;
    out.inliers = res.inliers;
    return out;
}

int poisson_null_threshold(double mean_per_cell, double cells, double alpha) {
    if (mean_per_cell <= 0.0 || cells <= 0.0) return 1;
    double pmf = std::exp(-mean_per_cell);
    double tail = 1.0 - pmf;  // P(X >= 1)
    int t = 1;
    while (cells * tail > alpha && t < 100000) {
        pmf *= mean_per_cell / t;
        tail -= pmf;
        if (tail < 0.0) tail = 0.0;
        ++t;
    }
    return t;
}

LocalizeOutcome localize_features(const mapdb::MapDatabase& db, const index::AnnIndex& index,
                                  const FeatureSet& query_features, const LocateConfig& cfg) {
    LocalizeOutcome out;
    StageTimings& t = out.result.timings;
    const auto started = Clock::now();

    if (query_features.empty()) {
        out.reason = FailureReason::no_features;
        t.total_ms = ms_since(started);
        return out;
    }

    const auto project_start = Clock::now();
    std::vector<Descriptor> projected;
    projected.reserve(query_features.size());
    for (const Descriptor& d : query_features.descriptors) {
        projected.push_back(pca::project(db.basis, d));
    }
    t.project_ms = ms_since(project_start);

    const auto match_start = Clock::now();
    std::vector<FeatureMatch> matches;
    matches.reserve(query_features.size());
    const int m_nn = std::max(1, cfg.neighbors_per_feature);
    for (size_t i = 0; i < query_features.size(); ++i) {
        const Keypoint& kp = query_features.keypoints[i];
        if (m_nn == 1) {
            const index::QueryResult qr = index.query(projected[i], kp.scale, cfg.checks);
            if (!qr.found()) continue;  // empty scale bucket
            matches.push_back({kp, db.features[static_cast<size_t>(qr.feature)], qr.distance});
        } else {
            for (const index::QueryResult& qr :
                 index.query_knn(projected[i], kp.scale, cfg.checks, m_nn)) {
                matches.push_back({kp, db.features[static_cast<size_t>(qr.feature)], qr.distance});
            }
        }
    }
    t.match_ms = ms_since(match_start);
    out.result.total_matches = static_cast<int>(matches.size());

    if (matches.empty()) {
        out.reason = FailureReason::no_matches;
        t.total_ms = ms_since(started);
        return out;
    }

    const auto vote_start = Clock::now();
    double query_diag = 0.0;
    for (const Keypoint& kp : query_features.keypoints) {
        query_diag = std::max(query_diag, std::hypot(kp.x, kp.y));
    }
    const GridGeometry geo = grid_for_database(db, cfg.cell_size, query_diag + cfg.cell_size);
    const VoteGrid grid = accumulate(matches, geo, VoteMode::origin);
    const Peak peak = find_peak(grid);
    t.vote_ms = ms_since(vote_start);
    out.result.peak_votes = static_cast<int>(peak.candidates.size());
    out.result.second_peak_votes = peak.second_votes;

    const int in_grid = grid.total_votes - grid.sink_count;
    const double mean_per_cell = static_cast<double>(in_grid) / static_cast<double>(geo.cell_count());
    const int null_gate =
        poisson_null_threshold(mean_per_cell, static_cast<double>(geo.cell_count()), cfg.null_alpha);
    if (peak.votes < std::max(cfg.min_peak_votes, null_gate)) {
        out.reason = FailureReason::weak_peak;
        t.total_ms = ms_since(started);
        return out;
    }

    const auto ransac_start = Clock::now();
    std::vector<FeatureMatch> candidates;
    candidates.reserve(peak.candidates.size());
    for (int idx : peak.candidates) candidates.push_back(matches[static_cast<size_t>(idx)]);
    const RansacPoseResult fit = ransac_pose(candidates, cfg);
    t.ransac_ms = ms_since(ransac_start);
    if (!fit.ok) {
        out.reason = FailureReason::ransac_failure;
        t.total_ms = ms_since(started);
        return out;
    }

    out.success = true;
    out.result.pose = fit.pose;
    out.result.inliers.reserve(fit.inliers.size());
    for (int idx : fit.inliers) out.result.inliers.push_back(candidates[static_cast<size_t>(idx)]);
    t.total_ms = ms_since(started);
    return out;
}

LocalizeOutcome localize(const mapdb::MapDatabase& db, const index::AnnIndex& index,
                         const GrayImage& query, const LocateConfig& cfg) {
    const auto started = Clock::now();
    const auto detect_start = Clock::now();
    FeatureSet features = features::detect_and_describe(query, cfg.detector);
    const double detect_describe_ms = ms_since(detect_start);

    LocalizeOutcome out = localize_features(db, index, features, cfg);
    // detect_and_describe shares one pyramid; split the time evenly for
    // reporting.
    out.result.timings.detect_ms = 0.5 * detect_describe_ms;
    out.result.timings.describe_ms = 0.5 * detect_describe_ms;
    out.result.timings.total_ms = ms_since(started);
    return out;
}

}  // namespace texloc::locate
