#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "texloc/features.hpp"
#include "texloc/geometry.hpp"
#include "texloc/image.hpp"
#include "texloc/index.hpp"
#include "texloc/mapdb.hpp"
#include "texloc/types.hpp"

namespace texloc::locate {

// One tentative query-to-database correspondence.
struct FeatureMatch {
    Keypoint query;         // query-image keypoint
    WorldFeature database;  // matched database feature
    double distance = 0.0;  // squared L2 in projected descriptor space
};

// Pose of the query image implied by a match: the database feature's world
// pose composed with the inverse of the keypoint's image-frame pose (the
// relative pose between matched features is taken as identity).
Pose2 vote_origin(const FeatureMatch& match);

enum class VoteMode {
    origin,    // vote for the query-image origin
    location,  // vote for the matched feature's map position (baseline)
};

struct GridGeometry {
    double cell_size = 50.0;  // pixels
    double origin_x = 0.0;    // world coords of cell (0, 0) corner
    double origin_y = 0.0;
    int cols = 0;
    int rows = 0;

    size_t cell_count() const { return static_cast<size_t>(cols) * rows; }
};

// 2D accumulator over map space. Votes landing outside the grid go to a
// border sink: counted, never peak-eligible.
struct VoteGrid {
    GridGeometry geo;
    std::vector<int> counts;                  // rows x cols
    std::vector<std::vector<int>> cell_votes; // match indices per cell
    int sink_count = 0;
    int total_votes = 0;

    int count_at(int row, int col) const {
        return counts[static_cast<size_t>(row) * geo.cols + static_cast<size_t>(col)];
    }
};

// Grid covering the database features, padded so in-map query origins
// cannot fall off the edge.
GridGeometry grid_for_database(const mapdb::MapDatabase& db, double cell_size, double padding);

VoteGrid accumulate(const std::vector<FeatureMatch>& matches, const GridGeometry& geo,
                    VoteMode mode = VoteMode::origin);

struct Peak {
    int row = 0;
    int col = 0;
    int votes = 0;          // count in the peak cell alone
    int second_votes = 0;   // best cell outside the peak's 3x3 neighborhood
    std::vector<int> candidates;  // match indices in the peak cell + 8 neighbors
};

// Argmax cell (ties: lowest row, then col) and its one-ring candidates.
// Throws when the grid holds no votes.
Peak find_peak(const VoteGrid& grid);

struct LocateConfig {
    double cell_size = 50.0;
    int checks = 32;
    int neighbors_per_feature = 1;  // m-NN voting; 1 matches the deployed pipeline
    double inlier_threshold = 3.0;  // pixels
    int min_inliers = 5;
    int min_peak_votes = 5;
    double null_alpha = 0.01;  // Poisson-tail gate for weak peaks
    uint64_t seed = 0;
    features::DetectorConfig detector;
};

enum class FailureReason { none, no_features, no_matches, weak_peak, ransac_failure };
std::string to_string(FailureReason reason);

struct StageTimings {
    double detect_ms = 0.0;
    double describe_ms = 0.0;
    double project_ms = 0.0;
    double match_ms = 0.0;
    double vote_ms = 0.0;
    double ransac_ms = 0.0;
    double total_ms = 0.0;
};

struct LocalizationResult {
    Pose2 pose;  // query frame -> world frame
    std::vector<FeatureMatch> inliers;   // subset of the peak candidates
    int peak_votes = 0;         // votes in the peak cell plus its one-ring
    int second_peak_votes = 0;  // best cell outside that neighborhood
    int total_matches = 0;
    StageTimings timings;
};

struct LocalizeOutcome {
    bool success = false;
    FailureReason reason = FailureReason::none;
    LocalizationResult result;  // timings and vote stats populated on failure too
};

// RANSAC over the peak candidates; the reported pose is the least-squares
// rigid fit over the returned inliers. Needs >= 2 candidates.
struct RansacPoseResult {
    bool ok = false;
    Pose2 pose;
    std::vector<int> inliers;  // indices into candidates
};
RansacPoseResult ransac_pose(const std::vector<FeatureMatch>& candidates,
                             const LocateConfig& cfg = {});

// Full pipeline: detect, describe, project, per-bucket NN, vote, peak,
// RANSAC. Failures are values with a typed reason.
LocalizeOutcome localize(const mapdb::MapDatabase& db, const index::AnnIndex& index,
                         const GrayImage& query, const LocateConfig& cfg = {});

// Same pipeline starting from precomputed raw (128-d) query features.
LocalizeOutcome localize_features(const mapdb::MapDatabase& db, const index::AnnIndex& index,
                                  const FeatureSet& query_features, const LocateConfig& cfg = {});

// Smallest peak count inconsistent (at level alpha) with votes spread
// uniformly over the grid cells: min t with cells * P(Poisson(mu) >= t)
// <= alpha.
int poisson_null_threshold(double mean_per_cell, double cells, double alpha);

}  // namespace texloc::locate
