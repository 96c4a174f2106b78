#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "texloc/geometry.hpp"
#include "texloc/mapdb.hpp"
#include "texloc/types.hpp"

namespace texloc::stitch {

struct StitchConfig {
    double ratio_threshold = 0.85;    // descriptor NN ratio test
    double inlier_threshold = 3.0;    // pixels
    int min_inliers = 8;
    int ransac_iterations = 1000;
    double ransac_confidence = 0.99;
    uint64_t seed = 0;
    int max_gn_iterations = 50;
    double gn_tolerance = 1e-9;       // on the update norm
    // 1 rad of rotation residual counts as this many pixels; set per frame
    // size as 0.5 * frame diagonal when 0.
    double rotation_weight = 0.0;
};

struct PairConstraint {
    uint32_t image_a = 0;
    uint32_t image_b = 0;
    Pose2 rel;           // b's frame expressed in a's frame
    int inlier_count = 0;
    double residual = 0.0;  // RMS pixels over inliers
};

// RANSAC rigid registration over descriptor matches (full 128-d).
// no-overlap is a value, not an error.
std::optional<PairConstraint> register_pair(const FeatureSet& features_a,
                                            const FeatureSet& features_b,
                                            uint32_t id_a, uint32_t id_b,
                                            const StitchConfig& cfg = {});

struct PoseGraph {
    std::vector<uint32_t> nodes;          // image ids
    std::vector<Pose2> estimates;         // parallel to nodes
    std::vector<PairConstraint> edges;
    uint32_t gauge = 0;                   // image id fixed at identity

    void require_connected() const;  // throws when the graph is disconnected
};

struct OptimizeReport {
    std::vector<std::pair<uint32_t, Pose2>> poses;
    double initial_residual = 0.0;
    double final_residual = 0.0;  // sum of squared weighted residuals
    int iterations = 0;
    bool converged = false;
};

// Gauss-Newton on the SE(2) residuals (dx, dy, weighted wrapped dtheta)
// with a backtracking line search; the total residual never increases
// between accepted iterations.
OptimizeReport optimize(const PoseGraph& graph, const StitchConfig& cfg = {});

struct StitchResult {
    std::vector<mapdb::MapImage> images;
    std::vector<PairConstraint> constraints;
    OptimizeReport report;
};

struct BrokenChain {
    size_t index;  // first frame of the consecutive pair that failed
};

// Sequential registration of capture-ordered frames, loop-closure
// candidates gated by current estimate proximity, then global optimization.
// Frame sizes are used for the rotation weight and the loop gate.
std::variant<StitchResult, BrokenChain> stitch_sequence(
    const std::vector<FeatureSet>& frames, const std::vector<std::pair<int, int>>& frame_sizes,
    const StitchConfig& cfg = {});

}  // namespace texloc::stitch
