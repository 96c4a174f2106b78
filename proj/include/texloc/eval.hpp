#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "texloc/features.hpp"
#include "texloc/locate.hpp"
#include "texloc/mapdb.hpp"
#include "texloc/synth.hpp"

namespace texloc::eval {

struct SuccessCriterion {
    double max_translation_px = 30.0;  // 4.8 mm at the default scale
    double max_rotation_deg = 1.5;

    void validate() const;
};

// Estimate vs reference under the criterion (translation AND rotation must
// both be within bounds).
bool within_criterion(const SuccessCriterion& criterion, const Pose2& reference,
                      const Pose2& estimate);

enum class Verdict { success, localization_failed, insufficient_matches, pose_mismatch };
std::string to_string(Verdict verdict);

struct VerifyConfig {
    SuccessCriterion criterion;
    int min_correspondences = 10;
    double ratio_threshold = 0.85;
    double inlier_threshold = 3.0;  // pixels
    uint64_t seed = 0;
    features::DetectorConfig detector;
};

// Reference-based verification without ground truth: pick the map image
// closest to the predicted pose, re-fit the relative pose from the full
// feature sets (not just the stored ones), compare under the criterion.
class Verifier {
public:
    Verifier(const mapdb::MapDatabase& db, VerifyConfig cfg = {});

    // Full features for a map image, by default loaded from the image's
    // source raster and re-detected (cached). Tests may inject their own.
    void set_image_features(uint32_t image_id, FeatureSet features);

    Verdict verify(const locate::LocalizationResult& result, const FeatureSet& query_features);

private:
    const FeatureSet& features_for(const mapdb::MapImage& image);

    const mapdb::MapDatabase* db_;
    VerifyConfig cfg_;
    std::map<uint32_t, FeatureSet> cache_;
};

// Frames whose pose is displaced from BOTH adjacent frames by more than
// `factor` times the median neighbor displacement. Sequences shorter
// than 3 never flag.
std::vector<int> coherence_check(const std::vector<Pose2>& sequence, double factor = 2.0);

// ---------------------------------------------------------------------------
// Synthetic evaluation suites

struct SuiteConfig {
    synth::TextureStyle style = synth::TextureStyle::scratchy;
    int grid_rows = 5;
    int grid_cols = 5;
    int frame_width = 640;
    int frame_height = 480;
    double overlap = 0.55;          // fraction shared by consecutive frames
    double rotation_jitter_deg = 2.0;
    int query_width = 640;
    int query_height = 480;
    int k = 16;
    int features_per_image = 50;
    mapdb::SelectionPolicy policy = mapdb::SelectionPolicy::random;
    std::optional<pca::DescriptorBasis> preset_basis;
    uint64_t seed = 7;              // drives db selection and query placement
    bool use_stitching = false;     // truth-posed frames when false
    locate::LocateConfig locate;
    SuccessCriterion criterion;
    synth::Degradation degradation; // baseline degradation for queries
    synth::Degradation map_degradation;  // applied to the map frames themselves
};

// A texture, its (truth-posed or stitched) frame grid, per-frame full
// features, and the compact database built from them.
struct SyntheticSuite {
    synth::SyntheticTexture texture;
    std::vector<mapdb::MapImage> images;
    std::vector<FeatureSet> image_features;  // full 128-d sets
    mapdb::MapDatabase db;
    index::AnnIndex index;
    Pose2 world_from_texture;  // texture coords -> database world coords
    // Region of the texture covered by frames (texture coordinates).
    double covered_x0 = 0, covered_y0 = 0, covered_x1 = 0, covered_y1 = 0;
};

SyntheticSuite build_suite(uint64_t texture_seed, const SuiteConfig& cfg);

// Serpentine frame poses for a rows x cols capture grid (texture coords).
std::vector<Pose2> zigzag_grid_poses(uint64_t texture_seed, const SuiteConfig& cfg);

// Random fully-covered query pose in texture coordinates.
Pose2 sample_query_pose(const SyntheticSuite& suite, const SuiteConfig& cfg, uint64_t query_seed);

// Same, against an explicit covered rectangle.
Pose2 sample_query_pose(const synth::SyntheticTexture& texture, double x0, double y0, double x1,
                        double y1, int query_width, int query_height, uint64_t query_seed);

// One evaluated query.
struct FrameOutcome {
    bool success = false;
    locate::FailureReason reason = locate::FailureReason::none;
    double translation_error_px = 0.0;  // vs ground truth, when localized
    double rotation_error_deg = 0.0;
    double total_ms = 0.0;
};

FrameOutcome evaluate_query(const SyntheticSuite& suite, const SuiteConfig& cfg,
                            const synth::Degradation& degradation, uint64_t query_seed);

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { k, occlusion, blur, selection };
SweepAxis axis_from_string(const std::string& name);
std::string to_string(SweepAxis axis);

struct AxisResult {
    double axis_value = 0.0;
    std::string axis_label;
    int frames = 0;
    int successes = 0;
    double success_rate = 0.0;
    std::map<std::string, int> failure_histogram;
    double p50_ms = 0.0;
    double p90_ms = 0.0;
    double p99_ms = 0.0;
};

struct EvalReport {
    std::string axis_name;
    std::vector<uint64_t> texture_seeds;
    std::vector<AxisResult> results;
};

// Deterministic sweep over one design axis; default axis values are used
// when `values` is empty (k: {8,16}; occlusion: {0,.25,.5,.75};
// blur: {0,4,8,12}; selection: {random, top_response}).
EvalReport run_sweep(SweepAxis axis, const std::vector<uint64_t>& texture_seeds,
                     const SuiteConfig& cfg, int queries_per_texture,
                     std::vector<double> values = {});

void write_report_tsv(const EvalReport& report, const std::string& path);
void write_report_json(const EvalReport& report, const std::string& path);

}  // namespace texloc::eval
