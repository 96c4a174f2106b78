#include "texloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "texloc/matching.hpp"
#include "texloc/rigid.hpp"
#include "texloc/rng.hpp"
#include "texloc/stitch.hpp"
#include "texloc/threading.hpp"

namespace texloc::eval {

void SuccessCriterion::validate() const {
    if (max_translation_px <= 0.0 || max_rotation_deg <= 0.0) {
        throw std::invalid_argument("success criterion bounds must be positive");
    }
}

bool within_criterion(const SuccessCriterion& criterion, const Pose2& reference,
                      const Pose2& estimate) {
    double d_trans, d_rot;
    pose_delta(reference, estimate, d_trans, d_rot);
    return d_trans <= criterion.max_translation_px &&
           d_rot * 180.0 / kPi <= criterion.max_rotation_deg;
}

std::string to_string(Verdict verdict) {
    switch (verdict) {
        case Verdict::success: return "success";
        case Verdict::localization_failed: return "localization_failed";
        case Verdict::insufficient_matches: return "insufficient_matches";
        case Verdict::pose_mismatch: return "pose_mismatch";
    }
    return "?";
}

Verifier::Verifier(const mapdb::MapDatabase& db, VerifyConfig cfg) : db_(&db), cfg_(std::move(cfg)) {
    cfg_.criterion.validate();
}

void Verifier::set_image_features(uint32_t image_id, FeatureSet features) {
    cache_[image_id] = std::move(features);
}

const FeatureSet& Verifier::features_for(const mapdb::MapImage& image) {
    auto it = cache_.find(image.image_id);
    if (it != cache_.end()) return it->second;
    if (image.source.empty()) {
        throw std::runtime_error("verifier: no features registered for image " +
                                 std::to_string(image.image_id) + " and no source raster");
    }
    const GrayImage raster = load_image(image.source);
    return cache_.emplace(image.image_id, features::detect_and_describe(raster, cfg_.detector))
        .first->second;
}

Verdict Verifier::verify(const locate::LocalizationResult& result,
                         const FeatureSet& query_features) {
    if (db_->images.empty()) throw std::runtime_error("verifier: database has no images");

    // Closest map image under the predicted pose, by frame-center distance.
    double qx = 0.0, qy = 0.0;
    for (const Keypoint& kp : query_features.keypoints) {
        qx = std::max(qx, kp.x);
        qy = std::max(qy, kp.y);
    }
    const Vec2 query_center = apply(result.pose, {0.5 * qx, 0.5 * qy});
    const mapdb::MapImage* closest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const mapdb::MapImage& im : db_->images) {
        const Vec2 center = apply(im.pose, {0.5 * im.width, 0.5 * im.height});
        const double d = norm(center - query_center);
        if (d < best) {
            best = d;
            closest = &im;
        }
    }

    const FeatureSet& image_features = features_for(*closest);
    const auto matches = matching::match_ratio(image_features, query_features, cfg_.ratio_threshold);
    if (static_cast<int>(matches.size()) < cfg_.min_correspondences) {
        return Verdict::insufficient_matches;
    }

    std::vector<Vec2> src, dst;
    src.reserve(matches.size());
    dst.reserve(matches.size());
    for (const auto& [ii, iq] : matches) {
        const Keypoint& kq = query_features.keypoints[static_cast<size_t>(iq)];
        const Keypoint& ki = image_features.keypoints[static_cast<size_t>(ii)];
        src.push_back({kq.x, kq.y});
        dst.push_back({ki.x, ki.y});
    }
    rigid::RansacParams rp;
    rp.inlier_threshold = cfg_.inlier_threshold;
    rp.min_inliers = cfg_.min_correspondences;
    rp.seed = derive_seed(cfg_.seed, 0xEF17);
    const rigid::RansacResult fit = rigid::ransac_rigid(src, dst, rp);
    if (!fit.ok) return Verdict::insufficient_matches;

    // Predicted query pose expressed in the image frame.
    const Pose2 predicted = relative(closest->pose, result.pose);
    return within_criterion(cfg_.criterion, fit.pose, predicted) ? Verdict::success
                                                                 : Verdict::pose_mismatch;
}

std::vector<int> coherence_check(const std::vector<Pose2>& sequence, double factor) {
    std::vector<int> flags;
    const size_t n = sequence.size();
    if (n < 3) return flags;

    std::vector<double> steps(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
        steps[i] = std::hypot(sequence[i + 1].tx - sequence[i].tx,
                              sequence[i + 1].ty - sequence[i].ty);
    }
    std::vector<double> sorted = steps;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double bound = factor * median;

    for (size_t i = 0; i < n; ++i) {
        const double to_prev = i > 0 ? steps[i - 1] : std::numeric_limits<double>::infinity();
        const double to_next = i + 1 < n ? steps[i] : std::numeric_limits<double>::infinity();
        if (std::min(to_prev, to_next) > bound) flags.push_back(static_cast<int>(i));
    }
    return flags;
}

// ---------------------------------------------------------------------------

std::vector<Pose2> zigzag_grid_poses(uint64_t texture_seed, const SuiteConfig& cfg) {
    const double step_x = cfg.frame_width * (1.0 - cfg.overlap);
    const double step_y = cfg.frame_height * (1.0 - cfg.overlap);
    const double pad = 64.0;
    Rng rng(derive_seed(texture_seed, 0x916));

    std::vector<Pose2> poses;
    for (int r = 0; r < cfg.grid_rows; ++r) {
        for (int ci = 0; ci < cfg.grid_cols; ++ci) {
            const int c = (r % 2 == 0) ? ci : cfg.grid_cols - 1 - ci;  // serpentine
            const double cx = pad + c * step_x + 0.5 * cfg.frame_width;
            const double cy = pad + r * step_y + 0.5 * cfg.frame_height;
            const double theta = uniform_range(rng, -1.0, 1.0) * cfg.rotation_jitter_deg * kPi / 180.0;
            Pose2 p;
            p.theta = theta;
            const double cth = std::cos(theta), sth = std::sin(theta);
            p.tx = cx - (cth * 0.5 * cfg.frame_width - sth * 0.5 * cfg.frame_height);
            p.ty = cy - (sth * 0.5 * cfg.frame_width + cth * 0.5 * cfg.frame_height);
            poses.push_back(p);
        }
    }
    return poses;
}

SyntheticSuite build_suite(uint64_t texture_seed, const SuiteConfig& cfg) {
    cfg.criterion.validate();
    const double step_x = cfg.frame_width * (1.0 - cfg.overlap);
    const double step_y = cfg.frame_height * (1.0 - cfg.overlap);
    const double pad = 64.0;
    const int tex_w = std::max(512, static_cast<int>(std::ceil(
                                        2 * pad + (cfg.grid_cols - 1) * step_x + cfg.frame_width)));
    const int tex_h = std::max(512, static_cast<int>(std::ceil(
                                        2 * pad + (cfg.grid_rows - 1) * step_y + cfg.frame_height)));

    SyntheticSuite suite;
    suite.texture = synth::generate_texture(texture_seed, tex_w, tex_h, cfg.style);
    suite.covered_x0 = pad;
    suite.covered_y0 = pad;
    suite.covered_x1 = pad + (cfg.grid_cols - 1) * step_x + cfg.frame_width;
    suite.covered_y1 = pad + (cfg.grid_rows - 1) * step_y + cfg.frame_height;

    const std::vector<Pose2> truth_poses = zigzag_grid_poses(texture_seed, cfg);
    const size_t n = truth_poses.size();

    std::vector<GrayImage> frames(n);
    for (size_t i = 0; i < n; ++i) {
        synth::Degradation deg = cfg.map_degradation;
        if (deg.any()) deg.seed = derive_seed(deg.seed, 0x3A9000000ULL + i);
        frames[i] = synth::sample_query(suite.texture, truth_poses[i], cfg.frame_width,
                                        cfg.frame_height, deg)
                        .image;
    }

    suite.image_features.resize(n);
    parallel_for(n, [&](size_t i) {
        suite.image_features[i] = features::detect_and_describe(frames[i], cfg.locate.detector);
    });

    if (cfg.use_stitching) {
        std::vector<std::pair<int, int>> sizes(n, {cfg.frame_width, cfg.frame_height});
        stitch::StitchConfig sc;
        sc.seed = derive_seed(cfg.seed, texture_seed);
        auto stitched = stitch::stitch_sequence(suite.image_features, sizes, sc);
        if (std::holds_alternative<stitch::BrokenChain>(stitched)) {
            throw std::runtime_error("suite stitching failed at frame " +
                                     std::to_string(std::get<stitch::BrokenChain>(stitched).index));
        }
        suite.images = std::get<stitch::StitchResult>(stitched).images;

        // Gauge transform mapping texture coordinates into the stitched
        // world frame, fit over the frame translations.
        std::vector<Vec2> src, dst;
        for (size_t i = 0; i < n; ++i) {
            src.push_back({truth_poses[i].tx, truth_poses[i].ty});
            dst.push_back({suite.images[i].pose.tx, suite.images[i].pose.ty});
        }
        suite.world_from_texture = rigid::fit_rigid(src, dst);
    } else {
        suite.images.resize(n);
        for (size_t i = 0; i < n; ++i) {
            suite.images[i] = {static_cast<uint32_t>(i), truth_poses[i], cfg.frame_width,
                               cfg.frame_height, ""};
        }
        suite.world_from_texture = Pose2::identity();
    }

    mapdb::BuildParams bp;
    bp.k = cfg.k;
    bp.features_per_image = cfg.features_per_image;
    bp.seed = derive_seed(cfg.seed, texture_seed ^ 0xDB);
    bp.policy = cfg.policy;
    bp.preset_basis = cfg.preset_basis;
    suite.db = mapdb::build_database(suite.images, suite.image_features, bp);
    suite.index = index::AnnIndex::build(suite.db.features, suite.db.buckets, 4, bp.seed);
    return suite;
}

Pose2 sample_query_pose(const synth::SyntheticTexture& texture, double x0, double y0, double x1,
                        double y1, int query_width, int query_height, uint64_t query_seed) {
    const double half_diag = 0.5 * std::hypot(query_width, query_height);
    const double cx0 = x0 + half_diag + 2.0;
    const double cx1 = x1 - half_diag - 2.0;
    const double cy0 = y0 + half_diag + 2.0;
    const double cy1 = y1 - half_diag - 2.0;
    if (cx1 <= cx0 || cy1 <= cy0) {
        throw std::invalid_argument("covered region too small for the requested query size");
    }
    Rng rng(derive_seed(query_seed, 0x9057));
    for (int attempt = 0; attempt < 64; ++attempt) {
        const double cx = uniform_range(rng, cx0, cx1);
        const double cy = uniform_range(rng, cy0, cy1);
        const double theta = uniform_range(rng, -kPi, kPi);
        Pose2 p;
        p.theta = theta;
        const double c = std::cos(theta), s = std::sin(theta);
        p.tx = cx - (c * 0.5 * query_width - s * 0.5 * query_height);
        p.ty = cy - (s * 0.5 * query_width + c * 0.5 * query_height);
        if (synth::crop_in_bounds(texture, p, query_width, query_height)) return p;
    }
    throw std::runtime_error("could not sample an in-bounds query pose");
}

Pose2 sample_query_pose(const SyntheticSuite& suite, const SuiteConfig& cfg, uint64_t query_seed) {
    return sample_query_pose(suite.texture, suite.covered_x0, suite.covered_y0, suite.covered_x1,
                             suite.covered_y1, cfg.query_width, cfg.query_height, query_seed);
}

FrameOutcome evaluate_query(const SyntheticSuite& suite, const SuiteConfig& cfg,
                            const synth::Degradation& degradation, uint64_t query_index) {
    const Pose2 pose_tex =
        sample_query_pose(suite, cfg, derive_seed(cfg.seed, 0x715000000ULL + query_index));
    synth::Degradation deg = degradation;
    deg.seed = derive_seed(cfg.seed, 0xDE6000000ULL + query_index);
    const synth::QuerySample sample =
        synth::sample_query(suite.texture, pose_tex, cfg.query_width, cfg.query_height, deg);

    locate::LocateConfig lc = cfg.locate;
    lc.seed = derive_seed(cfg.seed, 0xA5A000000ULL + query_index);
    const locate::LocalizeOutcome outcome = locate::localize(suite.db, suite.index, sample.image, lc);

    FrameOutcome fo;
    fo.total_ms = outcome.result.timings.total_ms;
    fo.reason = outcome.reason;
    if (!outcome.success) return fo;

    const Pose2 truth_world = compose(suite.world_from_texture, pose_tex);
    double d_trans, d_rot;
    pose_delta(truth_world, outcome.result.pose, d_trans, d_rot);
    fo.translation_error_px = d_trans;
    fo.rotation_error_deg = d_rot * 180.0 / kPi;
    fo.success = within_criterion(cfg.criterion, truth_world, outcome.result.pose);
    return fo;
}

// ---------------------------------------------------------------------------

SweepAxis axis_from_string(const std::string& name) {
    if (name == "k") return SweepAxis::k;
    if (name == "occlusion") return SweepAxis::occlusion;
    if (name == "blur") return SweepAxis::blur;
    if (name == "selection") return SweepAxis::selection;
    throw std::invalid_argument("unknown sweep axis: " + name +
                                " (expected k|occlusion|blur|selection)");
}

std::string to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::k: return "k";
        case SweepAxis::occlusion: return "occlusion";
        case SweepAxis::blur: return "blur";
        case SweepAxis::selection: return "selection";
    }
    return "?";
}

namespace {

double percentile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const size_t i = static_cast<size_t>(pos);
    const size_t j = std::min(i + 1, values.size() - 1);
    const double f = pos - static_cast<double>(i);
    return values[i] * (1.0 - f) + values[j] * f;
}

std::string axis_label(SweepAxis axis, double value) {
    std::ostringstream ss;
    switch (axis) {
        case SweepAxis::k: ss << "k=" << static_cast<int>(value); break;
        case SweepAxis::occlusion: ss << "occlusion=" << value; break;
        case SweepAxis::blur: ss << "blur_px=" << value; break;
        case SweepAxis::selection:
            ss << (value < 0.5 ? "selection=random" : "selection=top_response");
            break;
    }
    return ss.str();
}

}  // namespace

EvalReport run_sweep(SweepAxis axis, const std::vector<uint64_t>& texture_seeds,
                     const SuiteConfig& cfg, int queries_per_texture,
                     std::vector<double> values) {
    if (texture_seeds.empty()) throw std::invalid_argument("run_sweep: no texture seeds");
    if (queries_per_texture < 1) throw std::invalid_argument("run_sweep: need queries");
    if (values.empty()) {
        switch (axis) {
            case SweepAxis::k: values = {8, 16}; break;
            case SweepAxis::occlusion: values = {0.0, 0.25, 0.5, 0.75}; break;
            case SweepAxis::blur: values = {0.0, 4.0, 8.0, 12.0}; break;
            case SweepAxis::selection: values = {0.0, 1.0}; break;
        }
    }

    EvalReport report;
    report.axis_name = to_string(axis);
    report.texture_seeds = texture_seeds;
    report.results.resize(values.size());
    for (size_t v = 0; v < values.size(); ++v) {
        report.results[v].axis_value = values[v];
        report.results[v].axis_label = axis_label(axis, values[v]);
    }

    for (uint64_t texture_seed : texture_seeds) {
        // The db changes along k/selection axes; queries change along
        // occlusion/blur axes. Cache what stays fixed.
        std::optional<SyntheticSuite> shared_suite;
        if (axis == SweepAxis::occlusion || axis == SweepAxis::blur) {
            shared_suite = build_suite(texture_seed, cfg);
        }

        for (size_t v = 0; v < values.size(); ++v) {
            SuiteConfig axis_cfg = cfg;
            synth::Degradation deg = cfg.degradation;
            switch (axis) {
                case SweepAxis::k:
                    axis_cfg.k = static_cast<int>(values[v]);
                    axis_cfg.preset_basis.reset();  // basis dim follows k
                    break;
                case SweepAxis::occlusion: deg.occlusion_fraction = values[v]; break;
                case SweepAxis::blur: deg.blur_length = values[v]; break;
                case SweepAxis::selection:
                    axis_cfg.policy = values[v] < 0.5 ? mapdb::SelectionPolicy::random
                                                      : mapdb::SelectionPolicy::top_response;
                    break;
            }

            const SyntheticSuite& suite =
                shared_suite ? *shared_suite : build_suite(texture_seed, axis_cfg);

            AxisResult& res = report.results[v];
            std::vector<double> times;
            std::vector<FrameOutcome> outcomes(static_cast<size_t>(queries_per_texture));
            parallel_for(outcomes.size(), [&](size_t q) {
                outcomes[q] = evaluate_query(suite, axis_cfg, deg, q);
            });
            for (const FrameOutcome& fo : outcomes) {
                ++res.frames;
                times.push_back(fo.total_ms);
                if (fo.success) {
                    ++res.successes;
                } else {
                    const std::string key = fo.reason == locate::FailureReason::none
                                                ? "pose_error"
                                                : locate::to_string(fo.reason);
                    ++res.failure_histogram[key];
                }
            }
            res.p50_ms = percentile(times, 0.50);
            res.p90_ms = percentile(times, 0.90);
            res.p99_ms = percentile(times, 0.99);
        }
    }

    for (AxisResult& res : report.results) {
        res.success_rate = res.frames > 0 ? static_cast<double>(res.successes) / res.frames : 0.0;
    }
    return report;
}

void write_report_tsv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "# axis\t" << report.axis_name << "\n";
    out << "axis_value\tlabel\tframes\tsuccesses\tsuccess_rate\tp50_ms\tp90_ms\tp99_ms\tfailures\n";
    for (const AxisResult& r : report.results) {
        out << r.axis_value << '\t' << r.axis_label << '\t' << r.frames << '\t' << r.successes
            << '\t' << r.success_rate << '\t' << r.p50_ms << '\t' << r.p90_ms << '\t' << r.p99_ms
            << '\t';
        bool first = true;
        for (const auto& [reason, count] : r.failure_histogram) {
            if (!first) out << ';';
            out << reason << '=' << count;
            first = false;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

void write_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["axis"] = report.axis_name;
    j["texture_seeds"] = report.texture_seeds;
    j["results"] = nlohmann::json::array();
    for (const AxisResult& r : report.results) {
        nlohmann::json jr;
        jr["axis_value"] = r.axis_value;
        jr["label"] = r.axis_label;
        jr["frames"] = r.frames;
        jr["successes"] = r.successes;
        jr["success_rate"] = r.success_rate;
        jr["p50_ms"] = r.p50_ms;
        jr["p90_ms"] = r.p90_ms;
        jr["p99_ms"] = r.p99_ms;
        jr["failures"] = r.failure_histogram;
        j["results"].push_back(jr);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace texloc::eval
