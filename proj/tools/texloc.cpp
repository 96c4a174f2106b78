// texloc: ground-texture global localization pipeline.
//
// Subcommands: synth, build-map, build-db, localize, evaluate, db-info.
// Exit codes: 0 success, 1 operation failure (e.g. localization), 2 usage
// error, 3 I/O or format error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "texloc/eval.hpp"
#include "texloc/features.hpp"
#include "texloc/image.hpp"
#include "texloc/locate.hpp"
#include "texloc/mapdb.hpp"
#include "texloc/rng.hpp"
#include "texloc/stitch.hpp"
#include "texloc/synth.hpp"
#include "texloc/threading.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace texloc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

void add_detector_flags(CLI::App* cmd, features::DetectorConfig& cfg) {
    cmd->add_option("--octaves", cfg.octaves, "Pyramid octaves")->capture_default_str();
    cmd->add_option("--scales-per-octave", cfg.scales_per_octave, "DoG intervals per octave")
        ->capture_default_str();
    cmd->add_option("--base-sigma", cfg.base_sigma, "Base blur sigma")->capture_default_str();
    cmd->add_option("--contrast", cfg.contrast_threshold, "DoG contrast threshold")
        ->capture_default_str();
    cmd->add_option("--edge-ratio", cfg.edge_ratio_threshold, "Edge response ratio limit")
        ->capture_default_str();
    cmd->add_option("--max-features", cfg.max_features, "Cap on detected keypoints (0 = all)")
        ->capture_default_str();
}

eval::SuccessCriterion parse_criterion(const std::string& text) {
    // Format: "<trans>px:<rot>deg", e.g. "30px:1.5deg".
    eval::SuccessCriterion c;
    const size_t colon = text.find(':');
    const size_t px = text.find("px");
    const size_t deg = text.find("deg");
    if (colon == std::string::npos || px == std::string::npos || deg == std::string::npos ||
        px > colon || deg < colon) {
        throw CLI::ValidationError("--criterion", "expected \"<N>px:<M>deg\", e.g. 30px:1.5deg");
    }
    try {
        c.max_translation_px = std::stod(text.substr(0, px));
        c.max_rotation_deg = std::stod(text.substr(colon + 1, deg - colon - 1));
    } catch (const std::exception&) {
        throw CLI::ValidationError("--criterion", "expected \"<N>px:<M>deg\", e.g. 30px:1.5deg");
    }
    c.validate();
    return c;
}

std::vector<std::string> sorted_rasters(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png" || ext == ".pgm") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

FeatureSet features_for_raster(const std::string& raster, const features::DetectorConfig& cfg) {
    const std::string feat = raster + ".feat";
    if (fs::exists(feat)) return features::read_feature_file(feat);
    return features::detect_and_describe(load_image(raster), cfg);
}

json pose_json(const Pose2& pose, double mm_per_px) {
    return json{{"tx_px", pose.tx},
                {"ty_px", pose.ty},
                {"theta_deg", pose.theta * 180.0 / kPi},
                {"tx_mm", pose.tx * mm_per_px},
                {"ty_mm", pose.ty * mm_per_px}};
}

json timings_json(const locate::StageTimings& t) {
    return json{{"detect_ms", t.detect_ms}, {"describe_ms", t.describe_ms},
                {"project_ms", t.project_ms}, {"match_ms", t.match_ms},
                {"vote_ms", t.vote_ms},       {"ransac_ms", t.ransac_ms},
                {"total_ms", t.total_ms}};
}

// --------------------------------------------------------------------------
// synth

struct SynthArgs {
    uint64_t seed = 1;
    int width = 2048;
    int height = 1536;
    std::string style = "scratchy";
    std::string texture_out;
    std::string frames_out;
    int grid_rows = 5, grid_cols = 5;
    int frame_width = 640, frame_height = 480;
    double overlap = 0.55;
    double rotation_jitter_deg = 2.0;
    std::string queries_out;
    int num_queries = 10;
    int query_width = 640, query_height = 480;
    double occlusion = 0.0, blur = 0.0, noise = 0.0, impulse = 0.0;
    uint64_t query_seed = 7;
};

int run_synth(const SynthArgs& a) {
    const synth::TextureStyle style = synth::style_from_string(a.style);

    eval::SuiteConfig sc;
    sc.style = style;
    sc.grid_rows = a.grid_rows;
    sc.grid_cols = a.grid_cols;
    sc.frame_width = a.frame_width;
    sc.frame_height = a.frame_height;
    sc.overlap = a.overlap;
    sc.rotation_jitter_deg = a.rotation_jitter_deg;
    sc.query_width = a.query_width;
    sc.query_height = a.query_height;

    // Texture sized to cover the frame grid when frames are requested.
    int tex_w = a.width, tex_h = a.height;
    if (!a.frames_out.empty()) {
        const double step_x = a.frame_width * (1.0 - a.overlap);
        const double step_y = a.frame_height * (1.0 - a.overlap);
        tex_w = std::max(tex_w, static_cast<int>(128 + (a.grid_cols - 1) * step_x + a.frame_width));
        tex_h = std::max(tex_h, static_cast<int>(128 + (a.grid_rows - 1) * step_y + a.frame_height));
    }
    const synth::SyntheticTexture tex = synth::generate_texture(a.seed, tex_w, tex_h, style);

    if (!a.texture_out.empty()) {
        save_image(tex.image, a.texture_out);
        std::cerr << "texture " << tex_w << "x" << tex_h << " -> " << a.texture_out << "\n";
    }

    if (!a.frames_out.empty()) {
        fs::create_directories(a.frames_out);
        const auto poses = eval::zigzag_grid_poses(a.seed, sc);
        std::ofstream truth(fs::path(a.frames_out) / "frames_truth.tsv");
        truth << "# frame\ttx_px\tty_px\ttheta_rad\n";
        truth.precision(12);
        for (size_t i = 0; i < poses.size(); ++i) {
            const auto q = synth::sample_query(tex, poses[i], a.frame_width, a.frame_height);
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%04zu.png", i);
            save_image(q.image, (fs::path(a.frames_out) / name).string());
            truth << i << '\t' << poses[i].tx << '\t' << poses[i].ty << '\t' << poses[i].theta
                  << '\n';
        }
        std::cerr << poses.size() << " frames -> " << a.frames_out << "\n";
    }

    if (!a.queries_out.empty()) {
        fs::create_directories(a.queries_out);
        const double step_x = a.frame_width * (1.0 - a.overlap);
        const double step_y = a.frame_height * (1.0 - a.overlap);
        const double x0 = 64.0, y0 = 64.0;
        const double x1 = x0 + (a.grid_cols - 1) * step_x + a.frame_width;
        const double y1 = y0 + (a.grid_rows - 1) * step_y + a.frame_height;
        std::ofstream truth(fs::path(a.queries_out) / "truth.tsv");
        truth << "# query\ttx_px\tty_px\ttheta_rad\n";
        truth.precision(12);
        for (int i = 0; i < a.num_queries; ++i) {
            const Pose2 pose = eval::sample_query_pose(
                tex, x0, y0, x1, y1, a.query_width, a.query_height,
                derive_seed(a.query_seed, static_cast<uint64_t>(i)));
            synth::Degradation deg;
            deg.occlusion_fraction = a.occlusion;
            deg.blur_length = a.blur;
            deg.noise_sigma = a.noise;
            deg.impulse_density = a.impulse;
            deg.seed = derive_seed(a.query_seed, 0xDE60000ULL + static_cast<uint64_t>(i));
            const auto q = synth::sample_query(tex, pose, a.query_width, a.query_height, deg);
            char name[32];
            std::snprintf(name, sizeof(name), "query_%04d.png", i);
            save_image(q.image, (fs::path(a.queries_out) / name).string());
            truth << i << '\t' << pose.tx << '\t' << pose.ty << '\t' << pose.theta << '\n';
        }
        std::cerr << a.num_queries << " queries -> " << a.queries_out << "\n";
    }
    return kExitOk;
}

// --------------------------------------------------------------------------
// build-map

struct BuildMapArgs {
    std::string frames;
    std::string out;
    features::DetectorConfig detector;
    uint64_t seed = 0;
    int min_inliers = 8;
};

int run_build_map(const BuildMapArgs& a) {
    const auto rasters = sorted_rasters(a.frames);
    if (rasters.empty()) {
        std::cerr << "error: no .png/.pgm frames in " << a.frames << "\n";
        return kExitIo;
    }
    std::cerr << "detecting features in " << rasters.size() << " frames...\n";

    std::vector<FeatureSet> sets(rasters.size());
    std::vector<std::pair<int, int>> sizes(rasters.size());
    parallel_for(rasters.size(), [&](size_t i) {
        const GrayImage img = load_image(rasters[i]);
        sizes[i] = {img.width, img.height};
        sets[i] = features::detect_and_describe(img, a.detector);
    });

    stitch::StitchConfig sc;
    sc.seed = a.seed;
    sc.min_inliers = a.min_inliers;
    const auto result = stitch::stitch_sequence(sets, sizes, sc);
    if (std::holds_alternative<stitch::BrokenChain>(result)) {
        const size_t at = std::get<stitch::BrokenChain>(result).index;
        std::cerr << "error: chain broken between frames " << at << " and " << at + 1
                  << " (no registration)\n";
        return kExitFailure;
    }
    const auto& stitched = std::get<stitch::StitchResult>(result);

    fs::create_directories(a.out);
    if (fs::weakly_canonical(a.out) != fs::weakly_canonical(a.frames)) {
        for (const std::string& r : rasters) {
            fs::copy_file(r, fs::path(a.out) / fs::path(r).filename(),
                          fs::copy_options::overwrite_existing);
        }
    }
    mapdb::save_map_tsv(stitched.images, a.out);

    std::cout << "frames: " << stitched.images.size() << "\n"
              << "constraints: " << stitched.constraints.size() << "\n"
              << "residual: " << stitched.report.final_residual << "\n"
              << "converged: " << (stitched.report.converged ? "yes" : "no") << "\n"
              << "map: " << (fs::path(a.out) / "map.tsv").string() << "\n";
    return stitched.report.converged ? kExitOk : kExitFailure;
}

// --------------------------------------------------------------------------
// build-db

struct BuildDbArgs {
    std::string map_dir;
    std::string out;
    int k = 16;
    int per_image = 50;
    uint64_t seed = 0;
    std::string policy = "random";
    std::string basis_db;  // reuse the PCA basis of another database
    double mm_per_px = kDefaultMmPerPixel;
    std::string date;
    features::DetectorConfig detector;
};

int run_build_db(const BuildDbArgs& a) {
    std::vector<mapdb::MapImage> images = mapdb::load_map_dir(a.map_dir);
    std::vector<FeatureSet> sets(images.size());
    parallel_for(images.size(), [&](size_t i) {
        sets[i] = features_for_raster(images[i].source, a.detector);
    });
    for (size_t i = 0; i < images.size(); ++i) {
        const GrayImage img = load_image(images[i].source);
        images[i].width = img.width;
        images[i].height = img.height;
        images[i].source = fs::absolute(images[i].source).string();
    }

    mapdb::BuildParams bp;
    bp.k = a.k;
    bp.features_per_image = a.per_image;
    bp.seed = a.seed;
    bp.policy = a.policy == "top" || a.policy == "top_response"
                    ? mapdb::SelectionPolicy::top_response
                    : mapdb::SelectionPolicy::random;
    bp.mm_per_pixel = a.mm_per_px;
    bp.capture_date = a.date;
    if (!a.basis_db.empty()) bp.preset_basis = mapdb::load(a.basis_db).basis;

    const mapdb::MapDatabase db = mapdb::build_database(images, sets, bp);
    mapdb::save(db, a.out);
    std::cout << "images: " << db.images.size() << "\n"
              << "features: " << db.features.size() << "\n"
              << "k: " << db.basis.k << "\n"
              << "db: " << a.out << " (" << fs::file_size(a.out) << " bytes)\n";
    return kExitOk;
}

// --------------------------------------------------------------------------
// localize

struct LocalizeArgs {
    std::string db_path;
    std::string image;
    locate::LocateConfig cfg;
    bool json_out = false;
};

int run_localize(const LocalizeArgs& a) {
    const mapdb::MapDatabase db = mapdb::load(a.db_path);
    const index::AnnIndex index = index::AnnIndex::build(db.features, db.buckets, 4, db.meta.seed);

    locate::LocalizeOutcome outcome;
    if (a.image.size() > 5 && a.image.substr(a.image.size() - 5) == ".feat") {
        outcome = locate::localize_features(db, index, features::read_feature_file(a.image), a.cfg);
    } else {
        outcome = locate::localize(db, index, load_image(a.image), a.cfg);
    }

    if (a.json_out) {
        json j;
        j["schema_version"] = 1;
        j["success"] = outcome.success;
        j["failure_reason"] =
            outcome.success ? json(nullptr) : json(locate::to_string(outcome.reason));
        if (outcome.success) j["pose"] = pose_json(outcome.result.pose, db.meta.mm_per_pixel);
        j["inliers"] = outcome.result.inliers.size();
        j["peak_votes"] = outcome.result.peak_votes;
        j["second_peak_votes"] = outcome.result.second_peak_votes;
        j["total_matches"] = outcome.result.total_matches;
        j["timings_ms"] = timings_json(outcome.result.timings);
        std::cout << j.dump(2) << "\n";
    } else if (outcome.success) {
        const Pose2& p = outcome.result.pose;
        std::cout << "pose: tx=" << p.tx << " px, ty=" << p.ty
                  << " px, theta=" << p.theta * 180.0 / kPi << " deg\n"
                  << "pose_mm: tx=" << p.tx * db.meta.mm_per_pixel
                  << ", ty=" << p.ty * db.meta.mm_per_pixel << "\n"
                  << "inliers: " << outcome.result.inliers.size()
                  << "  peak: " << outcome.result.peak_votes
                  << "  second: " << outcome.result.second_peak_votes
                  << "  matches: " << outcome.result.total_matches << "\n"
                  << "total_ms: " << outcome.result.timings.total_ms << "\n";
    } else {
        std::cout << "localization failed: " << locate::to_string(outcome.reason) << "\n";
    }
    return outcome.success ? kExitOk : kExitFailure;
}

// --------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    std::string db_path;
    std::string queries;
    std::string criterion = "30px:1.5deg";
    std::string out_json;
    std::string out_tsv;
    int min_correspondences = 10;
    uint64_t seed = 0;
    locate::LocateConfig cfg;
    // sweep mode
    std::string sweep_axis;
    std::vector<uint64_t> texture_seeds{1, 2, 3};
    int queries_per_texture = 100;
    std::string style = "scratchy";
};

int run_evaluate(const EvaluateArgs& a) {
    const eval::SuccessCriterion criterion = parse_criterion(a.criterion);

    if (!a.sweep_axis.empty()) {
        eval::SuiteConfig sc;
        sc.criterion = criterion;
        sc.style = synth::style_from_string(a.style);
        sc.locate = a.cfg;
        sc.seed = a.seed == 0 ? 7 : a.seed;
        const eval::EvalReport report = eval::run_sweep(
            eval::axis_from_string(a.sweep_axis), a.texture_seeds, sc, a.queries_per_texture);
        if (!a.out_json.empty()) eval::write_report_json(report, a.out_json);
        if (!a.out_tsv.empty()) eval::write_report_tsv(report, a.out_tsv);
        for (const auto& r : report.results) {
            std::cout << r.axis_label << ": " << r.successes << "/" << r.frames << " = "
                      << r.success_rate << "\n";
        }
        return kExitOk;
    }

    const mapdb::MapDatabase db = mapdb::load(a.db_path);
    const index::AnnIndex index = index::AnnIndex::build(db.features, db.buckets, 4, db.meta.seed);

    std::vector<std::string> queries;
    if (fs::is_directory(a.queries)) {
        queries = sorted_rasters(a.queries);
    } else {
        std::ifstream manifest(a.queries);
        if (!manifest) {
            std::cerr << "error: cannot open " << a.queries << "\n";
            return kExitIo;
        }
        std::string line;
        while (std::getline(manifest, line)) {
            if (!line.empty() && line[0] != '#') queries.push_back(line);
        }
    }
    if (queries.empty()) {
        std::cerr << "error: no queries found in " << a.queries << "\n";
        return kExitIo;
    }

    eval::VerifyConfig vc;
    vc.criterion = criterion;
    vc.min_correspondences = a.min_correspondences;
    vc.detector = a.cfg.detector;
    vc.seed = a.seed;
    eval::Verifier verifier(db, vc);

    json frames = json::array();
    std::map<std::string, int> verdict_counts;
    std::vector<double> times;
    std::vector<Pose2> sequence;
    std::vector<size_t> localized_idx;
    int successes = 0;

    for (size_t i = 0; i < queries.size(); ++i) {
        FeatureSet fs_q;
        if (queries[i].size() > 5 && queries[i].substr(queries[i].size() - 5) == ".feat") {
            fs_q = features::read_feature_file(queries[i]);
        } else {
            fs_q = features::detect_and_describe(load_image(queries[i]), a.cfg.detector);
        }
        locate::LocateConfig lc = a.cfg;
        lc.seed = derive_seed(a.seed, i);
        const locate::LocalizeOutcome outcome = locate::localize_features(db, index, fs_q, lc);
        times.push_back(outcome.result.timings.total_ms);

        eval::Verdict verdict = eval::Verdict::localization_failed;
        if (outcome.success) {
            verdict = verifier.verify(outcome.result, fs_q);
            sequence.push_back(outcome.result.pose);
            localized_idx.push_back(i);
        }
        ++verdict_counts[eval::to_string(verdict)];
        if (verdict == eval::Verdict::success) ++successes;

        json jf;
        jf["query"] = queries[i];
        jf["verdict"] = eval::to_string(verdict);
        if (outcome.success) jf["pose"] = pose_json(outcome.result.pose, db.meta.mm_per_pixel);
        if (!outcome.success) jf["failure_reason"] = locate::to_string(outcome.reason);
        jf["total_ms"] = outcome.result.timings.total_ms;
        frames.push_back(jf);
    }

    // Temporal coherence over the localized subsequence.
    const std::vector<int> flags = eval::coherence_check(sequence);
    json jflags = json::array();
    for (int f : flags) jflags.push_back(localized_idx[static_cast<size_t>(f)]);

    std::sort(times.begin(), times.end());
    const auto pct = [&](double q) {
        if (times.empty()) return 0.0;
        return times[static_cast<size_t>(q * static_cast<double>(times.size() - 1))];
    };

    json report;
    report["schema_version"] = 1;
    report["db"] = a.db_path;
    report["criterion"] = a.criterion;
    report["frames"] = frames;
    report["num_queries"] = queries.size();
    report["successes"] = successes;
    report["success_rate"] = static_cast<double>(successes) / static_cast<double>(queries.size());
    report["verdicts"] = verdict_counts;
    report["incoherent_frames"] = jflags;
    report["timing_ms"] = json{{"p50", pct(0.5)}, {"p90", pct(0.9)}, {"p99", pct(0.99)}};

    if (!a.out_json.empty()) {
        std::ofstream out(a.out_json);
        out << report.dump(2) << "\n";
    }
    std::cout << "success_rate: " << report["success_rate"] << " (" << successes << "/"
              << queries.size() << ")\n";
    return kExitOk;
}

// --------------------------------------------------------------------------
// db-info

int run_db_info(const std::string& path, bool as_json) {
    const mapdb::MapDatabase db = mapdb::load(path);
    const uintmax_t bytes = fs::file_size(path);
    if (as_json) {
        json j;
        j["schema_version"] = 1;
        j["version"] = 1;
        j["mm_per_pixel"] = db.meta.mm_per_pixel;
        j["seed"] = db.meta.seed;
        j["capture_date"] = db.meta.capture_date;
        j["images"] = db.images.size();
        j["features"] = db.features.size();
        j["k"] = db.basis.k;
        j["bucket_edges"] = db.buckets.edges;
        j["file_bytes"] = bytes;
        j["bytes_per_feature"] =
            db.features.empty() ? 0.0 : static_cast<double>(bytes) / db.features.size();
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "TXDB v1: " << path << "\n"
                  << "mm_per_pixel: " << db.meta.mm_per_pixel << "\n"
                  << "seed: " << db.meta.seed << "\n"
                  << "capture_date: " << (db.meta.capture_date.empty() ? "-" : db.meta.capture_date)
                  << "\n"
                  << "images: " << db.images.size() << "\n"
                  << "features: " << db.features.size() << " (k=" << db.basis.k << ")\n"
                  << "file: " << bytes << " bytes ("
                  << (db.features.empty() ? 0.0 : static_cast<double>(bytes) / db.features.size())
                  << " B/feature)\n"
                  << "bucket_edges:";
        for (double e : db.buckets.edges) std::cout << " " << e;
        std::cout << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"texloc: global localization from ground-texture images"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Global thread cap (default: TEXLOC_THREADS or cores)");

    SynthArgs synth_args;
    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate synthetic textures/frames/queries");
    synth_cmd->add_option("--seed", synth_args.seed, "Texture seed")->capture_default_str();
    synth_cmd->add_option("--width", synth_args.width, "Texture width (>= 512)")->capture_default_str();
    synth_cmd->add_option("--height", synth_args.height, "Texture height (>= 512)")->capture_default_str();
    synth_cmd->add_option("--style", synth_args.style, "scratchy|granular|fibrous")->capture_default_str();
    synth_cmd->add_option("--texture-out", synth_args.texture_out, "Write the full texture raster");
    synth_cmd->add_option("--frames-out", synth_args.frames_out, "Write a zig-zag frame grid here");
    synth_cmd->add_option("--grid-rows", synth_args.grid_rows)->capture_default_str();
    synth_cmd->add_option("--grid-cols", synth_args.grid_cols)->capture_default_str();
    synth_cmd->add_option("--frame-width", synth_args.frame_width)->capture_default_str();
    synth_cmd->add_option("--frame-height", synth_args.frame_height)->capture_default_str();
    synth_cmd->add_option("--overlap", synth_args.overlap, "Consecutive frame overlap fraction")
        ->capture_default_str();
    synth_cmd->add_option("--rotation-jitter-deg", synth_args.rotation_jitter_deg)->capture_default_str();
    synth_cmd->add_option("--queries-out", synth_args.queries_out, "Write query crops here");
    synth_cmd->add_option("--num-queries", synth_args.num_queries)->capture_default_str();
    synth_cmd->add_option("--query-width", synth_args.query_width)->capture_default_str();
    synth_cmd->add_option("--query-height", synth_args.query_height)->capture_default_str();
    synth_cmd->add_option("--occlusion", synth_args.occlusion, "Occluded fraction [0,1)")->capture_default_str();
    synth_cmd->add_option("--blur", synth_args.blur, "Motion blur length, px")->capture_default_str();
    synth_cmd->add_option("--noise", synth_args.noise, "Additive Gaussian sigma")->capture_default_str();
    synth_cmd->add_option("--impulse", synth_args.impulse, "Dust specks per pixel")->capture_default_str();
    synth_cmd->add_option("--query-seed", synth_args.query_seed)->capture_default_str();

    BuildMapArgs map_args;
    CLI::App* map_cmd = app.add_subcommand("build-map", "Stitch capture-ordered frames into a map");
    map_cmd->add_option("--frames", map_args.frames, "Directory of capture-ordered frames")->required();
    map_cmd->add_option("--out", map_args.out, "Output map directory")->required();
    map_cmd->add_option("--seed", map_args.seed)->capture_default_str();
    map_cmd->add_option("--min-inliers", map_args.min_inliers, "Min inliers per registered pair")
        ->capture_default_str();
    add_detector_flags(map_cmd, map_args.detector);

    BuildDbArgs db_args;
    CLI::App* db_cmd = app.add_subcommand("build-db", "Build a TXDB database from a map directory");
    db_cmd->add_option("--map", db_args.map_dir, "Map directory (images + map.tsv)")->required();
    db_cmd->add_option("--out", db_args.out, "Output .txdb path")->required();
    db_cmd->add_option("--k", db_args.k, "Projected descriptor dimension")->capture_default_str();
    db_cmd->add_option("--per-image", db_args.per_image, "Stored features per image")->capture_default_str();
    db_cmd->add_option("--seed", db_args.seed, "Selection seed")->capture_default_str();
    db_cmd->add_option("--policy", db_args.policy, "random|top_response")->capture_default_str();
    db_cmd->add_option("--basis-db", db_args.basis_db, "Reuse the PCA basis of this database");
    db_cmd->add_option("--mm-per-px", db_args.mm_per_px)->capture_default_str();
    db_cmd->add_option("--date", db_args.date, "Capture date tag");
    add_detector_flags(db_cmd, db_args.detector);

    LocalizeArgs loc_args;
    CLI::App* loc_cmd = app.add_subcommand("localize", "Localize one query image against a database");
    loc_cmd->add_option("--db", loc_args.db_path, "TXDB database")->required();
    loc_cmd->add_option("--image", loc_args.image, "Query raster (.png/.pgm) or .feat file")->required();
    loc_cmd->add_option("--checks", loc_args.cfg.checks, "ANN leaf visits per query feature")
        ->capture_default_str();
    loc_cmd->add_option("--seed", loc_args.cfg.seed, "RANSAC seed")->capture_default_str();
    loc_cmd->add_option("--cell-size", loc_args.cfg.cell_size, "Vote cell size, px")->capture_default_str();
    loc_cmd->add_option("--min-inliers", loc_args.cfg.min_inliers)->capture_default_str();
    loc_cmd->add_option("--min-peak-votes", loc_args.cfg.min_peak_votes)->capture_default_str();
    loc_cmd->add_option("--knn", loc_args.cfg.neighbors_per_feature, "Neighbors voting per feature")
        ->capture_default_str();
    loc_cmd->add_flag("--json", loc_args.json_out, "Machine-readable output");
    add_detector_flags(loc_cmd, loc_args.cfg.detector);

    EvaluateArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "Evaluate queries or run a design sweep");
    eval_cmd->add_option("--db", eval_args.db_path, "TXDB database");
    eval_cmd->add_option("--queries", eval_args.queries, "Query directory or manifest file");
    eval_cmd->add_option("--criterion", eval_args.criterion, "Success criterion, e.g. 30px:1.5deg")
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_args.out_json, "Report JSON path");
    eval_cmd->add_option("--tsv", eval_args.out_tsv, "Report TSV path (sweep mode)");
    eval_cmd->add_option("--min-correspondences", eval_args.min_correspondences)->capture_default_str();
    eval_cmd->add_option("--seed", eval_args.seed)->capture_default_str();
    eval_cmd->add_option("--checks", eval_args.cfg.checks)->capture_default_str();
    eval_cmd->add_option("--sweep", eval_args.sweep_axis, "Sweep axis: k|occlusion|blur|selection");
    eval_cmd->add_option("--texture-seeds", eval_args.texture_seeds, "Sweep texture seeds")
        ->delimiter(',');
    eval_cmd->add_option("--queries-per-texture", eval_args.queries_per_texture)->capture_default_str();
    eval_cmd->add_option("--style", eval_args.style, "Sweep texture style")->capture_default_str();
    add_detector_flags(eval_cmd, eval_args.cfg.detector);

    std::string info_db;
    bool info_json = false;
    CLI::App* info_cmd = app.add_subcommand("db-info", "Dump TXDB header and meta");
    info_cmd->add_option("--db", info_db, "TXDB database")->required();
    info_cmd->add_flag("--json", info_json, "Machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message
        return kExitUsage;
    }
    if (threads > 0) set_thread_cap(threads);

    try {
        if (synth_cmd->parsed()) return run_synth(synth_args);
        if (map_cmd->parsed()) return run_build_map(map_args);
        if (db_cmd->parsed()) return run_build_db(db_args);
        if (loc_cmd->parsed()) return run_localize(loc_args);
        if (eval_cmd->parsed()) {
            if (eval_args.sweep_axis.empty() && (eval_args.db_path.empty() || eval_args.queries.empty())) {
                std::cerr << "error: evaluate needs --db and --queries (or --sweep)\n";
                return kExitUsage;
            }
            return run_evaluate(eval_args);
        }
        if (info_cmd->parsed()) return run_db_info(info_db, info_json);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitUsage;
}
