#include "texloc/stitch.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "texloc/matching.hpp"
#include "texloc/rigid.hpp"
#include "texloc/rng.hpp"
#include "texloc/threading.hpp"

namespace texloc::stitch {

namespace {

double frame_diag(const std::pair<int, int>& size) {
    return std::hypot(static_cast<double>(size.first), static_cast<double>(size.second));
}

struct Residual {
    Eigen::Vector3d r;
    Eigen::Matrix3d ji;  // wrt (tx_i, ty_i, theta_i)
    Eigen::Matrix3d jj;
};

Residual edge_residual(const Pose2& xi, const Pose2& xj, const Pose2& z, double w) {
    const double ci = std::cos(xi.theta), si = std::sin(xi.theta);
    const double cz = std::cos(z.theta), sz = std::sin(z.theta);
    const double dx = xj.tx - xi.tx;
    const double dy = xj.ty - xi.ty;

    // t_rel = R(theta_i)^T * (t_j - t_i)
    const double rel_x = ci * dx + si * dy;
    const double rel_y = -si * dx + ci * dy;
    const double et_x = cz * (rel_x - z.tx) + sz * (rel_y - z.ty);
    const double et_y = -sz * (rel_x - z.tx) + cz * (rel_y - z.ty);
    const double eth = wrap_angle(xj.theta - xi.theta - z.theta);

    Residual out;
    out.r << et_x, et_y, w * eth;

    Eigen::Matrix2d rz_t;
    rz_t << cz, sz, -sz, cz;
    Eigen::Matrix2d ri_t;
    ri_t << ci, si, -si, ci;
    Eigen::Vector2d dri_t_dt(-si * dx + ci * dy, -ci * dx - si * dy);

    out.ji.setZero();
    out.ji.block<2, 2>(0, 0) = rz_t * (-ri_t);
    out.ji.block<2, 1>(0, 2) = rz_t * dri_t_dt;
    out.ji(2, 2) = -w;

    out.jj.setZero();
    out.jj.block<2, 2>(0, 0) = rz_t * ri_t;
    out.jj(2, 2) = w;
    return out;
}

}  // namespace

std::optional<PairConstraint> register_pair(const FeatureSet& features_a,
                                            const FeatureSet& features_b,
                                            uint32_t id_a, uint32_t id_b,
                                            const StitchConfig& cfg) {
    const auto matches = matching::match_ratio(features_a, features_b, cfg.ratio_threshold);
    if (static_cast<int>(matches.size()) < cfg.min_inliers) return std::nullopt;

    std::vector<Vec2> src, dst;
    src.reserve(matches.size());
    dst.reserve(matches.size());
    for (const auto& [ia, ib] : matches) {
        const Keypoint& ka = features_a.keypoints[static_cast<size_t>(ia)];
        const Keypoint& kb = features_b.keypoints[static_cast<size_t>(ib)];
        src.push_back({kb.x, kb.y});
        dst.push_back({ka.x, ka.y});
    }

    rigid::RansacParams rp;
    rp.inlier_threshold = cfg.inlier_threshold;
    rp.max_iterations = cfg.ransac_iterations;
    rp.confidence = cfg.ransac_confidence;
    rp.min_inliers = cfg.min_inliers;
    rp.seed = derive_seed(cfg.seed, (static_cast<uint64_t>(id_a) << 32) | id_b);
    const rigid::RansacResult res = rigid::ransac_rigid(src, dst, rp);
    if (!res.ok) return std::nullopt;

    PairConstraint pc;
    pc.image_a = id_a;
    pc.image_b = id_b;
    pc.rel = res.pose;
    pc.inlier_count = static_cast<int>(res.inliers.size());
    pc.residual = res.rms_residual;
    return pc;
}

void PoseGraph::require_connected() const {
    if (nodes.empty()) throw std::invalid_argument("pose graph: no nodes");
    std::vector<int> id_to_idx;
    uint32_t max_id = 0;
    for (uint32_t id : nodes) max_id = std::max(max_id, id);
    id_to_idx.assign(max_id + 1, -1);
    for (size_t i = 0; i < nodes.size(); ++i) id_to_idx[nodes[i]] = static_cast<int>(i);

    std::vector<std::vector<int>> adj(nodes.size());
    for (const PairConstraint& e : edges) {
        if (e.image_a > max_id || e.image_b > max_id || id_to_idx[e.image_a] < 0 ||
            id_to_idx[e.image_b] < 0) {
            throw std::invalid_argument("pose graph: edge references unknown node");
        }
        adj[static_cast<size_t>(id_to_idx[e.image_a])].push_back(id_to_idx[e.image_b]);
        adj[static_cast<size_t>(id_to_idx[e.image_b])].push_back(id_to_idx[e.image_a]);
    }

    std::vector<uint8_t> seen(nodes.size(), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    size_t visited = 1;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int u : adj[static_cast<size_t>(v)]) {
            if (!seen[static_cast<size_t>(u)]) {
                seen[static_cast<size_t>(u)] = 1;
                ++visited;
                stack.push_back(u);
            }
        }
    }
    if (visited != nodes.size()) throw std::invalid_argument("pose graph: disconnected graph");
}

OptimizeReport optimize(const PoseGraph& graph, const StitchConfig& cfg) {
    graph.require_connected();
    const size_t n = graph.nodes.size();
    if (graph.estimates.size() != n) {
        throw std::invalid_argument("pose graph: estimates must parallel nodes");
    }

    std::vector<int> id_to_idx;
    uint32_t max_id = 0;
    for (uint32_t id : graph.nodes) max_id = std::max(max_id, id);
    id_to_idx.assign(max_id + 1, -1);
    for (size_t i = 0; i < n; ++i) id_to_idx[graph.nodes[i]] = static_cast<int>(i);
    if (graph.gauge > max_id || id_to_idx[graph.gauge] < 0) {
        throw std::invalid_argument("pose graph: gauge node not in graph");
    }
    const int gauge_idx = id_to_idx[graph.gauge];

    // Re-gauge so the fixed node sits exactly at identity.
    std::vector<Pose2> poses(n);
    const Pose2 gauge_inv = inverse(graph.estimates[static_cast<size_t>(gauge_idx)]);
    for (size_t i = 0; i < n; ++i) poses[i] = compose(gauge_inv, graph.estimates[i]);

    const double w = cfg.rotation_weight > 0.0 ? cfg.rotation_weight : 500.0;

    const auto total_cost = [&](const std::vector<Pose2>& ps) {
        double cost = 0.0;
        for (const PairConstraint& e : graph.edges) {
            const Pose2& xi = ps[static_cast<size_t>(id_to_idx[e.image_a])];
            const Pose2& xj = ps[static_cast<size_t>(id_to_idx[e.image_b])];
            const Residual res = edge_residual(xi, xj, e.rel, w);
            cost += res.r.squaredNorm();
        }
        return cost;
    };

    OptimizeReport report;
    report.initial_residual = total_cost(poses);

    // Variable layout: 3 per node, gauge excluded.
    std::vector<int> var_of(n, -1);
    int vars = 0;
    for (size_t i = 0; i < n; ++i) {
        if (static_cast<int>(i) != gauge_idx) var_of[i] = 3 * vars++;
    }
    if (vars == 0) {
        report.final_residual = report.initial_residual;
        report.converged = true;
        for (size_t i = 0; i < n; ++i) report.poses.emplace_back(graph.nodes[i], poses[i]);
        return report;
    }

    double cost = report.initial_residual;
    bool solver_failed = false;
    bool stalled = false;
    Eigen::MatrixXd h(3 * vars, 3 * vars);
    Eigen::VectorXd g(3 * vars);
    for (int it = 0; it < cfg.max_gn_iterations; ++it) {
        ++report.iterations;
        h.setZero();
        g.setZero();
        for (const PairConstraint& e : graph.edges) {
            const int ii = id_to_idx[e.image_a];
            const int jj = id_to_idx[e.image_b];
            const Residual res =
                edge_residual(poses[static_cast<size_t>(ii)], poses[static_cast<size_t>(jj)], e.rel, w);
            const int vi = var_of[static_cast<size_t>(ii)];
            const int vj = var_of[static_cast<size_t>(jj)];
            if (vi >= 0) {
                h.block<3, 3>(vi, vi) += res.ji.transpose() * res.ji;
                g.segment<3>(vi) += res.ji.transpose() * res.r;
            }
            if (vj >= 0) {
                h.block<3, 3>(vj, vj) += res.jj.transpose() * res.jj;
                g.segment<3>(vj) += res.jj.transpose() * res.r;
            }
            if (vi >= 0 && vj >= 0) {
                h.block<3, 3>(vi, vj) += res.ji.transpose() * res.jj;
                h.block<3, 3>(vj, vi) += res.jj.transpose() * res.ji;
            }
        }
        h.diagonal().array() += 1e-9;

        const Eigen::VectorXd delta = h.ldlt().solve(-g);
        if (!delta.allFinite()) {
            solver_failed = true;
            break;
        }

        // Backtracking keeps the accepted cost monotone.
        double alpha = 1.0;
        std::vector<Pose2> trial(n);
        double trial_cost = cost;
        bool accepted = false;
        while (alpha >= 1.0 / 1024.0) {
            trial = poses;
            for (size_t i = 0; i < n; ++i) {
                const int v = var_of[i];
                if (v < 0) continue;
                trial[i].tx += alpha * delta[v];
                trial[i].ty += alpha * delta[v + 1];
                trial[i].theta = wrap_angle(trial[i].theta + alpha * delta[v + 2]);
            }
            trial_cost = total_cost(trial);
            if (trial_cost <= cost) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            stalled = true;  // stationary point: no descent direction left
            break;
        }
        poses = std::move(trial);
        cost = trial_cost;
        if (alpha * delta.norm() < cfg.gn_tolerance) {
            report.converged = true;
            break;
        }
    }
    if (!report.converged) report.converged = stalled && !solver_failed;

    report.final_residual = cost;
    for (size_t i = 0; i < n; ++i) report.poses.emplace_back(graph.nodes[i], poses[i]);
    return report;
}

std::variant<StitchResult, BrokenChain> stitch_sequence(
    const std::vector<FeatureSet>& frames, const std::vector<std::pair<int, int>>& frame_sizes,
    const StitchConfig& cfg) {
    if (frames.empty()) throw std::invalid_argument("stitch_sequence: no frames");
    if (frames.size() != frame_sizes.size()) {
        throw std::invalid_argument("stitch_sequence: frames and sizes must pair up");
    }
    const size_t n = frames.size();

    StitchConfig local = cfg;
    if (local.rotation_weight <= 0.0) {
        double diag = 0.0;
        for (const auto& s : frame_sizes) diag = std::max(diag, frame_diag(s));
        local.rotation_weight = 0.5 * diag;
    }

    StitchResult result;
    if (n == 1) {
        result.images.push_back({0, Pose2::identity(), frame_sizes[0].first, frame_sizes[0].second, ""});
        result.report.converged = true;
        result.report.poses.emplace_back(0u, Pose2::identity());
        return result;
    }

    // Consecutive registrations (the capture chain).
    std::vector<std::optional<PairConstraint>> chain(n - 1);
    parallel_for(n - 1, [&](size_t i) {
        chain[i] = register_pair(frames[i], frames[i + 1], static_cast<uint32_t>(i),
                                 static_cast<uint32_t>(i + 1), local);
    });
    for (size_t i = 0; i + 1 < n; ++i) {
        if (!chain[i]) return BrokenChain{i};
    }

    std::vector<Pose2> estimates(n);
    for (size_t i = 0; i + 1 < n; ++i) estimates[i + 1] = compose(estimates[i], chain[i]->rel);

    // Loop-closure candidates: non-consecutive pairs whose current frame
    // centers land within one frame diagonal.
    std::vector<std::pair<size_t, size_t>> candidates;
    for (size_t i = 0; i < n; ++i) {
        const Vec2 ci = apply(estimates[i], {0.5 * frame_sizes[i].first, 0.5 * frame_sizes[i].second});
        for (size_t j = i + 2; j < n; ++j) {
            const Vec2 cj =
                apply(estimates[j], {0.5 * frame_sizes[j].first, 0.5 * frame_sizes[j].second});
            const double gate = std::max(frame_diag(frame_sizes[i]), frame_diag(frame_sizes[j]));
            if (norm(ci - cj) < gate) candidates.emplace_back(i, j);
        }
    }
    std::vector<std::optional<PairConstraint>> loops(candidates.size());
    parallel_for(candidates.size(), [&](size_t c) {
        const auto [i, j] = candidates[c];
        loops[c] = register_pair(frames[i], frames[j], static_cast<uint32_t>(i),
                                 static_cast<uint32_t>(j), local);
    });

    PoseGraph graph;
    graph.gauge = 0;
    for (size_t i = 0; i < n; ++i) {
        graph.nodes.push_back(static_cast<uint32_t>(i));
        graph.estimates.push_back(estimates[i]);
    }
    for (const auto& c : chain) graph.edges.push_back(*c);
    for (const auto& l : loops) {
        if (l) graph.edges.push_back(*l);
    }

    result.report = optimize(graph, local);
    result.constraints = graph.edges;
    result.images.resize(n);
    for (const auto& [id, pose] : result.report.poses) {
        mapdb::MapImage im;
        im.image_id = id;
        im.pose = pose;
        im.width = frame_sizes[id].first;
        im.height = frame_sizes[id].second;
        result.images[id] = im;
    }
    return result;
}

}  // namespace texloc::stitch
