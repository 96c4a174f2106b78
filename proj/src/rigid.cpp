#include "texloc/rigid.hpp"

#include <cmath>
#include <stdexcept>

#include "texloc/rng.hpp"

namespace texloc::rigid {

namespace {

Pose2 fit_rigid_impl(const std::vector<Vec2>& src, const std::vector<Vec2>& dst,
                     const int* idx, size_t n) {
    if (n < 2) throw std::invalid_argument("fit_rigid: need at least 2 correspondences");
    Vec2 cs{0, 0}, cd{0, 0};
    for (size_t i = 0; i < n; ++i) {
        const size_t j = idx ? static_cast<size_t>(idx[i]) : i;
        cs = cs + src[j];
        cd = cd + dst[j];
    }
    const double inv = 1.0 / static_cast<double>(n);
    cs = inv * cs;
    cd = inv * cd;

    // Procrustes without scale: theta = atan2(sum cross, sum dot).
    double a = 0.0, b = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const size_t j = idx ? static_cast<size_t>(idx[i]) : i;
        const Vec2 s = src[j] - cs;
        const Vec2 d = dst[j] - cd;
        a += s.x * d.x + s.y * d.y;
        b += s.x * d.y - s.y * d.x;
    }
    if (a == 0.0 && b == 0.0) throw std::invalid_argument("fit_rigid: degenerate correspondences");
    const double theta = std::atan2(b, a);
    const double c = std::cos(theta), s = std::sin(theta);
    return {wrap_angle(theta), cd.x - (c * cs.x - s * cs.y), cd.y - (s * cs.x + c * cs.y)};
}

}  // namespace

Pose2 fit_rigid(const std::vector<Vec2>& src, const std::vector<Vec2>& dst) {
    if (src.size() != dst.size()) throw std::invalid_argument("fit_rigid: size mismatch");
    return fit_rigid_impl(src, dst, nullptr, src.size());
}

Pose2 fit_rigid_indexed(const std::vector<Vec2>& src, const std::vector<Vec2>& dst,
                        const std::vector<int>& idx) {
    return fit_rigid_impl(src, dst, idx.data(), idx.size());
}

RansacResult ransac_rigid(const std::vector<Vec2>& src, const std::vector<Vec2>& dst,
                          const RansacParams& params) {
    RansacResult result;
    if (src.size() != dst.size()) throw std::invalid_argument("ransac_rigid: size mismatch");
    const int n = static_cast<int>(src.size());
    if (n < 2) return result;

    Rng rng(derive_seed(params.seed, 0x7A25AC));
    const double thr2 = params.inlier_threshold * params.inlier_threshold;

    int best_count = 0;
    Pose2 best_pose;
    int needed = params.max_iterations;
    int iter = 0;
    for (; iter < needed && iter < params.max_iterations; ++iter) {
        const int i = static_cast<int>(uniform_below(rng, static_cast<uint64_t>(n)));
        int j = static_cast<int>(uniform_below(rng, static_cast<uint64_t>(n - 1)));
        if (j >= i) ++j;

        const Vec2 ds = src[static_cast<size_t>(j)] - src[static_cast<size_t>(i)];
        const Vec2 dd = dst[static_cast<size_t>(j)] - dst[static_cast<size_t>(i)];
        const double len2 = dot(ds, ds);
        if (len2 < 1e-12 || dot(dd, dd) < 1e-12) continue;

        const double theta = std::atan2(dd.y, dd.x) - std::atan2(ds.y, ds.x);
        const double c = std::cos(theta), s = std::sin(theta);
        const Vec2 si = src[static_cast<size_t>(i)];
        const Vec2 di = dst[static_cast<size_t>(i)];
        const Pose2 model{wrap_angle(theta), di.x - (c * si.x - s * si.y),
                          di.y - (s * si.x + c * si.y)};

        int count = 0;
        for (int m = 0; m < n; ++m) {
            const Vec2 p = apply(model, src[static_cast<size_t>(m)]);
            const Vec2 e = p - dst[static_cast<size_t>(m)];
            if (dot(e, e) <= thr2) ++count;
        }
        if (count > best_count) {
            best_count = count;
            best_pose = model;
            // Adaptive termination at the requested confidence.
            const double w = static_cast<double>(count) / n;
            const double p_sample = w * w;
            if (p_sample >= 1.0) {
                needed = iter + 1;
            } else if (p_sample > 0.0) {
                const double d = std::log(1.0 - params.confidence) / std::log(1.0 - p_sample);
                needed = std::min(params.max_iterations,
                                  static_cast<int>(std::ceil(d)));
            }
        }
    }
    result.iterations = iter;
    if (best_count < std::max(2, params.min_inliers)) return result;

    // Refit on the consensus set, then refresh the set with the refined
    // pose so the reported pose is exactly the LS fit of its inliers.
    const auto collect = [&](const Pose2& pose) {
        std::vector<int> inl;
        for (int m = 0; m < n; ++m) {
            const Vec2 p = apply(pose, src[static_cast<size_t>(m)]);
            const Vec2 e = p - dst[static_cast<size_t>(m)];
            if (dot(e, e) <= thr2) inl.push_back(m);
        }
        return inl;
    };

    std::vector<int> inliers = collect(best_pose);
    Pose2 pose = fit_rigid_indexed(src, dst, inliers);
    for (int round = 0; round < 2; ++round) {
        std::vector<int> refreshed = collect(pose);
        if (static_cast<int>(refreshed.size()) < 2) break;
        pose = fit_rigid_indexed(src, dst, refreshed);
        if (refreshed == inliers) break;
        inliers = std::move(refreshed);
    }
    if (static_cast<int>(inliers.size()) < std::max(2, params.min_inliers)) return result;

    double sum2 = 0.0;
    for (int m : inliers) {
        const Vec2 p = apply(pose, src[static_cast<size_t>(m)]);
        const Vec2 e = p - dst[static_cast<size_t>(m)];
        sum2 += dot(e, e);
    }
    result.ok = true;
    result.pose = pose;
    result.inliers = std::move(inliers);
    result.rms_residual = std::sqrt(sum2 / static_cast<double>(result.inliers.size()));
    return result;
}

}  // namespace texloc::rigid
