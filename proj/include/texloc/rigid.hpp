#pragma once

#include <cstdint>
#include <vector>

#include "texloc/geometry.hpp"

namespace texloc::rigid {

// Least-squares rigid transform with dst ~= R(theta) * src + t.
// Requires >= 2 points with non-degenerate spread.
Pose2 fit_rigid(const std::vector<Vec2>& src, const std::vector<Vec2>& dst);
Pose2 fit_rigid_indexed(const std::vector<Vec2>& src, const std::vector<Vec2>& dst,
                        const std::vector<int>& idx);

struct RansacParams {
    double inlier_threshold = 3.0;  // pixels
    int max_iterations = 1000;
    double confidence = 0.99;
    int min_inliers = 5;
    uint64_t seed = 0;
};

struct RansacResult {
    bool ok = false;
    Pose2 pose;                // least-squares fit over `inliers`
    std::vector<int> inliers;  // indices into src/dst
    double rms_residual = 0.0; // pixels, over inliers
    int iterations = 0;
};

// 2-point minimal rigid model, adaptive iteration count, final pose refit
// by least squares over the inlier set (the reported pose IS that fit).
RansacResult ransac_rigid(const std::vector<Vec2>& src, const std::vector<Vec2>& dst,
                          const RansacParams& params);

}  // namespace texloc::rigid
