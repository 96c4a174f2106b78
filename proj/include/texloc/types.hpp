#pragma once

#include <cstdint>
#include <vector>

#include "texloc/geometry.hpp"

namespace texloc {

// Scale-space keypoint in image coordinates.
struct Keypoint {
    double x = 0.0;            // pixels, image frame
    double y = 0.0;
    double scale = 1.0;        // DoG sigma, pixels
    double orientation = 0.0;  // radians, (-pi, pi]
    double response = 0.0;     // DoG magnitude at the extremum
};

// Pose of a keypoint's local frame within its image.
inline Pose2 keypoint_pose(const Keypoint& kp) {
    return {kp.orientation, kp.x, kp.y};
}

// Fixed-length real descriptor: 128 entries raw, k entries after projection.
struct Descriptor {
    std::vector<float> values;

    Descriptor() = default;
    explicit Descriptor(std::vector<float> v) : values(std::move(v)) {}

    int dim() const { return static_cast<int>(values.size()); }
    float operator[](int i) const { return values[static_cast<size_t>(i)]; }
};

inline double squared_distance(const Descriptor& a, const Descriptor& b) {
    double acc = 0.0;
    const size_t n = a.values.size();
    for (size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
        acc += d * d;
    }
    return acc;
}

// Database-side feature, expressed in the world (map) frame.
struct WorldFeature {
    Pose2 pose;             // feature frame -> world frame
    double scale = 1.0;     // pixels, image-frame scale (rigid map poses preserve it)
    Descriptor descriptor;  // projected, dim = basis k
    uint32_t image_id = 0;  // source map image
};

// Parallel keypoint/descriptor arrays produced by detection + description.
struct FeatureSet {
    std::vector<Keypoint> keypoints;
    std::vector<Descriptor> descriptors;

    size_t size() const { return keypoints.size(); }
    bool empty() const { return keypoints.empty(); }
};

}  // namespace texloc
