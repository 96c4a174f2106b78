#pragma once

#include <string>
#include <vector>

#include "texloc/image.hpp"
#include "texloc/types.hpp"

namespace texloc::features {

struct DetectorConfig {
    int octaves = 4;
    int scales_per_octave = 3;
    double base_sigma = 1.6;
    double contrast_threshold = 0.03;   // applied as |response| * scales_per_octave
    double edge_ratio_threshold = 10.0;
    int max_features = 0;               // 0 = unlimited; else keep strongest responses

    void validate() const;
};

// DoG extrema, sub-pixel refined, one keypoint per dominant orientation
// peak. Deterministic; output sorted by (y, x, scale, orientation).
std::vector<Keypoint> detect(const GrayImage& image, const DetectorConfig& cfg = {});

// 128-d gradient orientation histogram descriptors (4x4 grid x 8 bins,
// rotation-normalized, L2-normalized, clamped at 0.2, renormalized).
// Keypoints whose support window leaves the image are dropped together with
// their descriptor slot, so the returned arrays stay paired.
FeatureSet describe(const GrayImage& image, const std::vector<Keypoint>& keypoints,
                    const DetectorConfig& cfg = {});

// Detection + description sharing one pyramid build.
FeatureSet detect_and_describe(const GrayImage& image, const DetectorConfig& cfg = {});

// Record file: one feature per line, "x y scale orientation d0 ... d127".
// Lets externally computed features be ingested without re-detection.
FeatureSet read_feature_file(const std::string& path);
void write_feature_file(const FeatureSet& features, const std::string& path);

namespace detail {
// Descriptor histogram after L2 normalization and the 0.2 clamp but before
// the final renormalization. Exposed for contract tests.
std::vector<float> raw_clamped_histogram(const GrayImage& image, const Keypoint& kp,
                                         const DetectorConfig& cfg);
}  // namespace detail

}  // namespace texloc::features
