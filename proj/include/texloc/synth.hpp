#pragma once

#include <cstdint>
#include <string>

#include "texloc/geometry.hpp"
#include "texloc/image.hpp"

namespace texloc::synth {

enum class TextureStyle { scratchy, granular, fibrous };

TextureStyle style_from_string(const std::string& name);
std::string style_name(TextureStyle style);

// Procedural ground texture: band-limited 1/f noise with Poisson-scattered
// scratches, specks and fibers. Deterministic for a fixed seed.
struct SyntheticTexture {
    GrayImage image;
    uint64_t seed = 0;
    TextureStyle style = TextureStyle::scratchy;
};

// width, height >= 512 required.
SyntheticTexture generate_texture(uint64_t seed, int width, int height, TextureStyle style);

// Degradations applied to a sampled query, in the fixed order
// occlusion -> blur -> noise. All randomness comes from `seed`.
struct Degradation {
    double occlusion_fraction = 0.0;  // [0, 1): contiguous region overwritten
    double blur_length = 0.0;         // pixels, linear motion kernel
    double noise_sigma = 0.0;         // additive Gaussian, [0,1] pixel units
    double impulse_density = 0.0;     // dust specks per pixel
    uint64_t seed = 0;

    bool any() const {
        return occlusion_fraction > 0.0 || blur_length > 0.0 || noise_sigma > 0.0 ||
               impulse_density > 0.0;
    }
};

struct QuerySample {
    GrayImage image;
    Pose2 truth;             // query frame -> texture (world) frame
    Degradation degradation; // as applied
    double occluded_fraction = 0.0;  // exact pixel fraction overwritten
};

// Resamples the texture under `pose` (query pixel (x,y) lands at
// apply(pose, (x,y)) in texture coordinates). Throws std::invalid_argument
// if any part of the crop falls outside the texture.
QuerySample sample_query(const SyntheticTexture& tex, const Pose2& pose, int width, int height,
                         const Degradation& degradation = {});

// True when the whole crop (with a bilinear margin) lies inside the texture.
bool crop_in_bounds(const SyntheticTexture& tex, const Pose2& pose, int width, int height);

}  // namespace texloc::synth
