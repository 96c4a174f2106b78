#include "texloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "texloc/rng.hpp"

namespace texloc::synth {

TextureStyle style_from_string(const std::string& name) {
    if (name == "scratchy") return TextureStyle::scratchy;
    if (name == "granular") return TextureStyle::granular;
    if (name == "fibrous") return TextureStyle::fibrous;
    throw std::invalid_argument("unknown texture style: " + name);
}

std::string style_name(TextureStyle style) {
    switch (style) {
        case TextureStyle::scratchy: return "scratchy";
        case TextureStyle::granular: return "granular";
        case TextureStyle::fibrous: return "fibrous";
    }
    return "?";
}

namespace {

// Band-limited value noise: a coarse random lattice, bilinearly upsampled.
void add_value_noise(GrayImage& img, Rng& rng, int period, float amplitude) {
    const int gw = img.width / period + 2;
    const int gh = img.height / period + 2;
    std::vector<float> grid(static_cast<size_t>(gw) * gh);
    for (auto& v : grid) v = static_cast<float>(2.0 * uniform_double(rng) - 1.0);

    for (int y = 0; y < img.height; ++y) {
        const double gy = static_cast<double>(y) / period;
        const int y0 = static_cast<int>(gy);
        const float fy = static_cast<float>(gy - y0);
        for (int x = 0; x < img.width; ++x) {
            const double gx = static_cast<double>(x) / period;
            const int x0 = static_cast<int>(gx);
            const float fx = static_cast<float>(gx - x0);
            const float* g = &grid[static_cast<size_t>(y0) * gw + x0];
            const float v = (g[0] * (1.0f - fx) + g[1] * fx) * (1.0f - fy) +
                            (g[gw] * (1.0f - fx) + g[gw + 1] * fx) * fy;
            img.at(x, y) += amplitude * v;
        }
    }
}

// Gaussian blob stamped additively; radius is the half-width of the profile.
void stamp_blob(GrayImage& img, double cx, double cy, double radius, float amplitude) {
    const int r = static_cast<int>(2.5 * radius) + 1;
    const int x0 = std::max(0, static_cast<int>(cx) - r);
    const int x1 = std::min(img.width - 1, static_cast<int>(cx) + r);
    const int y0 = std::max(0, static_cast<int>(cy) - r);
    const int y1 = std::min(img.height - 1, static_cast<int>(cy) + r);
    const double inv = 1.0 / (2.0 * radius * radius);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            img.at(x, y) += amplitude * static_cast<float>(std::exp(-(dx * dx + dy * dy) * inv));
        }
    }
}

// Curved stroke: a random walk of small blob stamps. Models scratches and
// carpet fibers.
void draw_stroke(GrayImage& img, Rng& rng, double length, double width, float amplitude,
                 double curviness) {
    double x = uniform_range(rng, 0.0, img.width);
    double y = uniform_range(rng, 0.0, img.height);
    double angle = uniform_range(rng, -kPi, kPi);
    const int steps = std::max(2, static_cast<int>(length));
    for (int i = 0; i < steps; ++i) {
        stamp_blob(img, x, y, width, amplitude);
        angle += curviness * normal_draw(rng);
        x += std::cos(angle);
        y += std::sin(angle);
        if (x < -width || y < -width || x > img.width + width || y > img.height + width) break;
    }
}

struct StyleParams {
    double speck_density;   // blobs per pixel
    double stroke_density;  // strokes per pixel
    double stroke_len_lo, stroke_len_hi;
    double stroke_width_lo, stroke_width_hi;
    double stroke_curviness;
    float noise_std;
};

StyleParams params_for(TextureStyle style) {
    switch (style) {
        case TextureStyle::scratchy:
            return {6.0e-4, 1.0e-4, 15.0, 90.0, 0.7, 1.4, 0.10, 0.078f};
        case TextureStyle::granular:
            return {1.1e-3, 2e-5, 8.0, 30.0, 0.8, 1.5, 0.25, 0.070f};
        case TextureStyle::fibrous:
            return {4e-4, 2.0e-4, 40.0, 160.0, 0.8, 1.6, 0.20, 0.062f};
    }
    return {};
}

void normalize_band(GrayImage& img, float target_std) {
    double sum = 0.0, sum2 = 0.0;
    for (float v : img.pixels) {
        sum += v;
        sum2 += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(img.pixels.size());
    const double mean = sum / n;
    const double var = std::max(1e-12, sum2 / n - mean * mean);
    const float gain = static_cast<float>(target_std / std::sqrt(var));
    for (float& v : img.pixels) v = (v - static_cast<float>(mean)) * gain;
}

}  // namespace

SyntheticTexture generate_texture(uint64_t seed, int width, int height, TextureStyle style) {
    if (width < 512 || height < 512) {
        throw std::invalid_argument("texture dimensions must be at least 512x512");
    }
    const StyleParams p = params_for(style);
    Rng rng(derive_seed(seed, 0xA11CE));

    GrayImage img(width, height, 0.0f);
    static const int periods[] = {3, 6, 12, 24, 48, 96, 192};
    for (int period : periods) {
        const float amp = static_cast<float>(std::pow(period, 0.35));
        add_value_noise(img, rng, period, amp);
    }
    normalize_band(img, p.noise_std);
    for (float& v : img.pixels) v += 0.5f;

    const double area = static_cast<double>(width) * height;

    // Persistent imperfections: dark/bright specks of varied radius. The
    // radius spread is what populates all DoG scale buckets.
    const int specks = poisson_draw(rng, p.speck_density * area);
    for (int i = 0; i < specks; ++i) {
        const double cx = uniform_range(rng, 0.0, width);
        const double cy = uniform_range(rng, 0.0, height);
        const double radius = std::exp(uniform_range(rng, std::log(0.9), std::log(9.0)));
        const bool dark = uniform_double(rng) < 0.65;
        const float amp = static_cast<float>(uniform_range(rng, 0.12, 0.38)) * (dark ? -1.0f : 1.0f);
        stamp_blob(img, cx, cy, radius, amp);
    }

    const int strokes = poisson_draw(rng, p.stroke_density * area);
    for (int i = 0; i < strokes; ++i) {
        const double len = uniform_range(rng, p.stroke_len_lo, p.stroke_len_hi);
        const double w = uniform_range(rng, p.stroke_width_lo, p.stroke_width_hi);
        const bool dark = uniform_double(rng) < 0.8;
        const float amp = static_cast<float>(uniform_range(rng, 0.06, 0.16)) * (dark ? -1.0f : 1.0f);
        draw_stroke(img, rng, len, w, amp, p.stroke_curviness);
    }

    for (float& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
    return SyntheticTexture{std::move(img), seed, style};
}

bool crop_in_bounds(const SyntheticTexture& tex, const Pose2& pose, int width, int height) {
    const double margin = 1.0;  // bilinear support
    const Vec2 corners[4] = {
        apply(pose, {0.0, 0.0}),
        apply(pose, {static_cast<double>(width - 1), 0.0}),
        apply(pose, {0.0, static_cast<double>(height - 1)}),
        apply(pose, {static_cast<double>(width - 1), static_cast<double>(height - 1)}),
    };
    for (const Vec2& c : corners) {
        if (c.x < margin || c.y < margin || c.x > tex.image.width - 1 - margin ||
            c.y > tex.image.height - 1 - margin) {
            return false;
        }
    }
    return true;
}

namespace {

void apply_occlusion(GrayImage& img, double fraction, Rng& rng, double& actual_fraction) {
    actual_fraction = 0.0;
    if (fraction <= 0.0) return;
    const int w = img.width, h = img.height;
    int rw = static_cast<int>(w * std::sqrt(fraction) + 0.5);
    int rh = static_cast<int>(h * std::sqrt(fraction) + 0.5);
    rw = std::clamp(rw, 1, w);
    rh = std::clamp(rh, 1, h);
    // Placement is drawn as a fraction so the same seed puts occluders of
    // different sizes in the same relative spot (keeps feature loss roughly
    // nested across an occlusion sweep).
    const double u = uniform_double(rng);
    const double v = uniform_double(rng);
    const int x0 = std::min(w - rw, static_cast<int>(u * (w - rw + 1)));
    const int y0 = std::min(h - rh, static_cast<int>(v * (h - rh + 1)));

    // Occluder fill carries its own structure (like a leaf), so it produces
    // features that must be rejected downstream as outliers.
    GrayImage fill(rw, rh, 0.0f);
    add_value_noise(fill, rng, 5, 1.0f);
    add_value_noise(fill, rng, 17, 1.6f);
    normalize_band(fill, 0.06f);
    const int veins = poisson_draw(rng, 4e-4 * rw * rh);
    for (int i = 0; i < veins; ++i) {
        draw_stroke(fill, rng, uniform_range(rng, 10.0, 40.0), 0.9, -0.10f, 0.15);
    }
    for (int y = 0; y < rh; ++y) {
        for (int x = 0; x < rw; ++x) {
            img.at(x0 + x, y0 + y) = std::clamp(0.35f + fill.at(x, y), 0.0f, 1.0f);
        }
    }
    actual_fraction = static_cast<double>(rw) * rh / (static_cast<double>(w) * h);
}

void apply_impulse(GrayImage& img, double density, Rng& rng) {
    if (density <= 0.0) return;
    const int count = poisson_draw(rng, density * img.width * img.height);
    for (int i = 0; i < count; ++i) {
        const double cx = uniform_range(rng, 0.0, img.width);
        const double cy = uniform_range(rng, 0.0, img.height);
        const double radius = uniform_range(rng, 0.6, 2.4);
        const bool bright = uniform_double(rng) < 0.5;
        const float value = bright ? static_cast<float>(uniform_range(rng, 0.85, 1.0))
                                   : static_cast<float>(uniform_range(rng, 0.0, 0.15));
        const int r = static_cast<int>(radius) + 1;
        for (int y = std::max(0, static_cast<int>(cy) - r);
             y <= std::min(img.height - 1, static_cast<int>(cy) + r); ++y) {
            for (int x = std::max(0, static_cast<int>(cx) - r);
                 x <= std::min(img.width - 1, static_cast<int>(cx) + r); ++x) {
                const double dx = x - cx, dy = y - cy;
                if (dx * dx + dy * dy <= radius * radius) img.at(x, y) = value;
            }
        }
    }
}

void apply_motion_blur(GrayImage& img, double length, Rng& rng) {
    if (length <= 1.0) return;
    const double angle = uniform_range(rng, -kPi, kPi);
    const double dx = std::cos(angle), dy = std::sin(angle);
    const int taps = std::max(2, static_cast<int>(length + 0.5));
    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int t = 0; t < taps; ++t) {
                const double offset = t - 0.5 * (taps - 1);
                double sx = x + offset * dx;
                double sy = y + offset * dy;
                sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
                sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
                acc += img.sample(sx, sy);
            }
            out.at(x, y) = static_cast<float>(acc / taps);
        }
    }
    img = std::move(out);
}

void apply_noise(GrayImage& img, double sigma, Rng& rng) {
    if (sigma <= 0.0) return;
    for (float& v : img.pixels) {
        v = std::clamp(v + static_cast<float>(sigma * normal_draw(rng)), 0.0f, 1.0f);
    }
}

}  // namespace

QuerySample sample_query(const SyntheticTexture& tex, const Pose2& pose, int width, int height,
                         const Degradation& degradation) {
    if (width < 8 || height < 8) throw std::invalid_argument("query size too small");
    if (!crop_in_bounds(tex, pose, width, height)) {
        throw std::invalid_argument("query crop falls outside the texture");
    }

    QuerySample q;
    q.truth = pose;
    q.degradation = degradation;
    q.image = GrayImage(width, height);
    const double c = std::cos(pose.theta), s = std::sin(pose.theta);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double wx = c * x - s * y + pose.tx;
            const double wy = s * x + c * y + pose.ty;
            q.image.at(x, y) = tex.image.sample(wx, wy);
        }
    }

    if (degradation.any()) {
        Rng rng(derive_seed(degradation.seed, 0xDE6));
        apply_occlusion(q.image, degradation.occlusion_fraction, rng, q.occluded_fraction);
        apply_impulse(q.image, degradation.impulse_density, rng);
        apply_motion_blur(q.image, degradation.blur_length, rng);
        apply_noise(q.image, degradation.noise_sigma, rng);
    }
    return q;
}

}  // namespace texloc::synth
