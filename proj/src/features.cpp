#include "texloc/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace texloc::features {

namespace {

constexpr int kBorder = 5;            // extrema ignored this close to an octave edge
constexpr int kMaxInterpSteps = 5;
constexpr int kOriBins = 36;
constexpr double kOriSigmaFactor = 1.5;
constexpr double kOriRadiusFactor = 3.0;  // radius = 3 * ori sigma
constexpr double kOriPeakRatio = 0.8;
constexpr int kDescWidth = 4;   // spatial grid
constexpr int kDescBins = 8;    // orientation bins
constexpr double kDescSigmaFactor = 3.0;  // histogram cell width = 3 * scale
constexpr float kDescClamp = 0.2f;

void gaussian_blur(const GrayImage& src, GrayImage& dst, double sigma, GrayImage& tmp) {
    const int radius = std::max(1, static_cast<int>(sigma * 3.0 + 0.5));
    std::vector<float> kernel(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        kernel[static_cast<size_t>(i + radius)] = static_cast<float>(v);
        sum += v;
    }
    for (float& k : kernel) k = static_cast<float>(k / sum);

    const int w = src.width, h = src.height;
    tmp = GrayImage(w, h);
    dst = GrayImage(w, h);

    // Horizontal pass, replicate border.
    for (int y = 0; y < h; ++y) {
        const float* row = &src.pixels[static_cast<size_t>(y) * w];
        float* out = &tmp.pixels[static_cast<size_t>(y) * w];
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            if (x >= radius && x + radius < w) {
                const float* p = row + x - radius;
                for (int k = 0; k <= 2 * radius; ++k) acc += p[k] * kernel[static_cast<size_t>(k)];
            } else {
                for (int k = -radius; k <= radius; ++k) {
                    const int xx = std::clamp(x + k, 0, w - 1);
                    acc += row[xx] * kernel[static_cast<size_t>(k + radius)];
                }
            }
            out[x] = acc;
        }
    }
    // Vertical pass.
    for (int y = 0; y < h; ++y) {
        float* out = &dst.pixels[static_cast<size_t>(y) * w];
        if (y >= radius && y + radius < h) {
            const float* base = &tmp.pixels[static_cast<size_t>(y - radius) * w];
            for (int x = 0; x < w; ++x) {
                float acc = 0.0f;
                const float* p = base + x;
                for (int k = 0; k <= 2 * radius; ++k) {
                    acc += p[static_cast<size_t>(k) * w] * kernel[static_cast<size_t>(k)];
                }
                out[x] = acc;
            }
        } else {
            for (int x = 0; x < w; ++x) {
                float acc = 0.0f;
                for (int k = -radius; k <= radius; ++k) {
                    const int yy = std::clamp(y + k, 0, h - 1);
                    acc += tmp.at(x, yy) * kernel[static_cast<size_t>(k + radius)];
                }
                out[x] = acc;
            }
        }
    }
}

GrayImage downsample2(const GrayImage& src) {
    GrayImage dst(src.width / 2, src.height / 2);
    for (int y = 0; y < dst.height; ++y) {
        for (int x = 0; x < dst.width; ++x) {
            dst.at(x, y) = src.at(2 * x, 2 * y);
        }
    }
    return dst;
}

struct Pyramid {
    int octave_count = 0;
    int intervals = 0;  // scales per octave
    double base_sigma = 1.6;
    std::vector<std::vector<GrayImage>> gauss;  // [octave][intervals + 3]
    std::vector<std::vector<GrayImage>> dog;    // [octave][intervals + 2]
};

Pyramid build_pyramid(const GrayImage& img, const DetectorConfig& cfg) {
    Pyramid pyr;
    pyr.intervals = cfg.scales_per_octave;
    pyr.base_sigma = cfg.base_sigma;

    int max_oct = 1;
    for (int side = std::min(img.width, img.height) / 2; side >= 16 && max_oct < cfg.octaves;
         side /= 2) {
        ++max_oct;
    }
    pyr.octave_count = max_oct;

    const int levels = pyr.intervals + 3;
    const double k = std::pow(2.0, 1.0 / pyr.intervals);
    std::vector<double> delta_sigma(static_cast<size_t>(levels));
    for (int i = 1; i < levels; ++i) {
        const double prev = cfg.base_sigma * std::pow(k, i - 1);
        delta_sigma[static_cast<size_t>(i)] = prev * std::sqrt(k * k - 1.0);
    }

    GrayImage tmp;
    pyr.gauss.resize(static_cast<size_t>(pyr.octave_count));
    pyr.dog.resize(static_cast<size_t>(pyr.octave_count));
    for (int o = 0; o < pyr.octave_count; ++o) {
        auto& g = pyr.gauss[static_cast<size_t>(o)];
        g.resize(static_cast<size_t>(levels));
        if (o == 0) {
            // Nominal capture blur of 0.5 px is lifted to base_sigma.
            const double s0 = std::sqrt(std::max(cfg.base_sigma * cfg.base_sigma - 0.25, 0.01));
            gaussian_blur(img, g[0], s0, tmp);
        } else {
            g[0] = downsample2(pyr.gauss[static_cast<size_t>(o - 1)][static_cast<size_t>(pyr.intervals)]);
        }
        for (int i = 1; i < levels; ++i) {
            gaussian_blur(g[static_cast<size_t>(i - 1)], g[static_cast<size_t>(i)],
                          delta_sigma[static_cast<size_t>(i)], tmp);
        }

        auto& d = pyr.dog[static_cast<size_t>(o)];
        d.resize(static_cast<size_t>(levels - 1));
        for (int i = 0; i + 1 < levels; ++i) {
            const GrayImage& a = g[static_cast<size_t>(i)];
            const GrayImage& b = g[static_cast<size_t>(i + 1)];
            GrayImage diff(a.width, a.height);
            for (size_t p = 0; p < diff.pixels.size(); ++p) {
                diff.pixels[p] = b.pixels[p] - a.pixels[p];
            }
            d[static_cast<size_t>(i)] = std::move(diff);
        }
    }
    return pyr;
}

// Where in the pyramid a keypoint of a given scale is sampled. Derived from
// the scale alone so detected and imported keypoints go through one path.
struct Placement {
    int octave = 0;
    int layer = 0;       // gaussian layer index
    double x = 0.0;      // octave coordinates
    double y = 0.0;
    double scale = 0.0;  // octave-relative sigma
};

Placement place_keypoint(const Pyramid& pyr, const Keypoint& kp) {
    Placement p;
    const double t = std::log2(std::max(kp.scale, 1e-6) / pyr.base_sigma);
    p.octave = std::clamp(static_cast<int>(std::floor(t)), 0, pyr.octave_count - 1);
    const double rem = t - p.octave;
    p.layer = std::clamp(static_cast<int>(std::lround(rem * pyr.intervals)), 0, pyr.intervals);
    const double scale_factor = std::pow(2.0, p.octave);
    p.x = kp.x / scale_factor;
    p.y = kp.y / scale_factor;
    p.scale = kp.scale / scale_factor;
    return p;
}

// Dominant gradient directions around a keypoint; returns interpolated
// angles of all histogram peaks within kOriPeakRatio of the maximum.
std::vector<double> orientation_peaks(const GrayImage& img, double cx, double cy,
                                      double scale_oct) {
    const double sigma = kOriSigmaFactor * scale_oct;
    const int radius = std::max(1, static_cast<int>(kOriRadiusFactor * sigma + 0.5));
    const double weight_scale = -1.0 / (2.0 * sigma * sigma);
    const int x0 = static_cast<int>(std::lround(cx));
    const int y0 = static_cast<int>(std::lround(cy));

    double hist[kOriBins] = {0.0};
    for (int i = -radius; i <= radius; ++i) {
        const int y = y0 + i;
        if (y < 1 || y > img.height - 2) continue;
        for (int j = -radius; j <= radius; ++j) {
            const int x = x0 + j;
            if (x < 1 || x > img.width - 2) continue;
            const double dx = img.at(x + 1, y) - img.at(x - 1, y);
            const double dy = img.at(x, y + 1) - img.at(x, y - 1);
            const double mag = std::sqrt(dx * dx + dy * dy);
            const double w = std::exp((static_cast<double>(i) * i + static_cast<double>(j) * j) *
                                      weight_scale);
            const double angle = std::atan2(dy, dx);
            int bin = static_cast<int>((angle + kPi) * kOriBins / (2.0 * kPi));
            if (bin >= kOriBins) bin = 0;
            if (bin < 0) bin = 0;
            hist[bin] += w * mag;
        }
    }

    // Circular smoothing with a binomial kernel.
    double smoothed[kOriBins];
    for (int b = 0; b < kOriBins; ++b) {
        const auto at = [&](int i) { return hist[(i + kOriBins) % kOriBins]; };
        smoothed[b] = (at(b - 2) + at(b + 2)) * (1.0 / 16.0) +
                      (at(b - 1) + at(b + 1)) * (4.0 / 16.0) + at(b) * (6.0 / 16.0);
    }

    double max_val = 0.0;
    for (double v : smoothed) max_val = std::max(max_val, v);
    std::vector<double> peaks;
    if (max_val <= 0.0) return peaks;
    for (int b = 0; b < kOriBins; ++b) {
        const double l = smoothed[(b + kOriBins - 1) % kOriBins];
        const double r = smoothed[(b + 1) % kOriBins];
        const double v = smoothed[b];
        if (v > l && v > r && v >= kOriPeakRatio * max_val) {
            double db = 0.5 * (l - r) / (l - 2.0 * v + r);
            if (!std::isfinite(db)) db = 0.0;
            const double bin = b + db;
            const double angle = -kPi + (bin + 0.5) * (2.0 * kPi / kOriBins);
            peaks.push_back(wrap_angle(angle));
        }
    }
    return peaks;
}

bool compute_descriptor(const GrayImage& img, double cx, double cy, double scale_oct,
                        double orientation, std::vector<float>& out, bool renormalize) {
    const int d = kDescWidth, n = kDescBins;
    const double hist_width = kDescSigmaFactor * scale_oct;
    const int x0 = static_cast<int>(std::lround(cx));
    const int y0 = static_cast<int>(std::lround(cy));

    // Drop keypoints whose support is overwhelmingly outside the image.
    if (x0 < hist_width || y0 < hist_width || x0 > img.width - 1 - hist_width ||
        y0 > img.height - 1 - hist_width) {
        return false;
    }

    int radius = static_cast<int>(hist_width * std::sqrt(2.0) * (d + 1) * 0.5 + 0.5);
    const int diag = static_cast<int>(std::sqrt(static_cast<double>(img.width) * img.width +
                                                static_cast<double>(img.height) * img.height));
    radius = std::min(radius, diag);

    const double cos_t = std::cos(orientation);
    const double sin_t = std::sin(orientation);
    const double bins_per_rad = n / (2.0 * kPi);
    const double exp_scale = -1.0 / (d * d * 0.5);
    const double inv_hist_width = 1.0 / hist_width;

    const int hd = d + 2;
    std::vector<double> hist(static_cast<size_t>(hd) * hd * (n + 2), 0.0);
    const auto hidx = [&](int r, int c, int o) {
        return (static_cast<size_t>(r) * hd + static_cast<size_t>(c)) * (n + 2) +
               static_cast<size_t>(o);
    };

    for (int i = -radius; i <= radius; ++i) {
        const int y = y0 + i;
        if (y < 1 || y > img.height - 2) continue;
        for (int j = -radius; j <= radius; ++j) {
            const int x = x0 + j;
            if (x < 1 || x > img.width - 2) continue;

            const double c_rot = (j * cos_t + i * sin_t) * inv_hist_width;
            const double r_rot = (-j * sin_t + i * cos_t) * inv_hist_width;
            const double rbin = r_rot + d / 2 - 0.5;
            const double cbin = c_rot + d / 2 - 0.5;
            if (rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d) continue;

            const double dx = img.at(x + 1, y) - img.at(x - 1, y);
            const double dy = img.at(x, y + 1) - img.at(x, y - 1);
            const double mag = std::sqrt(dx * dx + dy * dy);
            if (mag <= 0.0) continue;
            double obin = (wrap_angle(std::atan2(dy, dx) - orientation) + kPi) * bins_per_rad;
            const double w = std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);
            const double value = w * mag;

            int r0 = static_cast<int>(std::floor(rbin));
            int c0 = static_cast<int>(std::floor(cbin));
            int o0 = static_cast<int>(std::floor(obin));
            const double rf = rbin - r0;
            const double cf = cbin - c0;
            const double of = obin - o0;
            if (o0 >= n) o0 -= n;
            if (o0 < 0) o0 += n;

            // Trilinear scatter into the padded histogram.
            const double v_r1 = value * rf, v_r0 = value - v_r1;
            const double v_rc11 = v_r1 * cf, v_rc10 = v_r1 - v_rc11;
            const double v_rc01 = v_r0 * cf, v_rc00 = v_r0 - v_rc01;
            hist[hidx(r0 + 1, c0 + 1, o0)] += v_rc00 * (1.0 - of);
            hist[hidx(r0 + 1, c0 + 1, o0 + 1)] += v_rc00 * of;
            hist[hidx(r0 + 1, c0 + 2, o0)] += v_rc01 * (1.0 - of);
            hist[hidx(r0 + 1, c0 + 2, o0 + 1)] += v_rc01 * of;
            hist[hidx(r0 + 2, c0 + 1, o0)] += v_rc10 * (1.0 - of);
            hist[hidx(r0 + 2, c0 + 1, o0 + 1)] += v_rc10 * of;
            hist[hidx(r0 + 2, c0 + 2, o0)] += v_rc11 * (1.0 - of);
            hist[hidx(r0 + 2, c0 + 2, o0 + 1)] += v_rc11 * of;
        }
    }

    out.assign(static_cast<size_t>(d) * d * n, 0.0f);
    for (int r = 1; r <= d; ++r) {
        for (int c = 1; c <= d; ++c) {
            // Fold the circular orientation padding back in.
            hist[hidx(r, c, 0)] += hist[hidx(r, c, n)];
            hist[hidx(r, c, 1)] += hist[hidx(r, c, n + 1)];
            for (int o = 0; o < n; ++o) {
                out[static_cast<size_t>((r - 1) * d + (c - 1)) * n + static_cast<size_t>(o)] =
                    static_cast<float>(hist[hidx(r, c, o)]);
            }
        }
    }

    // L2-normalize, clamp at 0.2, renormalize.
    double norm2 = 0.0;
    for (float v : out) norm2 += static_cast<double>(v) * v;
    if (norm2 <= 1e-20) return false;
    const float inv_norm = static_cast<float>(1.0 / std::sqrt(norm2));
    for (float& v : out) v = std::min(v * inv_norm, kDescClamp);
    if (renormalize) {
        norm2 = 0.0;
        for (float v : out) norm2 += static_cast<double>(v) * v;
        const float inv2 = static_cast<float>(1.0 / std::sqrt(norm2));
        for (float& v : out) v *= inv2;
    }
    return true;
}

void canonical_sort(std::vector<Keypoint>& kps) {
    std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
        if (a.y != b.y) return a.y < b.y;
        if (a.x != b.x) return a.x < b.x;
        if (a.scale != b.scale) return a.scale < b.scale;
        return a.orientation < b.orientation;
    });
}

std::vector<Keypoint> detect_impl(const Pyramid& pyr, const DetectorConfig& cfg) {
    const int s = pyr.intervals;
    const double pre_threshold = 0.5 * cfg.contrast_threshold / s;
    const double r = cfg.edge_ratio_threshold;
    const double edge_limit = (r + 1.0) * (r + 1.0) / r;

    std::vector<Keypoint> out;
    for (int o = 0; o < pyr.octave_count; ++o) {
        const auto& dog = pyr.dog[static_cast<size_t>(o)];
        const int w = dog[0].width, h = dog[0].height;
        const double oct_scale = std::pow(2.0, o);
        for (int l = 1; l <= s; ++l) {
            const GrayImage& d0 = dog[static_cast<size_t>(l - 1)];
            const GrayImage& d1 = dog[static_cast<size_t>(l)];
            const GrayImage& d2 = dog[static_cast<size_t>(l + 1)];
            for (int y = kBorder; y < h - kBorder; ++y) {
                for (int x = kBorder; x < w - kBorder; ++x) {
                    const float v = d1.at(x, y);
                    if (std::fabs(v) <= pre_threshold) continue;

                    bool is_max = true, is_min = true;
                    for (int dy = -1; dy <= 1 && (is_max || is_min); ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            const float a = d0.at(x + dx, y + dy);
                            const float b = d1.at(x + dx, y + dy);
                            const float c = d2.at(x + dx, y + dy);
                            if (v <= a || v <= c || (v <= b && !(dx == 0 && dy == 0))) is_max = false;
                            if (v >= a || v >= c || (v >= b && !(dx == 0 && dy == 0))) is_min = false;
                            if (!is_max && !is_min) break;
                        }
                    }
                    if (!is_max && !is_min) continue;

                    // Sub-pixel / sub-scale refinement by quadratic fit.
                    int xi = x, yi = y, li = l;
                    double ox = 0.0, oy = 0.0, ol = 0.0;
                    bool ok = false;
                    for (int step = 0; step < kMaxInterpSteps; ++step) {
                        const GrayImage& m0 = dog[static_cast<size_t>(li - 1)];
                        const GrayImage& m1 = dog[static_cast<size_t>(li)];
                        const GrayImage& m2 = dog[static_cast<size_t>(li + 1)];
                        const double gx = 0.5 * (m1.at(xi + 1, yi) - m1.at(xi - 1, yi));
                        const double gy = 0.5 * (m1.at(xi, yi + 1) - m1.at(xi, yi - 1));
                        const double gl = 0.5 * (m2.at(xi, yi) - m0.at(xi, yi));
                        const double c = m1.at(xi, yi);
                        const double hxx = m1.at(xi + 1, yi) + m1.at(xi - 1, yi) - 2.0 * c;
                        const double hyy = m1.at(xi, yi + 1) + m1.at(xi, yi - 1) - 2.0 * c;
                        const double hll = m2.at(xi, yi) + m0.at(xi, yi) - 2.0 * c;
                        const double hxy = 0.25 * (m1.at(xi + 1, yi + 1) - m1.at(xi - 1, yi + 1) -
                                                   m1.at(xi + 1, yi - 1) + m1.at(xi - 1, yi - 1));
                        const double hxl = 0.25 * (m2.at(xi + 1, yi) - m2.at(xi - 1, yi) -
                                                   m0.at(xi + 1, yi) + m0.at(xi - 1, yi));
                        const double hyl = 0.25 * (m2.at(xi, yi + 1) - m2.at(xi, yi - 1) -
                                                   m0.at(xi, yi + 1) + m0.at(xi, yi - 1));

                        // Solve H * delta = -g by Cramer's rule.
                        const double det = hxx * (hyy * hll - hyl * hyl) -
                                           hxy * (hxy * hll - hyl * hxl) +
                                           hxl * (hxy * hyl - hyy * hxl);
                        if (std::fabs(det) < 1e-30) break;
                        const double bx = -gx, by = -gy, bl = -gl;
                        ox = (bx * (hyy * hll - hyl * hyl) - hxy * (by * hll - hyl * bl) +
                              hxl * (by * hyl - hyy * bl)) / det;
                        oy = (hxx * (by * hll - hyl * bl) - bx * (hxy * hll - hyl * hxl) +
                              hxl * (hxy * bl - by * hxl)) / det;
                        ol = (hxx * (hyy * bl - by * hyl) - hxy * (hxy * bl - by * hxl) +
                              bx * (hxy * hyl - hyy * hxl)) / det;

                        if (std::fabs(ox) < 0.5 && std::fabs(oy) < 0.5 && std::fabs(ol) < 0.5) {
                            ok = true;
                            break;
                        }
                        if (std::fabs(ox) > 3.0 || std::fabs(oy) > 3.0 || std::fabs(ol) > 3.0) break;
                        xi += static_cast<int>(std::lround(ox));
                        yi += static_cast<int>(std::lround(oy));
                        li += static_cast<int>(std::lround(ol));
                        if (li < 1 || li > s || xi < kBorder || xi >= w - kBorder ||
                            yi < kBorder || yi >= h - kBorder) {
                            break;
                        }
                    }
                    if (!ok) continue;

                    const GrayImage& m1 = dog[static_cast<size_t>(li)];
                    const double gx = 0.5 * (m1.at(xi + 1, yi) - m1.at(xi - 1, yi));
                    const double gy = 0.5 * (m1.at(xi, yi + 1) - m1.at(xi, yi - 1));
                    const double gl = 0.5 * (dog[static_cast<size_t>(li + 1)].at(xi, yi) -
                                             dog[static_cast<size_t>(li - 1)].at(xi, yi));
                    const double contrast = m1.at(xi, yi) + 0.5 * (gx * ox + gy * oy + gl * ol);
                    if (std::fabs(contrast) * s < cfg.contrast_threshold) continue;

                    const double c = m1.at(xi, yi);
                    const double hxx = m1.at(xi + 1, yi) + m1.at(xi - 1, yi) - 2.0 * c;
                    const double hyy = m1.at(xi, yi + 1) + m1.at(xi, yi - 1) - 2.0 * c;
                    const double hxy = 0.25 * (m1.at(xi + 1, yi + 1) - m1.at(xi - 1, yi + 1) -
                                               m1.at(xi + 1, yi - 1) + m1.at(xi - 1, yi - 1));
                    const double tr = hxx + hyy;
                    const double det2 = hxx * hyy - hxy * hxy;
                    if (det2 <= 0.0 || tr * tr / det2 >= edge_limit) continue;

                    Keypoint kp;
                    kp.x = (xi + ox) * oct_scale;
                    kp.y = (yi + oy) * oct_scale;
                    kp.scale = cfg.base_sigma * std::pow(2.0, o + (li + ol) / static_cast<double>(s));
                    kp.response = contrast;

                    const Placement pl = place_keypoint(pyr, kp);
                    const GrayImage& gimg =
                        pyr.gauss[static_cast<size_t>(pl.octave)][static_cast<size_t>(pl.layer)];
                    for (double angle : orientation_peaks(gimg, pl.x, pl.y, pl.scale)) {
                        Keypoint split = kp;
                        split.orientation = angle;
                        out.push_back(split);
                    }
                }
            }
        }
    }

    if (cfg.max_features > 0 && out.size() > static_cast<size_t>(cfg.max_features)) {
        std::sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) {
            if (std::fabs(a.response) != std::fabs(b.response)) {
                return std::fabs(a.response) > std::fabs(b.response);
            }
            if (a.y != b.y) return a.y < b.y;
            if (a.x != b.x) return a.x < b.x;
            return a.scale < b.scale;
        });
        out.resize(static_cast<size_t>(cfg.max_features));
    }
    canonical_sort(out);
    return out;
}

FeatureSet describe_impl(const Pyramid& pyr, const std::vector<Keypoint>& keypoints,
                         const DetectorConfig&) {
    FeatureSet fs;
    fs.keypoints.reserve(keypoints.size());
    fs.descriptors.reserve(keypoints.size());
    std::vector<float> desc;
    for (const Keypoint& kp : keypoints) {
        const Placement pl = place_keypoint(pyr, kp);
        const GrayImage& img =
            pyr.gauss[static_cast<size_t>(pl.octave)][static_cast<size_t>(pl.layer)];
        if (!compute_descriptor(img, pl.x, pl.y, pl.scale, kp.orientation, desc, true)) continue;
        fs.keypoints.push_back(kp);
        fs.descriptors.emplace_back(desc);
    }
    return fs;
}

}  // namespace

void DetectorConfig::validate() const {
    if (octaves < 1 || scales_per_octave < 1) {
        throw std::invalid_argument("detector: octaves and scales_per_octave must be >= 1");
    }
    if (contrast_threshold <= 0.0 || edge_ratio_threshold <= 0.0 || base_sigma <= 0.0) {
        throw std::invalid_argument("detector: thresholds and base_sigma must be positive");
    }
}

std::vector<Keypoint> detect(const GrayImage& image, const DetectorConfig& cfg) {
    cfg.validate();
    if (image.width < 64 || image.height < 64) {
        throw std::invalid_argument("detect: image must be at least 64x64");
    }
    const Pyramid pyr = build_pyramid(image, cfg);
    return detect_impl(pyr, cfg);
}

FeatureSet describe(const GrayImage& image, const std::vector<Keypoint>& keypoints,
                    const DetectorConfig& cfg) {
    cfg.validate();
    if (image.width < 64 || image.height < 64) {
        throw std::invalid_argument("describe: image must be at least 64x64");
    }
    const Pyramid pyr = build_pyramid(image, cfg);
    return describe_impl(pyr, keypoints, cfg);
}

FeatureSet detect_and_describe(const GrayImage& image, const DetectorConfig& cfg) {
    cfg.validate();
    if (image.width < 64 || image.height < 64) {
        throw std::invalid_argument("detect: image must be at least 64x64");
    }
    const Pyramid pyr = build_pyramid(image, cfg);
    return describe_impl(pyr, detect_impl(pyr, cfg), cfg);
}

FeatureSet read_feature_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    FeatureSet fs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        Keypoint kp;
        if (!(ss >> kp.x >> kp.y >> kp.scale >> kp.orientation)) {
            throw std::runtime_error(path + ": malformed feature at line " + std::to_string(line_no));
        }
        std::vector<float> values(128);
        for (float& v : values) {
            if (!(ss >> v)) {
                throw std::runtime_error(path + ": expected 128 descriptor values at line " +
                                         std::to_string(line_no));
            }
        }
        fs.keypoints.push_back(kp);
        fs.descriptors.emplace_back(std::move(values));
    }
    return fs;
}

void write_feature_file(const FeatureSet& features, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "# x y scale orientation d0..d127\n";
    out.precision(10);
    for (size_t i = 0; i < features.size(); ++i) {
        const Keypoint& kp = features.keypoints[i];
        out << kp.x << ' ' << kp.y << ' ' << kp.scale << ' ' << kp.orientation;
        for (float v : features.descriptors[i].values) out << ' ' << v;
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

namespace detail {
std::vector<float> raw_clamped_histogram(const GrayImage& image, const Keypoint& kp,
                                         const DetectorConfig& cfg) {
    const Pyramid pyr = build_pyramid(image, cfg);
    const Placement pl = place_keypoint(pyr, kp);
    const GrayImage& img = pyr.gauss[static_cast<size_t>(pl.octave)][static_cast<size_t>(pl.layer)];
    std::vector<float> out;
    if (!compute_descriptor(img, pl.x, pl.y, pl.scale, kp.orientation, out, false)) {
        throw std::runtime_error("keypoint too close to the border");
    }
    return out;
}
}  // namespace detail

}  // namespace texloc::features
