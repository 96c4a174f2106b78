#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace texloc {

// Row-major grayscale raster, values in [0, 1].
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, float fill = 0.0f)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

    float& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
    float at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }

    bool contains(int x, int y) const {
        return x >= 0 && y >= 0 && x < width && y < height;
    }

    // Bilinear sample; caller guarantees (x, y) in [0, w-1] x [0, h-1].
    float sample(double x, double y) const;
};

// 8-bit quantization used by both PNG and PGM writers.
std::vector<uint8_t> to_bytes(const GrayImage& img);
GrayImage from_bytes(const uint8_t* data, int width, int height);

// Format chosen by extension: .png or .pgm. PNG color inputs are converted
// to luminance; 16-bit PNG is scaled down.
GrayImage load_image(const std::string& path);
void save_image(const GrayImage& img, const std::string& path);

}  // namespace texloc
