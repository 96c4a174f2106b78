#include "texloc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace texloc {

float GrayImage::sample(double x, double y) const {
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    if (x0 > width - 2) x0 = width - 2;
    if (y0 > height - 2) y0 = height - 2;
    if (x0 < 0) x0 = 0;
    if (y0 < 0) y0 = 0;
    const double fx = x - x0;
    const double fy = y - y0;
    const double v00 = at(x0, y0);
    const double v10 = at(x0 + 1, y0);
    const double v01 = at(x0, y0 + 1);
    const double v11 = at(x0 + 1, y0 + 1);
    return static_cast<float>((v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) +
                              (v01 * (1.0 - fx) + v11 * fx) * fy);
}

std::vector<uint8_t> to_bytes(const GrayImage& img) {
    std::vector<uint8_t> out(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        float v = img.pixels[i];
        if (v < 0.0f) v = 0.0f;
        if (v > 1.0f) v = 1.0f;
        out[i] = static_cast<uint8_t>(v * 255.0f + 0.5f);
    }
    return out;
}

GrayImage from_bytes(const uint8_t* data, int width, int height) {
    GrayImage img(width, height);
    const size_t n = static_cast<size_t>(width) * height;
    for (size_t i = 0; i < n; ++i) {
        img.pixels[i] = static_cast<float>(data[i]) / 255.0f;
    }
    return img;
}

namespace {

bool has_suffix(const std::string& s, const std::string& suffix) {
    if (s.size() < suffix.size()) return false;
    return std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                      [](char a, char b) { return std::tolower(a) == std::tolower(b); });
}

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

GrayImage load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode PNG " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
        color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);

    std::vector<uint8_t> row(png_get_rowbytes(png, info));
    GrayImage img(static_cast<int>(width), static_cast<int>(height));
    for (png_uint_32 y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < width; ++x) {
            img.at(static_cast<int>(x), static_cast<int>(y)) = row[x] / 255.0f;
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const GrayImage& img, const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode PNG " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::vector<uint8_t> bytes = to_bytes(img);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<size_t>(y) * img.width));
    }
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

GrayImage load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P2") throw std::runtime_error(path + ": not a PGM file");

    auto next_token = [&in, &path]() -> long {
        // Skips whitespace and '#' comments.
        while (true) {
            const int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        long v = -1;
        in >> v;
        if (!in) throw std::runtime_error(path + ": truncated PGM header");
        return v;
    };

    const long width = next_token();
    const long height = next_token();
    const long maxval = next_token();
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
        throw std::runtime_error(path + ": bad PGM header");
    }

    GrayImage img(static_cast<int>(width), static_cast<int>(height));
    const size_t n = static_cast<size_t>(width) * height;
    if (magic == "P2") {
        for (size_t i = 0; i < n; ++i) {
            long v;
            in >> v;
            if (!in) throw std::runtime_error(path + ": truncated PGM data");
            img.pixels[i] = static_cast<float>(v) / static_cast<float>(maxval);
        }
    } else {
        in.get();  // single whitespace after maxval
        if (maxval < 256) {
            std::vector<uint8_t> buf(n);
            in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
            if (static_cast<size_t>(in.gcount()) != n) throw std::runtime_error(path + ": truncated PGM data");
            for (size_t i = 0; i < n; ++i) img.pixels[i] = buf[i] / static_cast<float>(maxval);
        } else {
            std::vector<uint8_t> buf(2 * n);
            in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(2 * n));
            if (static_cast<size_t>(in.gcount()) != 2 * n) throw std::runtime_error(path + ": truncated PGM data");
            for (size_t i = 0; i < n; ++i) {
                const int v = (buf[2 * i] << 8) | buf[2 * i + 1];
                img.pixels[i] = static_cast<float>(v) / static_cast<float>(maxval);
            }
        }
    }
    return img;
}

void save_pgm(const GrayImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    const std::vector<uint8_t> bytes = to_bytes(img);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace

GrayImage load_image(const std::string& path) {
    if (has_suffix(path, ".png")) return load_png(path);
    if (has_suffix(path, ".pgm")) return load_pgm(path);
    throw std::runtime_error(path + ": unsupported image format (use .png or .pgm)");
}

void save_image(const GrayImage& img, const std::string& path) {
    if (img.width <= 0 || img.height <= 0) throw std::runtime_error("empty image");
    if (has_suffix(path, ".png")) {
        save_png(img, path);
    } else if (has_suffix(path, ".pgm")) {
        save_pgm(img, path);
    } else {
        throw std::runtime_error(path + ": unsupported image format (use .png or .pgm)");
    }
}

}  // namespace texloc
