#include "texloc/mapdb.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "texloc/rng.hpp"

namespace fs = std::filesystem;

namespace texloc::mapdb {

namespace {

constexpr char kMagic[4] = {'T', 'X', 'D', 'B'};
constexpr uint32_t kVersion = 1;

// Little-endian buffer writer; the file layout is fixed-width records so
// equal databases serialize byte-identically.
struct Writer {
    std::vector<uint8_t> buf;

    void bytes(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void u32(uint32_t v) {
        uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
        bytes(b, 4);
    }
    void u64(uint64_t v) {
        uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
        bytes(b, 8);
    }
    void f64(double v) {
        uint64_t u;
        std::memcpy(&u, &v, 8);
        u64(u);
    }
    void f32(float v) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
};

struct Reader {
    const uint8_t* p;
    size_t remaining;

    void need(size_t n) const {
        if (n > remaining) throw std::runtime_error("TXDB: truncated file");
    }
    void bytes(void* out, size_t n) {
        need(n);
        std::memcpy(out, p, n);
        p += n;
        remaining -= n;
    }
    uint32_t u32() {
        uint8_t b[4];
        bytes(b, 4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
        return v;
    }
    uint64_t u64() {
        uint8_t b[8];
        bytes(b, 8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
        return v;
    }
    double f64() {
        const uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    float f32() {
        const uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    std::string str() {
        const uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        remaining -= n;
        return s;
    }
};

}  // namespace

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed) {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int b = 0; b < 8; ++b) c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    uint32_t crc = ~seed;
    for (size_t i = 0; i < len; ++i) {
        crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    }
    return ~crc;
}

MapDatabase build_database(const std::vector<MapImage>& images,
                           const std::vector<FeatureSet>& image_features,
                           const BuildParams& params) {
    if (images.size() != image_features.size()) {
        throw std::invalid_argument("build_database: images and feature sets must pair up");
    }
    if (images.empty()) throw std::invalid_argument("build_database: no images");
    if (params.features_per_image < 1) {
        throw std::invalid_argument("build_database: features_per_image must be >= 1");
    }
    for (const MapImage& im : images) {
        if (!std::isfinite(im.pose.theta) || !std::isfinite(im.pose.tx) ||
            !std::isfinite(im.pose.ty)) {
            throw std::invalid_argument("build_database: image " + std::to_string(im.image_id) +
                                        " has no finite pose");
        }
    }

    // Per-image selection of stored keypoints.
    struct Selected {
        size_t image;
        size_t feature;
    };
    std::vector<Selected> selected;
    for (size_t i = 0; i < images.size(); ++i) {
        const FeatureSet& fs = image_features[i];
        const uint32_t n = static_cast<uint32_t>(fs.size());
        if (n == 0) continue;
        const uint32_t want = static_cast<uint32_t>(params.features_per_image);
        std::vector<uint32_t> pick;
        if (n <= want) {
            pick.resize(n);
            std::iota(pick.begin(), pick.end(), 0u);
        } else if (params.policy == SelectionPolicy::random) {
            Rng rng(derive_seed(params.seed, images[i].image_id));
            pick = sample_without_replacement(rng, n, want);
            std::sort(pick.begin(), pick.end());
        } else {
            pick.resize(n);
            std::iota(pick.begin(), pick.end(), 0u);
            std::stable_sort(pick.begin(), pick.end(), [&](uint32_t a, uint32_t b) {
                return std::fabs(fs.keypoints[a].response) > std::fabs(fs.keypoints[b].response);
            });
            pick.resize(want);
            std::sort(pick.begin(), pick.end());
        }
        for (uint32_t f : pick) selected.push_back({i, f});
    }
    if (selected.empty()) throw std::invalid_argument("build_database: all feature sets empty");

    std::vector<Descriptor> raw;
    raw.reserve(selected.size());
    for (const Selected& s : selected) {
        raw.push_back(image_features[s.image].descriptors[s.feature]);
    }

    MapDatabase db;
    db.meta.mm_per_pixel = params.mm_per_pixel;
    db.meta.seed = params.seed;
    db.meta.capture_date = params.capture_date;
    db.images = images;
    db.basis = params.preset_basis ? *params.preset_basis : pca::fit_basis(raw, params.k);
    if (db.basis.k != params.k) {
        throw std::invalid_argument("build_database: preset basis k does not match params.k");
    }

    std::vector<double> scales;
    scales.reserve(selected.size());
    for (const Selected& s : selected) {
        scales.push_back(image_features[s.image].keypoints[s.feature].scale);
    }
    db.buckets = index::quantile_buckets(scales);

    db.features.reserve(selected.size());
    for (size_t i = 0; i < selected.size(); ++i) {
        const Selected& s = selected[i];
        const Keypoint& kp = image_features[s.image].keypoints[s.feature];
        WorldFeature wf;
        wf.image_id = images[s.image].image_id;
        wf.pose = compose(images[s.image].pose, keypoint_pose(kp));
        wf.scale = kp.scale;
        wf.descriptor = pca::project(db.basis, raw[i]);
        db.features.push_back(std::move(wf));
    }
    return db;
}

void save(const MapDatabase& db, const std::string& path) {
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kVersion);

    // meta
    w.f64(db.meta.mm_per_pixel);
    w.u64(db.meta.seed);
    w.str(db.meta.capture_date);

    // images
    w.u32(static_cast<uint32_t>(db.images.size()));
    for (const MapImage& im : db.images) {
        w.u32(im.image_id);
        w.f64(im.pose.theta);
        w.f64(im.pose.tx);
        w.f64(im.pose.ty);
        w.u32(static_cast<uint32_t>(im.width));
        w.u32(static_cast<uint32_t>(im.height));
        w.str(im.source);
    }

    // basis
    w.u32(static_cast<uint32_t>(db.basis.k));
    for (double v : db.basis.mean) w.f64(v);
    for (double v : db.basis.components) w.f64(v);
    for (double v : db.basis.eigenvalues) w.f64(v);

    // bucket edges
    for (double e : db.buckets.edges) w.f64(e);

    // features
    w.u32(static_cast<uint32_t>(db.basis.k));
    w.u64(db.features.size());
    for (const WorldFeature& f : db.features) {
        w.u32(f.image_id);
        w.f64(f.pose.theta);
        w.f64(f.pose.tx);
        w.f64(f.pose.ty);
        w.f64(f.scale);
        for (float v : f.descriptor.values) w.f32(v);
    }

    w.u32(crc32(w.buf.data(), w.buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw std::runtime_error("failed writing " + path);
}

MapDatabase load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 12) throw std::runtime_error("TXDB: truncated file");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw std::runtime_error("TXDB: bad magic");

    const uint32_t stored_crc = crc32(buf.data(), buf.size() - 4);
    uint32_t file_crc = 0;
    for (int i = 0; i < 4; ++i) {
        file_crc |= static_cast<uint32_t>(buf[buf.size() - 4 + static_cast<size_t>(i)]) << (8 * i);
    }
    if (stored_crc != file_crc) throw std::runtime_error("TXDB: checksum mismatch (corrupted file)");

    Reader r{buf.data() + 4, buf.size() - 8};
    const uint32_t version = r.u32();
    if (version != kVersion) {
        throw std::runtime_error("TXDB: unsupported version " + std::to_string(version) +
                                 " (expected " + std::to_string(kVersion) + ")");
    }

    MapDatabase db;
    db.meta.mm_per_pixel = r.f64();
    db.meta.seed = r.u64();
    db.meta.capture_date = r.str();

    const uint32_t image_count = r.u32();
    db.images.resize(image_count);
    for (MapImage& im : db.images) {
        im.image_id = r.u32();
        im.pose.theta = r.f64();
        im.pose.tx = r.f64();
        im.pose.ty = r.f64();
        im.width = static_cast<int>(r.u32());
        im.height = static_cast<int>(r.u32());
        im.source = r.str();
    }

    db.basis.k = static_cast<int>(r.u32());
    if (db.basis.k < 1 || db.basis.k > pca::kRawDim) throw std::runtime_error("TXDB: bad basis k");
    db.basis.mean.resize(pca::kRawDim);
    for (double& v : db.basis.mean) v = r.f64();
    db.basis.components.resize(static_cast<size_t>(db.basis.k) * pca::kRawDim);
    for (double& v : db.basis.components) v = r.f64();
    db.basis.eigenvalues.resize(static_cast<size_t>(db.basis.k));
    for (double& v : db.basis.eigenvalues) v = r.f64();

    for (double& e : db.buckets.edges) e = r.f64();

    const uint32_t dim = r.u32();
    const uint64_t feature_count = r.u64();
    db.features.resize(feature_count);
    for (WorldFeature& f : db.features) {
        f.image_id = r.u32();
        f.pose.theta = r.f64();
        f.pose.tx = r.f64();
        f.pose.ty = r.f64();
        f.scale = r.f64();
        std::vector<float> values(dim);
        for (float& v : values) v = r.f32();
        f.descriptor = Descriptor(std::move(values));
    }
    if (r.remaining != 0) throw std::runtime_error("TXDB: trailing bytes");
    return db;
}

bool equal(const MapDatabase& a, const MapDatabase& b) {
    if (a.meta.mm_per_pixel != b.meta.mm_per_pixel || a.meta.seed != b.meta.seed ||
        a.meta.capture_date != b.meta.capture_date) {
        return false;
    }
    if (a.images.size() != b.images.size() || a.features.size() != b.features.size()) return false;
    for (size_t i = 0; i < a.images.size(); ++i) {
        const MapImage& x = a.images[i];
        const MapImage& y = b.images[i];
        if (x.image_id != y.image_id || x.pose.theta != y.pose.theta || x.pose.tx != y.pose.tx ||
            x.pose.ty != y.pose.ty || x.width != y.width || x.height != y.height ||
            x.source != y.source) {
            return false;
        }
    }
    if (a.basis.k != b.basis.k || a.basis.mean != b.basis.mean ||
        a.basis.components != b.basis.components || a.basis.eigenvalues != b.basis.eigenvalues) {
        return false;
    }
    if (a.buckets.edges != b.buckets.edges) return false;
    for (size_t i = 0; i < a.features.size(); ++i) {
        const WorldFeature& x = a.features[i];
        const WorldFeature& y = b.features[i];
        if (x.image_id != y.image_id || x.pose.theta != y.pose.theta || x.pose.tx != y.pose.tx ||
            x.pose.ty != y.pose.ty || x.scale != y.scale ||
            x.descriptor.values != y.descriptor.values) {
            return false;
        }
    }
    return true;
}

void save_map_tsv(const std::vector<MapImage>& images, const std::string& dir) {
    fs::create_directories(dir);
    const fs::path path = fs::path(dir) / "map.tsv";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "# image_id\ttx_px\tty_px\ttheta_rad\n";
    out.precision(12);
    for (const MapImage& im : images) {
        out << im.image_id << '\t' << im.pose.tx << '\t' << im.pose.ty << '\t' << im.pose.theta
            << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<MapImage> load_map_dir(const std::string& dir) {
    // image_id maps to the lexicographically sorted raster list.
    std::vector<std::string> rasters;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".pgm" || ext == ".PNG" || ext == ".PGM") {
            rasters.push_back(entry.path().string());
        }
    }
    std::sort(rasters.begin(), rasters.end());
    if (rasters.empty()) throw std::runtime_error(dir + ": no map rasters (.png/.pgm)");

    const fs::path tsv = fs::path(dir) / "map.tsv";
    std::ifstream in(tsv);
    if (!in) throw std::runtime_error(tsv.string() + " not found (run build-map first)");

    std::vector<MapImage> images;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        MapImage im;
        if (!(ss >> im.image_id >> im.pose.tx >> im.pose.ty >> im.pose.theta)) {
            throw std::runtime_error(tsv.string() + ": malformed line: " + line);
        }
        if (im.image_id >= rasters.size()) {
            throw std::runtime_error(tsv.string() + ": image_id " + std::to_string(im.image_id) +
                                     " has no matching raster");
        }
        im.source = rasters[im.image_id];
        images.push_back(im);
    }
    if (images.empty()) throw std::runtime_error(tsv.string() + ": no entries");
    return images;
}

}  // namespace texloc::mapdb
