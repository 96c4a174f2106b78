#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "texloc/geometry.hpp"
#include "texloc/index.hpp"
#include "texloc/pca.hpp"
#include "texloc/types.hpp"

namespace texloc::mapdb {

struct MapImage {
    uint32_t image_id = 0;
    Pose2 pose;  // image frame -> world frame
    int width = 0;
    int height = 0;
    std::string source;  // path of the source raster, may be relative
};

struct DatabaseMeta {
    double mm_per_pixel = kDefaultMmPerPixel;
    uint64_t seed = 0;
    std::string capture_date;
};

struct MapDatabase {
    DatabaseMeta meta;
    std::vector<MapImage> images;
    pca::DescriptorBasis basis;
    index::ScaleBuckets buckets;
    std::vector<WorldFeature> features;
};

enum class SelectionPolicy { random, top_response };

struct BuildParams {
    int k = 16;                 // projected descriptor dimension
    int features_per_image = 50;
    uint64_t seed = 0;
    SelectionPolicy policy = SelectionPolicy::random;
    // When set, used instead of fitting a basis on the selected descriptors
    // (e.g. a universal basis fit on several textures).
    std::optional<pca::DescriptorBasis> preset_basis;
    double mm_per_pixel = kDefaultMmPerPixel;
    std::string capture_date;
};

// Per image: seeded uniform selection of features_per_image keypoints
// (all kept when fewer are available), PCA projection, composition of
// keypoint poses into the world frame. Deterministic for fixed seeds.
MapDatabase build_database(const std::vector<MapImage>& images,
                           const std::vector<FeatureSet>& image_features,
                           const BuildParams& params);

// TXDB container: magic, u32 version, little-endian fixed-width records,
// trailing CRC32. Byte-identical for identical inputs.
void save(const MapDatabase& db, const std::string& path);
MapDatabase load(const std::string& path);

// Structural comparison used by tests and `db-info --verify`.
bool equal(const MapDatabase& a, const MapDatabase& b);

// Map directory layout: images plus a `map.tsv` of (image_id, tx, ty,
// theta); image_id indexes the lexicographically sorted raster list.
void save_map_tsv(const std::vector<MapImage>& images, const std::string& dir);
std::vector<MapImage> load_map_dir(const std::string& dir);

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

}  // namespace texloc::mapdb
