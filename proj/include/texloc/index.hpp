#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "texloc/types.hpp"

namespace texloc::index {

// 10 scale buckets delimited by 11 strictly ascending edges. A scale on an
// edge belongs to the bucket whose left edge it is; out-of-range scales
// clamp to the end buckets.
struct ScaleBuckets {
    static constexpr int kBucketCount = 10;
    std::array<double, kBucketCount + 1> edges{};

    int bucket_of(double scale) const;
    void validate() const;
};

// Equal-count quantile edges over a training scale sample.
ScaleBuckets quantile_buckets(std::vector<double> scales);

struct QueryResult {
    int64_t feature = -1;  // index into the feature list given to build()
    double distance = std::numeric_limits<double>::infinity();  // squared L2

    bool found() const { return feature >= 0; }
};

inline constexpr int kExhaustiveChecks = std::numeric_limits<int>::max();

// Forest of randomized kd-trees per scale bucket with bounded best-bin-first
// search. `checks` bounds the number of leaf visits; kExhaustiveChecks
// degenerates to an exact per-bucket search.
class AnnIndex {
public:
    AnnIndex() = default;

    static AnnIndex build(const std::vector<WorldFeature>& features, const ScaleBuckets& buckets,
                          int trees = 4, uint64_t seed = 0);

    // Nearest neighbor within the bucket containing `scale`. Returns a
    // no-match result when that bucket is empty.
    QueryResult query(const Descriptor& desc, double scale, int checks = 32) const;

    // m approximate nearest neighbors, best first; fewer when the bucket
    // is smaller than m.
    std::vector<QueryResult> query_knn(const Descriptor& desc, double scale, int checks,
                                       int m) const;

    // Exact linear scan within the bucket; the test oracle.
    QueryResult query_exact(const Descriptor& desc, double scale) const;

    int dim() const { return dim_; }
    const ScaleBuckets& buckets() const { return buckets_; }
    size_t bucket_size(int bucket) const { return buckets_data_[static_cast<size_t>(bucket)].ids.size(); }
    size_t total_size() const;

private:
    struct Node {
        // leaf when count > 0: [first, first+count) into ids;
        // interior otherwise: children at left/right, split on dim at value.
        int32_t first = 0;
        int32_t count = 0;
        int32_t left = -1;
        int32_t right = -1;
        int32_t split_dim = 0;
        float split_value = 0.0f;
    };

    struct Tree {
        std::vector<Node> nodes;
        std::vector<int32_t> order;  // permutation of local point indices
    };

    struct Bucket {
        std::vector<int64_t> ids;     // global feature indices
        std::vector<float> points;    // ids.size() x dim, row-major
        std::vector<Tree> trees;
    };

    double point_distance(const Bucket& b, int32_t local, const float* q) const;
    struct Shortlist;
    void search_bucket(const Bucket& b, const float* q, int checks, Shortlist& best) const;

    int dim_ = 0;
    ScaleBuckets buckets_;
    std::vector<Bucket> buckets_data_;
};

}  // namespace texloc::index
