#include "texloc/index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

#include "texloc/rng.hpp"
#include "texloc/threading.hpp"

namespace texloc::index {

int ScaleBuckets::bucket_of(double scale) const {
    if (scale <= edges[0]) return 0;
    if (scale >= edges[kBucketCount]) return kBucketCount - 1;
    // Largest i with edges[i] <= scale.
    int lo = 0, hi = kBucketCount;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        if (edges[static_cast<size_t>(mid)] <= scale) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return lo;
}

void ScaleBuckets::validate() const {
    for (int i = 0; i < kBucketCount; ++i) {
        if (!(edges[static_cast<size_t>(i)] < edges[static_cast<size_t>(i + 1)])) {
            throw std::invalid_argument("scale bucket edges must be strictly ascending");
        }
    }
}

ScaleBuckets quantile_buckets(std::vector<double> scales) {
    if (scales.empty()) throw std::invalid_argument("quantile_buckets: no scales");
    std::sort(scales.begin(), scales.end());
    ScaleBuckets b;
    const size_t n = scales.size();
    for (int i = 0; i <= ScaleBuckets::kBucketCount; ++i) {
        const double q = static_cast<double>(i) / ScaleBuckets::kBucketCount;
        const double pos = q * static_cast<double>(n - 1);
        const size_t i0 = static_cast<size_t>(pos);
        const size_t i1 = std::min(i0 + 1, n - 1);
        const double f = pos - static_cast<double>(i0);
        b.edges[static_cast<size_t>(i)] = scales[i0] * (1.0 - f) + scales[i1] * f;
    }
    // DoG scales can repeat; force strict ascent so bucket_of stays total.
    for (int i = 1; i <= ScaleBuckets::kBucketCount; ++i) {
        double& e = b.edges[static_cast<size_t>(i)];
        const double prev = b.edges[static_cast<size_t>(i - 1)];
        if (e <= prev) e = prev + std::max(1e-9, std::fabs(prev) * 1e-9);
    }
    return b;
}

namespace {

constexpr int kLeafSize = 16;
constexpr int kTopVarianceDims = 5;

struct BuildContext {
    const std::vector<float>* points = nullptr;
    int dim = 0;
    Rng rng;
};

const float* point_ptr(const std::vector<float>& points, int dim, int32_t idx) {
    return &points[static_cast<size_t>(idx) * static_cast<size_t>(dim)];
}

}  // namespace

double AnnIndex::point_distance(const Bucket& b, int32_t local, const float* q) const {
    const float* p = &b.points[static_cast<size_t>(local) * static_cast<size_t>(dim_)];
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
        acc += d * d;
    }
    return acc;
}

AnnIndex AnnIndex::build(const std::vector<WorldFeature>& features, const ScaleBuckets& buckets,
                         int trees, uint64_t seed) {
    if (features.empty()) throw std::invalid_argument("AnnIndex::build: no features");
    buckets.validate();
    if (trees < 1) throw std::invalid_argument("AnnIndex::build: trees must be >= 1");

    AnnIndex idx;
    idx.dim_ = features[0].descriptor.dim();
    idx.buckets_ = buckets;
    idx.buckets_data_.resize(ScaleBuckets::kBucketCount);
    for (const WorldFeature& f : features) {
        if (f.descriptor.dim() != idx.dim_) {
            throw std::invalid_argument("AnnIndex::build: inconsistent descriptor dimensions");
        }
    }

    for (size_t i = 0; i < features.size(); ++i) {
        const int b = buckets.bucket_of(features[i].scale);
        idx.buckets_data_[static_cast<size_t>(b)].ids.push_back(static_cast<int64_t>(i));
    }
    for (auto& b : idx.buckets_data_) {
        b.points.resize(b.ids.size() * static_cast<size_t>(idx.dim_));
        for (size_t i = 0; i < b.ids.size(); ++i) {
            const Descriptor& d = features[static_cast<size_t>(b.ids[i])].descriptor;
            std::copy(d.values.begin(), d.values.end(),
                      b.points.begin() + static_cast<ptrdiff_t>(i * static_cast<size_t>(idx.dim_)));
        }
    }

    // Recursive randomized kd-tree build: split on a random dim among the
    // top-variance dims, at the mean.
    const auto build_tree = [&idx](Bucket& bucket, uint64_t tree_seed) {
        Tree tree;
        const int32_t n = static_cast<int32_t>(bucket.ids.size());
        tree.order.resize(static_cast<size_t>(n));
        for (int32_t i = 0; i < n; ++i) tree.order[static_cast<size_t>(i)] = i;
        if (n == 0) return tree;

        Rng rng(tree_seed);
        const int dim = idx.dim_;
        std::vector<double> mean(static_cast<size_t>(dim)), var(static_cast<size_t>(dim));

        struct Range {
            int32_t first, count, node;
        };
        tree.nodes.emplace_back();
        std::vector<Range> stack{{0, n, 0}};
        while (!stack.empty()) {
            const Range r = stack.back();
            stack.pop_back();
            Node& node = tree.nodes[static_cast<size_t>(r.node)];
            if (r.count <= kLeafSize) {
                node.first = r.first;
                node.count = r.count;
                continue;
            }

            std::fill(mean.begin(), mean.end(), 0.0);
            std::fill(var.begin(), var.end(), 0.0);
            // Sampled moments are enough to pick a split dimension.
            const int32_t samples = std::min<int32_t>(r.count, 128);
            for (int32_t s = 0; s < samples; ++s) {
                const int32_t local = tree.order[static_cast<size_t>(r.first + s)];
                const float* p = point_ptr(bucket.points, dim, local);
                for (int i = 0; i < dim; ++i) mean[static_cast<size_t>(i)] += p[i];
            }
            for (int i = 0; i < dim; ++i) mean[static_cast<size_t>(i)] /= samples;
            for (int32_t s = 0; s < samples; ++s) {
                const int32_t local = tree.order[static_cast<size_t>(r.first + s)];
                const float* p = point_ptr(bucket.points, dim, local);
                for (int i = 0; i < dim; ++i) {
                    const double d = p[i] - mean[static_cast<size_t>(i)];
                    var[static_cast<size_t>(i)] += d * d;
                }
            }

            int top[kTopVarianceDims];
            int top_count = 0;
            for (int i = 0; i < dim; ++i) {
                int pos = top_count;
                while (pos > 0 && var[static_cast<size_t>(top[pos - 1])] < var[static_cast<size_t>(i)]) {
                    if (pos < kTopVarianceDims) top[pos] = top[pos - 1];
                    --pos;
                }
                if (pos < kTopVarianceDims) {
                    top[pos] = i;
                    if (top_count < kTopVarianceDims) ++top_count;
                }
            }
            const int split_dim = top[uniform_below(rng, static_cast<uint64_t>(top_count))];
            const float split_value = static_cast<float>(mean[static_cast<size_t>(split_dim)]);

            auto begin = tree.order.begin() + r.first;
            auto mid = std::partition(begin, begin + r.count, [&](int32_t local) {
                return point_ptr(bucket.points, dim, local)[split_dim] < split_value;
            });
            int32_t left_count = static_cast<int32_t>(mid - begin);
            // Degenerate split (all points on one side): fall back to a
            // median split on the same dim to guarantee progress.
            if (left_count == 0 || left_count == r.count) {
                left_count = r.count / 2;
                std::nth_element(begin, begin + left_count, begin + r.count,
                                 [&](int32_t a, int32_t b) {
                                     return point_ptr(bucket.points, dim, a)[split_dim] <
                                            point_ptr(bucket.points, dim, b)[split_dim];
                                 });
            }

            node.count = 0;
            node.split_dim = split_dim;
            node.split_value = split_value;
            const int32_t left_node = static_cast<int32_t>(tree.nodes.size());
            tree.nodes[static_cast<size_t>(r.node)].left = left_node;
            tree.nodes[static_cast<size_t>(r.node)].right = left_node + 1;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            stack.push_back({r.first, left_count, left_node});
            stack.push_back({r.first + left_count, r.count - left_count, left_node + 1});
        }
        return tree;
    };

    parallel_for(idx.buckets_data_.size(), [&](size_t b) {
        Bucket& bucket = idx.buckets_data_[b];
        bucket.trees.resize(static_cast<size_t>(trees));
        for (int t = 0; t < trees; ++t) {
            bucket.trees[static_cast<size_t>(t)] =
                build_tree(bucket, derive_seed(seed, (b << 8) | static_cast<uint64_t>(t)));
        }
    });
    return idx;
}

// Ordered shortlist of the m best candidates, ties broken by feature id so
// bounded and exhaustive searches agree.
struct AnnIndex::Shortlist {
    size_t m;
    std::vector<QueryResult> items;  // ascending (distance, feature)

    explicit Shortlist(size_t want) : m(want) { items.reserve(want); }

    double worst() const {
        return items.size() < m ? std::numeric_limits<double>::infinity()
                                : items.back().distance;
    }
    void offer(double d, int64_t id) {
        if (items.size() == m) {
            const QueryResult& back = items.back();
            if (d > back.distance || (d == back.distance && id > back.feature)) return;
            items.pop_back();
        }
        QueryResult qr{id, d};
        auto pos = std::lower_bound(items.begin(), items.end(), qr,
                                    [](const QueryResult& a, const QueryResult& b) {
                                        return a.distance < b.distance ||
                                               (a.distance == b.distance && a.feature < b.feature);
                                    });
        items.insert(pos, qr);
    }
};

void AnnIndex::search_bucket(const Bucket& b, const float* q, int checks, Shortlist& best) const {
    struct Pending {
        double bound;
        const Tree* tree;
        int32_t node;
        bool operator>(const Pending& o) const { return bound > o.bound; }
    };
    std::priority_queue<Pending, std::vector<Pending>, std::greater<Pending>> pending;
    std::vector<uint8_t> visited(b.ids.size(), 0);

    int leaf_visits = 0;
    const auto score_leaf = [&](const Tree& tree, const Node& node) {
        for (int32_t i = 0; i < node.count; ++i) {
            const int32_t local = tree.order[static_cast<size_t>(node.first + i)];
            if (visited[static_cast<size_t>(local)]) continue;
            visited[static_cast<size_t>(local)] = 1;
            best.offer(point_distance(b, local, q), b.ids[static_cast<size_t>(local)]);
        }
        ++leaf_visits;
    };

    // Descend to the query leaf, queueing the far side of every split.
    const auto descend = [&](const Tree& tree, int32_t node_idx, double bound) {
        while (true) {
            const Node& node = tree.nodes[static_cast<size_t>(node_idx)];
            if (node.count > 0 || (node.left < 0 && node.right < 0)) {
                score_leaf(tree, node);
                return;
            }
            const double delta = static_cast<double>(q[node.split_dim]) -
                                 static_cast<double>(node.split_value);
            const int32_t near = delta < 0.0 ? node.left : node.right;
            const int32_t far = delta < 0.0 ? node.right : node.left;
            pending.push({bound + delta * delta, &tree, far});
            node_idx = near;
        }
    };

    for (const Tree& tree : b.trees) {
        if (tree.nodes.empty()) continue;
        if (leaf_visits >= checks) break;
        descend(tree, 0, 0.0);
    }
    while (!pending.empty() && leaf_visits < checks) {
        const Pending p = pending.top();
        pending.pop();
        if (p.bound >= best.worst()) continue;
        descend(*p.tree, p.node, p.bound);
    }
}

QueryResult AnnIndex::query(const Descriptor& desc, double scale, int checks) const {
    if (desc.dim() != dim_) throw std::invalid_argument("query: descriptor dimension mismatch");
    const Bucket& b = buckets_data_[static_cast<size_t>(buckets_.bucket_of(scale))];
    if (b.ids.empty()) return {};
    Shortlist best(1);
    search_bucket(b, desc.values.data(), checks, best);
    return best.items.empty() ? QueryResult{} : best.items.front();
}

std::vector<QueryResult> AnnIndex::query_knn(const Descriptor& desc, double scale, int checks,
                                             int m) const {
    if (desc.dim() != dim_) throw std::invalid_argument("query_knn: descriptor dimension mismatch");
    if (m < 1) throw std::invalid_argument("query_knn: m must be >= 1");
    const Bucket& b = buckets_data_[static_cast<size_t>(buckets_.bucket_of(scale))];
    if (b.ids.empty()) return {};
    Shortlist best(static_cast<size_t>(m));
    search_bucket(b, desc.values.data(), checks, best);
    return best.items;
}

QueryResult AnnIndex::query_exact(const Descriptor& desc, double scale) const {
    if (desc.dim() != dim_) throw std::invalid_argument("query_exact: descriptor dimension mismatch");
    const Bucket& b = buckets_data_[static_cast<size_t>(buckets_.bucket_of(scale))];
    QueryResult best;
    for (size_t i = 0; i < b.ids.size(); ++i) {
        const double d = point_distance(b, static_cast<int32_t>(i), desc.values.data());
        const int64_t id = b.ids[i];
        if (d < best.distance || (d == best.distance && id < best.feature)) {
            best.distance = d;
            best.feature = id;
        }
    }
    return best;
}

size_t AnnIndex::total_size() const {
    size_t n = 0;
    for (const auto& b : buckets_data_) n += b.ids.size();
    return n;
}

}  // namespace texloc::index
