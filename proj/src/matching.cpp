#include "texloc/matching.hpp"

#include <limits>

namespace texloc::matching {

std::vector<std::pair<int, int>> match_ratio(const FeatureSet& a, const FeatureSet& b,
                                             double ratio) {
    std::vector<std::pair<int, int>> matches;
    if (a.empty() || b.empty()) return matches;
    const double ratio2 = ratio * ratio;
    const int na = static_cast<int>(a.size());
    const int nb = static_cast<int>(b.size());
    for (int j = 0; j < nb; ++j) {
        const Descriptor& q = b.descriptors[static_cast<size_t>(j)];
        double best = std::numeric_limits<double>::infinity();
        double second = best;
        int best_i = -1;
        for (int i = 0; i < na; ++i) {
            const double d = squared_distance(q, a.descriptors[static_cast<size_t>(i)]);
            if (d < best) {
                second = best;
                best = d;
                best_i = i;
            } else if (d < second) {
                second = d;
            }
        }
        if (best_i >= 0 && (na < 2 || best < ratio2 * second)) {
            matches.emplace_back(best_i, j);
        }
    }
    return matches;
}

}  // namespace texloc::matching
