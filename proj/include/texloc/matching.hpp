#pragma once

#include <utility>
#include <vector>

#include "texloc/types.hpp"

namespace texloc::matching {

// Brute-force nearest neighbor with Lowe ratio test (on squared
// distances). Returns (index into a, index into b) pairs, one per feature
// of b that passes the test.
std::vector<std::pair<int, int>> match_ratio(const FeatureSet& a, const FeatureSet& b,
                                             double ratio = 0.85);

}  // namespace texloc::matching
