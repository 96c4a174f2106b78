#pragma once

#include <vector>

#include "texloc/types.hpp"

namespace texloc::pca {

inline constexpr int kRawDim = 128;

// Orthonormal projection basis onto the top-k principal components of a
// descriptor sample. Rows of `components` are the components, ordered by
// descending eigenvalue; the sign of each row is fixed by making its
// largest-magnitude entry positive.
struct DescriptorBasis {
    int k = 0;
    std::vector<double> mean;         // kRawDim
    std::vector<double> components;   // k rows x kRawDim, row-major
    std::vector<double> eigenvalues;  // k, non-increasing

    bool valid() const { return k > 0 && mean.size() == kRawDim; }
    const double* component(int row) const { return &components[static_cast<size_t>(row) * kRawDim]; }
};

// Sample covariance eigendecomposition on the 128x128 scatter matrix.
// Throws on k out of [1, 128] or fewer than k descriptors.
DescriptorBasis fit_basis(const std::vector<Descriptor>& descriptors, int k);

// result = components * (d - mean); d must be 128-d.
Descriptor project(const DescriptorBasis& basis, const Descriptor& d);

std::vector<Descriptor> project_all(const DescriptorBasis& basis,
                                    const std::vector<Descriptor>& descriptors);

// Inverse map back to 128-d space (analysis helper).
Descriptor unproject(const DescriptorBasis& basis, const Descriptor& projected);

// Project-then-unproject entirely in double precision; quantifies the
// subspace approximation without float storage rounding.
std::vector<double> reconstruct(const DescriptorBasis& basis, const Descriptor& d);

}  // namespace texloc::pca
