#include "texloc/pca.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace texloc::pca {

DescriptorBasis fit_basis(const std::vector<Descriptor>& descriptors, int k) {
    if (k < 1 || k > kRawDim) throw std::invalid_argument("fit_basis: k must be in [1, 128]");
    if (descriptors.size() < static_cast<size_t>(k)) {
        throw std::invalid_argument("fit_basis: need at least k descriptors");
    }
    for (const Descriptor& d : descriptors) {
        if (d.dim() != kRawDim) throw std::invalid_argument("fit_basis: descriptors must be 128-d");
    }

    const size_t n = descriptors.size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(kRawDim);
    for (const Descriptor& d : descriptors) {
        for (int i = 0; i < kRawDim; ++i) mean[i] += d.values[static_cast<size_t>(i)];
    }
    mean /= static_cast<double>(n);

    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(kRawDim, kRawDim);
    Eigen::VectorXd centered(kRawDim);
    for (const Descriptor& d : descriptors) {
        for (int i = 0; i < kRawDim; ++i) centered[i] = d.values[static_cast<size_t>(i)] - mean[i];
        scatter.noalias() += centered * centered.transpose();
    }
    scatter /= static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(scatter);
    if (solver.info() != Eigen::Success) throw std::runtime_error("fit_basis: eigensolver failed");

    // Eigen returns ascending eigenvalues; take the top k in descending order.
    DescriptorBasis basis;
    basis.k = k;
    basis.mean.assign(mean.data(), mean.data() + kRawDim);
    basis.components.resize(static_cast<size_t>(k) * kRawDim);
    basis.eigenvalues.resize(static_cast<size_t>(k));
    for (int row = 0; row < k; ++row) {
        const int src = kRawDim - 1 - row;
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        int max_idx = 0;
        for (int i = 1; i < kRawDim; ++i) {
            if (std::fabs(v[i]) > std::fabs(v[max_idx])) max_idx = i;
        }
        if (v[max_idx] < 0.0) v = -v;
        for (int i = 0; i < kRawDim; ++i) {
            basis.components[static_cast<size_t>(row) * kRawDim + static_cast<size_t>(i)] = v[i];
        }
        basis.eigenvalues[static_cast<size_t>(row)] = solver.eigenvalues()[src];
    }
    return basis;
}

Descriptor project(const DescriptorBasis& basis, const Descriptor& d) {
    if (d.dim() != kRawDim) throw std::invalid_argument("project: descriptor must be 128-d");
    if (!basis.valid()) throw std::invalid_argument("project: invalid basis");
    std::vector<float> out(static_cast<size_t>(basis.k));
    for (int row = 0; row < basis.k; ++row) {
        const double* c = basis.component(row);
        double acc = 0.0;
        for (int i = 0; i < kRawDim; ++i) {
            acc += c[i] * (static_cast<double>(d.values[static_cast<size_t>(i)]) -
                           basis.mean[static_cast<size_t>(i)]);
        }
        out[static_cast<size_t>(row)] = static_cast<float>(acc);
    }
    return Descriptor(std::move(out));
}

std::vector<Descriptor> project_all(const DescriptorBasis& basis,
                                    const std::vector<Descriptor>& descriptors) {
    std::vector<Descriptor> out;
    out.reserve(descriptors.size());
    for (const Descriptor& d : descriptors) out.push_back(project(basis, d));
    return out;
}

std::vector<double> reconstruct(const DescriptorBasis& basis, const Descriptor& d) {
    if (d.dim() != kRawDim) throw std::invalid_argument("reconstruct: descriptor must be 128-d");
    std::vector<double> coeff(static_cast<size_t>(basis.k));
    for (int row = 0; row < basis.k; ++row) {
        const double* c = basis.component(row);
        double acc = 0.0;
        for (int i = 0; i < kRawDim; ++i) {
            acc += c[i] * (static_cast<double>(d.values[static_cast<size_t>(i)]) -
                           basis.mean[static_cast<size_t>(i)]);
        }
        coeff[static_cast<size_t>(row)] = acc;
    }
    std::vector<double> out(kRawDim);
    for (int i = 0; i < kRawDim; ++i) {
        double acc = basis.mean[static_cast<size_t>(i)];
        for (int row = 0; row < basis.k; ++row) {
            acc += basis.component(row)[i] * coeff[static_cast<size_t>(row)];
        }
        out[static_cast<size_t>(i)] = acc;
    }
    return out;
}

Descriptor unproject(const DescriptorBasis& basis, const Descriptor& projected) {
    if (projected.dim() != basis.k) throw std::invalid_argument("unproject: dimension mismatch");
    std::vector<float> out(kRawDim);
    for (int i = 0; i < kRawDim; ++i) {
        double acc = basis.mean[static_cast<size_t>(i)];
        for (int row = 0; row < basis.k; ++row) {
            acc += basis.component(row)[i] * static_cast<double>(projected.values[static_cast<size_t>(row)]);
        }
        out[static_cast<size_t>(i)] = static_cast<float>(acc);
    }
    return Descriptor(std::move(out));
}

}  // namespace texloc::pca
