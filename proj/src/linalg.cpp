// SPDX-License-Identifier: Apache-2.0
#include "mhtc/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mhtc {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd to_eigen(const DenseTensor& a) {
    MatrixXd m(a.extent(0), a.extent(1));
    const double* src = a.data().data();
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            m(i, j) = src[static_cast<std::size_t>(i) * a.extent(1) + static_cast<std::size_t>(j)];
        }
    }
    return m;
}

DenseTensor from_eigen(const MatrixXd& m) {
    DenseTensor out = DenseTensor::zeros(
        {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    double* dst = out.data().data();
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            dst[static_cast<std::size_t>(i) * static_cast<std::size_t>(m.cols()) +
                static_cast<std::size_t>(j)] = m(i, j);
        }
    }
    return out;
}

void require_matrix(const DenseTensor& a, const char* op) {
    if (a.order() != 2) {
        throw std::invalid_argument(std::string(op) + " expects an order-2 tensor");
    }
    for (double x : a.data()) {
        if (!std::isfinite(x)) {
            throw std::invalid_argument(std::string(op) + ": input has non-finite entries");
        }
    }
}

// Largest-magnitude entry of each U column made positive; ties go to the
// lowest row index. V flips with U so the product is unchanged.
void apply_sign_convention(MatrixXd& u, MatrixXd& v) {
    for (Index j = 0; j < u.cols(); ++j) {
        Index pivot = 0;
        double best = std::abs(u(0, j));
        for (Index i = 1; i < u.rows(); ++i) {
            const double mag = std::abs(u(i, j));
            if (mag > best) {
                best = mag;
                pivot = i;
            }
        }
        if (u(pivot, j) < 0.0) {
            u.col(j) = -u.col(j);
            if (j < v.cols()) v.col(j) = -v.col(j);
        }
    }
}

// Greedily appends canonical unit vectors (largest residual first, ties to
// the lowest index) until `m` has `target_cols` orthonormal columns.
// Columns [0, have) must already be orthonormal.
void complete_basis(MatrixXd& m, Index have, Index target_cols) {
    const Index n = m.rows();
    for (Index c = have; c < target_cols; ++c) {
        double best_norm = -1.0;
        VectorXd best_res;
        for (Index k = 0; k < n; ++k) {
            VectorXd r = VectorXd::Zero(n);
            r(k) = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (Index j = 0; j < c; ++j) {
                    r -= (m.col(j).dot(r)) * m.col(j);
                }
            }
            const double nr = r.norm();
            if (nr > best_norm + 1e-12) {
                best_norm = nr;
                best_res = r;
            }
        }
        if (best_norm <= 0.0) {
            throw std::runtime_error("orthonormal completion failed");
        }
        m.col(c) = best_res / best_norm;
    }
}

struct EigenSvd {
    MatrixXd u;
    VectorXd sigma;
    MatrixXd v;
};

// Economy SVD of a wide matrix (rows <= cols) through the small Gram matrix
// rows x rows; right vectors are recovered as A^T u / |A^T u| and kept
// orthonormal with two Gram-Schmidt passes. Rank-deficient directions fall
// back to canonical completion.
EigenSvd svd_wide_via_gram(const MatrixXd& a) {
    const Index m = a.rows();
    const Index n = a.cols();
    MatrixXd gram = a * a.transpose();
    gram = 0.5 * (gram + gram.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
    if (es.info() != Eigen::Success) {
        throw std::runtime_error("symmetric eigendecomposition did not converge");
    }

    // Ascending eigenvalues; visit in descending order.
    std::vector<Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});
    std::reverse(order.begin(), order.end());

    MatrixXd u(m, m);
    MatrixXd w(n, m);
    VectorXd sigma(m);
    for (Index c = 0; c < m; ++c) {
        const Index src = order[static_cast<std::size_t>(c)];
        u.col(c) = es.eigenvectors().col(src);
        w.col(c) = a.transpose() * u.col(c);
        sigma(c) = w.col(c).norm();
    }

    // The w-norms track sqrt(eigenvalue) but may disagree in the rounding
    // noise; enforce the non-increasing contract explicitly.
    std::vector<Index> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::stable_sort(perm.begin(), perm.end(),
                     [&](Index x, Index y) { return sigma(x) > sigma(y); });
    MatrixXd u_sorted(m, m);
    MatrixXd w_sorted(n, m);
    VectorXd sigma_sorted(m);
    for (Index c = 0; c < m; ++c) {
        u_sorted.col(c) = u.col(perm[static_cast<std::size_t>(c)]);
        w_sorted.col(c) = w.col(perm[static_cast<std::size_t>(c)]);
        sigma_sorted(c) = sigma(perm[static_cast<std::size_t>(c)]);
    }

    const double scale = sigma_sorted.size() > 0 ? sigma_sorted(0) : 0.0;
    const double negligible = scale * 1e-10;
    MatrixXd v(n, m);
    Index built = 0;
    for (Index c = 0; c < m; ++c) {
        VectorXd r = w_sorted.col(c);
        for (int pass = 0; pass < 2; ++pass) {
            for (Index j = 0; j < built; ++j) {
                r -= (v.col(j).dot(r)) * v.col(j);
            }
        }
        const double nr = r.norm();
        if (nr > negligible && nr > 0.0) {
            v.col(built) = r / nr;
        } else {
            complete_basis(v, built, built + 1);
        }
        ++built;
    }
    return EigenSvd{std::move(u_sorted), std::move(sigma_sorted), std::move(v)};
}

EigenSvd svd_direct(const MatrixXd& a) {
    const Index r = std::min(a.rows(), a.cols());
    if (r <= 16) {
        Eigen::JacobiSVD<MatrixXd> s(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
        return EigenSvd{s.matrixU(), s.singularValues(), s.matrixV()};
    }
    Eigen::BDCSVD<MatrixXd> s(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return EigenSvd{s.matrixU(), s.singularValues(), s.matrixV()};
}

EigenSvd svd_eigen(const MatrixXd& a) {
    const Index m = a.rows();
    const Index n = a.cols();
    const double aspect = static_cast<double>(std::max(m, n)) / static_cast<double>(std::min(m, n));
    EigenSvd result;
    if (aspect > 4.0) {
        if (m <= n) {
            result = svd_wide_via_gram(a);
        } else {
            EigenSvd t = svd_wide_via_gram(a.transpose());
            result = EigenSvd{std::move(t.v), std::move(t.sigma), std::move(t.u)};
        }
    } else {
        result = svd_direct(a);
    }
    apply_sign_convention(result.u, result.v);
    return result;
}

}  // namespace

SvdResult svd(const DenseTensor& a) {
    require_matrix(a, "svd");
    EigenSvd s = svd_eigen(to_eigen(a));
    SvdResult out;
    out.u = from_eigen(s.u);
    out.v = from_eigen(s.v);
    out.singular_values.assign(s.sigma.data(), s.sigma.data() + s.sigma.size());
    return out;
}

DenseTensor rank_reduce(const DenseTensor& a, std::size_t rank) {
    require_matrix(a, "rank_reduce");
    const std::size_t r = std::min(a.extent(0), a.extent(1));
    if (rank < 1 || rank > r) {
        throw std::invalid_argument("rank " + std::to_string(rank) + " out of range [1, " +
                                    std::to_string(r) + "]");
    }
    EigenSvd s = svd_eigen(to_eigen(a));
    const Index k = static_cast<Index>(rank);
    MatrixXd approx = s.u.leftCols(k) * s.sigma.head(k).asDiagonal() * s.v.leftCols(k).transpose();
    return from_eigen(approx);
}

DenseTensor left_singular_basis(const DenseTensor& a, std::size_t count) {
    require_matrix(a, "left_singular_basis");
    const std::size_t m = a.extent(0);
    if (count < 1 || count > m) {
        throw std::invalid_argument("basis size " + std::to_string(count) + " out of range [1, " +
                                    std::to_string(m) + "]");
    }
    EigenSvd s = svd_eigen(to_eigen(a));
    const Index have = s.u.cols();
    const Index want = static_cast<Index>(count);
    if (want <= have) {
        return from_eigen(s.u.leftCols(want));
    }
    MatrixXd basis(static_cast<Index>(m), want);
    basis.leftCols(have) = s.u;
    complete_basis(basis, have, want);
    return from_eigen(basis);
}

}  // namespace mhtc
