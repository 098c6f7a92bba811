// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "mhtc/tensor.hpp"

namespace mhtc {

/// Economy SVD of an m x n matrix: A = U diag(sigma) V^T with r = min(m, n).
/// Columns of U and V are orthonormal; singular values are non-increasing.
/// Sign convention: the largest-magnitude entry of each U column is positive
/// (ties broken by lowest row index), making the factorization deterministic.
struct SvdResult {
    DenseTensor u;                        // m x r
    std::vector<double> singular_values;  // length r
    DenseTensor v;                        // n x r
};

SvdResult svd(const DenseTensor& a);

/// Best rank-`rank` approximation in Frobenius norm: the sum of the leading
/// `rank` terms sigma_i * u_i * v_i^T.
DenseTensor rank_reduce(const DenseTensor& a, std::size_t rank);

/// Leading `count` left singular vectors of `a`, as an (m x count) matrix
/// with orthonormal columns. When `count` exceeds the economy rank the basis
/// is completed deterministically from canonical unit vectors.
DenseTensor left_singular_basis(const DenseTensor& a, std::size_t count);

}  // namespace mhtc
