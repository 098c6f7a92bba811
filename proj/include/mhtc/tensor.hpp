// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace mhtc {

/// Dense N-dimensional array of doubles, row-major (last index fastest).
/// Order is at least 1 and every extent is at least 1. Instances are
/// treated as immutable once shared; all free functions below are pure.
class DenseTensor {
public:
    /// Scalar-shaped tensor: shape {1}, value 0.
    DenseTensor();

    static DenseTensor zeros(std::vector<std::size_t> shape);
    static DenseTensor from_data(std::vector<std::size_t> shape, std::vector<double> data);

    std::size_t order() const { return shape_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t extent(std::size_t mode) const;
    std::size_t size() const { return data_.size(); }

    double at(std::span<const std::size_t> index) const;
    double& at(std::span<const std::size_t> index);
    double at(std::initializer_list<std::size_t> index) const;
    double& at(std::initializer_list<std::size_t> index);

    /// Order-2 element access.
    double operator()(std::size_t row, std::size_t col) const;
    double& operator()(std::size_t row, std::size_t col);

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    bool same_shape(const DenseTensor& other) const { return shape_ == other.shape_; }

private:
    DenseTensor(std::vector<std::size_t> shape, std::vector<double> data);

    std::size_t offset_of(std::span<const std::size_t> index) const;

    std::vector<std::size_t> shape_;
    std::vector<std::size_t> strides_;
    std::vector<double> data_;
};

/// Matricization of a tensor along one mode: rows index the chosen mode,
/// columns run over the remaining modes in ascending mode order, row-major.
struct ModeUnfolding {
    DenseTensor matrix;  // (I_n, product of remaining extents)
    std::vector<std::size_t> source_shape;
    std::size_t mode = 0;
};

/// Contracts mode `mode` of `t` (extent I_n) with the columns of the
/// order-2 tensor `b` (J_n x I_n); the result has extent J_n on that mode.
DenseTensor mode_n_product(const DenseTensor& t, const DenseTensor& b, std::size_t mode);

ModeUnfolding unfold(const DenseTensor& t, std::size_t mode);

/// Inverse of unfold. `m` must be (target_shape[mode], product of the rest).
DenseTensor fold(const DenseTensor& m, std::size_t mode, std::vector<std::size_t> target_shape);

double frobenius_norm(const DenseTensor& t);

/// Frobenius norm of (a - b); shapes must agree.
double frobenius_distance(const DenseTensor& a, const DenseTensor& b);

/// Stacks K same-shaped tensors along a new trailing mode of extent K.
DenseTensor stack(std::span<const DenseTensor> tensors);

/// Extracts the slice at `index` along the trailing mode (inverse of stack).
DenseTensor slice_last(const DenseTensor& t, std::size_t index);

bool bit_identical(const DenseTensor& a, const DenseTensor& b);

// Order-2 helpers.
DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);
DenseTensor transpose(const DenseTensor& a);
DenseTensor identity(std::size_t n);

}  // namespace mhtc
