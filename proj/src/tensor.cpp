// SPDX-License-Identifier: Apache-2.0
#include "mhtc/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mhtc {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajorMatrix>;
using MutMap = Eigen::Map<RowMajorMatrix>;

std::vector<std::size_t> compute_strides(const std::vector<std::size_t>& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) {
        strides[i - 1] = strides[i] * shape[i];
    }
    return strides;
}

std::size_t checked_element_count(const std::vector<std::size_t>& shape) {
    if (shape.empty()) {
        throw std::invalid_argument("tensor shape must have at least one mode");
    }
    std::size_t total = 1;
    for (std::size_t e : shape) {
        if (e == 0) {
            throw std::invalid_argument("tensor extents must be positive");
        }
        total *= e;
    }
    return total;
}

// Compensated (Neumaier) accumulation keeps norms and residuals accurate
// enough for the 1e-12-level identities the solvers are tested against.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }

    double value() const { return sum + carry; }
};

}  // namespace

DenseTensor::DenseTensor() : DenseTensor({1}, {0.0}) {}

DenseTensor::DenseTensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), strides_(compute_strides(shape_)), data_(std::move(data)) {}

DenseTensor DenseTensor::zeros(std::vector<std::size_t> shape) {
    const std::size_t total = checked_element_count(shape);
    return DenseTensor(std::move(shape), std::vector<double>(total, 0.0));
}

DenseTensor DenseTensor::from_data(std::vector<std::size_t> shape, std::vector<double> data) {
    const std::size_t total = checked_element_count(shape);
    if (data.size() != total) {
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape volume " + std::to_string(total));
    }
    return DenseTensor(std::move(shape), std::move(data));
}

std::size_t DenseTensor::extent(std::size_t mode) const {
    if (mode >= shape_.size()) {
        throw std::out_of_range("mode " + std::to_string(mode) + " out of range for order " +
                                std::to_string(shape_.size()));
    }
    return shape_[mode];
}

std::size_t DenseTensor::offset_of(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw std::out_of_range("index order does not match tensor order");
    }
    std::size_t off = 0;
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] >= shape_[k]) {
            throw std::out_of_range("index " + std::to_string(index[k]) + " out of range for mode " +
                                    std::to_string(k));
        }
        off += index[k] * strides_[k];
    }
    return off;
}

double DenseTensor::at(std::span<const std::size_t> index) const { return data_[offset_of(index)]; }
double& DenseTensor::at(std::span<const std::size_t> index) { return data_[offset_of(index)]; }

double DenseTensor::at(std::initializer_list<std::size_t> index) const {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
}
double& DenseTensor::at(std::initializer_list<std::size_t> index) {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
}

double DenseTensor::operator()(std::size_t row, std::size_t col) const {
    return at({row, col});
}
double& DenseTensor::operator()(std::size_t row, std::size_t col) {
    return at({row, col});
}

namespace {

// Extents before / at / after one mode; every row-major walk below is a
// (left, mode, right) triple loop.
struct ModeSplit {
    std::size_t left = 1;
    std::size_t n = 1;
    std::size_t right = 1;
};

ModeSplit split_at(const std::vector<std::size_t>& shape, std::size_t mode) {
    ModeSplit s;
    for (std::size_t k = 0; k < mode; ++k) s.left *= shape[k];
    s.n = shape[mode];
    for (std::size_t k = mode + 1; k < shape.size(); ++k) s.right *= shape[k];
    return s;
}

}  // namespace

DenseTensor mode_n_product(const DenseTensor& t, const DenseTensor& b, std::size_t mode) {
    if (mode >= t.order()) {
        throw std::invalid_argument("mode " + std::to_string(mode) + " out of range for order " +
                                    std::to_string(t.order()));
    }
    if (b.order() != 2) {
        throw std::invalid_argument("mode product expects an order-2 operand");
    }
    const std::size_t rows = b.extent(0);
    if (b.extent(1) != t.extent(mode)) {
        throw std::invalid_argument("operand has " + std::to_string(b.extent(1)) +
                                    " columns but mode " + std::to_string(mode) + " has extent " +
                                    std::to_string(t.extent(mode)));
    }

    const ModeSplit s = split_at(t.shape(), mode);
    std::vector<std::size_t> out_shape = t.shape();
    out_shape[mode] = rows;
    DenseTensor out = DenseTensor::zeros(std::move(out_shape));

    ConstMap bm(b.data().data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(s.n));
    for (std::size_t l = 0; l < s.left; ++l) {
        ConstMap in(t.data().data() + l * s.n * s.right, static_cast<Eigen::Index>(s.n),
                    static_cast<Eigen::Index>(s.right));
        MutMap dst(out.data().data() + l * rows * s.right, static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(s.right));
        dst.noalias() = bm * in;
    }
    return out;
}

ModeUnfolding unfold(const DenseTensor& t, std::size_t mode) {
    if (mode >= t.order()) {
        throw std::invalid_argument("mode " + std::to_string(mode) + " out of range for order " +
                                    std::to_string(t.order()));
    }
    const ModeSplit s = split_at(t.shape(), mode);
    DenseTensor m = DenseTensor::zeros({s.n, s.left * s.right});
    const double* src = t.data().data();
    double* dst = m.data().data();
    for (std::size_t l = 0; l < s.left; ++l) {
        for (std::size_t i = 0; i < s.n; ++i) {
            std::memcpy(dst + i * (s.left * s.right) + l * s.right,
                        src + (l * s.n + i) * s.right, s.right * sizeof(double));
        }
    }
    return ModeUnfolding{std::move(m), t.shape(), mode};
}

DenseTensor fold(const DenseTensor& m, std::size_t mode, std::vector<std::size_t> target_shape) {
    if (m.order() != 2) {
        throw std::invalid_argument("fold expects an order-2 input");
    }
    if (mode >= target_shape.size()) {
        throw std::invalid_argument("mode " + std::to_string(mode) +
                                    " out of range for target order " +
                                    std::to_string(target_shape.size()));
    }
    checked_element_count(target_shape);
    const ModeSplit s = split_at(target_shape, mode);
    if (m.extent(0) != s.n || m.extent(1) != s.left * s.right) {
        throw std::invalid_argument(
            "matrix shape (" + std::to_string(m.extent(0)) + ", " + std::to_string(m.extent(1)) +
            ") is inconsistent with the target shape at mode " + std::to_string(mode) +
            " (expected (" + std::to_string(s.n) + ", " + std::to_string(s.left * s.right) + "))");
    }
    DenseTensor out = DenseTensor::zeros(std::move(target_shape));
    const double* src = m.data().data();
    double* dst = out.data().data();
    for (std::size_t l = 0; l < s.left; ++l) {
        for (std::size_t i = 0; i < s.n; ++i) {
            std::memcpy(dst + (l * s.n + i) * s.right,
                        src + i * (s.left * s.right) + l * s.right, s.right * sizeof(double));
        }
    }
    return out;
}

double frobenius_norm(const DenseTensor& t) {
    CompensatedSum acc;
    for (double x : t.data()) acc.add(x * x);
    return std::sqrt(acc.value());
}

double frobenius_distance(const DenseTensor& a, const DenseTensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("frobenius_distance requires identical shapes");
    }
    CompensatedSum acc;
    const auto da = a.data();
    const auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = da[i] - db[i];
        acc.add(d * d);
    }
    return std::sqrt(acc.value());
}

DenseTensor stack(std::span<const DenseTensor> tensors) {
    if (tensors.empty()) {
        throw std::invalid_argument("stack requires at least one tensor");
    }
    const std::size_t k = tensors.size();
    for (const DenseTensor& t : tensors) {
        if (!t.same_shape(tensors[0])) {
            throw std::invalid_argument("stack requires identical shapes");
        }
    }
    std::vector<std::size_t> out_shape = tensors[0].shape();
    out_shape.push_back(k);
    DenseTensor out = DenseTensor::zeros(std::move(out_shape));
    double* dst = out.data().data();
    const std::size_t inner = tensors[0].size();
    for (std::size_t j = 0; j < k; ++j) {
        const double* src = tensors[j].data().data();
        for (std::size_t i = 0; i < inner; ++i) {
            dst[i * k + j] = src[i];
        }
    }
    return out;
}

DenseTensor slice_last(const DenseTensor& t, std::size_t index) {
    if (t.order() < 2) {
        throw std::invalid_argument("slice_last requires order >= 2");
    }
    const std::size_t k = t.shape().back();
    if (index >= k) {
        throw std::out_of_range("slice index " + std::to_string(index) +
                                " out of range for trailing extent " + std::to_string(k));
    }
    std::vector<std::size_t> out_shape(t.shape().begin(), t.shape().end() - 1);
    DenseTensor out = DenseTensor::zeros(std::move(out_shape));
    const double* src = t.data().data();
    double* dst = out.data().data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        dst[i] = src[i * k + index];
    }
    return out;
}

bool bit_identical(const DenseTensor& a, const DenseTensor& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
    if (a.order() != 2 || b.order() != 2) {
        throw std::invalid_argument("matmul expects order-2 tensors");
    }
    if (a.extent(1) != b.extent(0)) {
        throw std::invalid_argument("matmul inner dimensions differ: " +
                                    std::to_string(a.extent(1)) + " vs " +
                                    std::to_string(b.extent(0)));
    }
    DenseTensor out = DenseTensor::zeros({a.extent(0), b.extent(1)});
    ConstMap am(a.data().data(), static_cast<Eigen::Index>(a.extent(0)),
                static_cast<Eigen::Index>(a.extent(1)));
    ConstMap bm(b.data().data(), static_cast<Eigen::Index>(b.extent(0)),
                static_cast<Eigen::Index>(b.extent(1)));
    MutMap om(out.data().data(), static_cast<Eigen::Index>(out.extent(0)),
              static_cast<Eigen::Index>(out.extent(1)));
    om.noalias() = am * bm;
    return out;
}

DenseTensor transpose(const DenseTensor& a) {
    if (a.order() != 2) {
        throw std::invalid_argument("transpose expects an order-2 tensor");
    }
    const std::size_t r = a.extent(0);
    const std::size_t c = a.extent(1);
    DenseTensor out = DenseTensor::zeros({c, r});
    const double* src = a.data().data();
    double* dst = out.data().data();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            dst[j * r + i] = src[i * c + j];
        }
    }
    return out;
}

DenseTensor identity(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("identity requires n >= 1");
    }
    DenseTensor out = DenseTensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) out.data()[i * n + i] = 1.0;
    return out;
}

}  // namespace mhtc
