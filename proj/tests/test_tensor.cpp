// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mhtc/random.hpp"
#include "mhtc/tensor.hpp"
#include "test_support.hpp"

using namespace mhtc;
using test::naive_distance;
using test::naive_frobenius;
using test::naive_matmul;
using test::naive_mode_product;
using test::random_orthonormal;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("construction enforces the shape/data contract") {
    CHECK_THROWS_AS(DenseTensor::from_data({2, 3}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(DenseTensor::from_data({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(DenseTensor::zeros({2, 0, 3}), std::invalid_argument);

    const DenseTensor t = DenseTensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.order() == 2);
    CHECK(t.size() == 6);
    CHECK(t(1, 0) == 4.0);
}

TEST_CASE("row-major element access round-trips with the flat layout") {
    DenseTensor t = DenseTensor::zeros({2, 3, 4});
    std::size_t flat = 0;
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            for (std::size_t k = 0; k < 4; ++k) {
                t.at({i, j, k}) = static_cast<double>(flat++);
            }
        }
    }
    for (std::size_t f = 0; f < t.size(); ++f) {
        CHECK(t.data()[f] == static_cast<double>(f));
    }
    CHECK_THROWS_AS(t.at({2, 0, 0}), std::out_of_range);
    CHECK_THROWS_AS(t.at({0, 0}), std::out_of_range);
}

TEST_CASE("mode product shape rule") {
    const DenseTensor t = gaussian_tensor({2, 3, 4}, 7);
    const DenseTensor b = gaussian_tensor({5, 3}, 8);
    const DenseTensor c = mode_n_product(t, b, 1);
    CHECK(c.shape() == std::vector<std::size_t>{2, 5, 4});
}

TEST_CASE("mode product with identity is the identity map") {
    const DenseTensor t = gaussian_tensor({3, 4, 2}, 11);
    for (std::size_t mode = 0; mode < 3; ++mode) {
        const DenseTensor out = mode_n_product(t, identity(t.extent(mode)), mode);
        REQUIRE(out.same_shape(t));
        for (std::size_t i = 0; i < t.size(); ++i) {
            CHECK(out.data()[i] == t.data()[i]);
        }
    }
}

TEST_CASE("mode product on an all-ones cube matches the hand sum") {
    const DenseTensor t = DenseTensor::from_data({2, 2, 2}, std::vector<double>(8, 1.0));
    const DenseTensor b = DenseTensor::from_data({2, 2}, {1, 2, 3, 4});
    const DenseTensor c = mode_n_product(t, b, 0);
    // Row sums of b: 3 and 7.
    for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t k = 0; k < 2; ++k) {
            CHECK(c.at({0, j, k}) == doctest::Approx(3.0).epsilon(1e-14));
            CHECK(c.at({1, j, k}) == doctest::Approx(7.0).epsilon(1e-14));
        }
    }
    const DenseTensor oracle = naive_mode_product(t, b, 0);
    CHECK(naive_distance(c, oracle) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("mode product agrees with the element-wise oracle on random input") {
    const DenseTensor t = gaussian_tensor({3, 5, 4}, 21);
    for (std::size_t mode = 0; mode < 3; ++mode) {
        const DenseTensor b = gaussian_tensor({6, t.extent(mode)}, 22 + mode);
        const DenseTensor fast = mode_n_product(t, b, mode);
        const DenseTensor slow = naive_mode_product(t, b, mode);
        CHECK(naive_distance(fast, slow) <= 1e-12 * naive_frobenius(slow));
    }
}

TEST_CASE("mode product rejects mismatched operands") {
    const DenseTensor t = gaussian_tensor({2, 3, 4}, 5);
    const DenseTensor bad = gaussian_tensor({5, 4}, 6);
    CHECK_THROWS_AS(mode_n_product(t, bad, 1), std::invalid_argument);
    CHECK_THROWS_AS(mode_n_product(t, bad, 3), std::invalid_argument);
}

TEST_CASE("mode products on distinct modes commute") {
    const DenseTensor t = gaussian_tensor({3, 4, 5}, 31);
    const DenseTensor a = gaussian_tensor({2, 3}, 32);
    const DenseTensor b = gaussian_tensor({6, 5}, 33);
    const DenseTensor left = mode_n_product(mode_n_product(t, a, 0), b, 2);
    const DenseTensor right = mode_n_product(mode_n_product(t, b, 2), a, 0);
    CHECK(naive_distance(left, right) <= 1e-12 * naive_frobenius(left));
}

TEST_CASE("repeated products on one mode compose through the matrix product") {
    const DenseTensor t = gaussian_tensor({3, 4, 5}, 41);
    const DenseTensor a = gaussian_tensor({6, 4}, 42);
    const DenseTensor b = gaussian_tensor({2, 6}, 43);
    const DenseTensor chained = mode_n_product(mode_n_product(t, a, 1), b, 1);
    const DenseTensor fused = mode_n_product(t, matmul(b, a), 1);
    CHECK(naive_distance(chained, fused) <= 1e-12 * naive_frobenius(chained));
}

TEST_CASE("orthogonal mode maps preserve the Frobenius norm") {
    const DenseTensor t = gaussian_tensor({6, 5, 4}, 51);
    for (std::size_t mode = 0; mode < 3; ++mode) {
        const DenseTensor q = random_orthonormal(t.extent(mode), t.extent(mode), 52 + mode);
        const DenseTensor rotated = mode_n_product(t, q, mode);
        CHECK(std::abs(frobenius_norm(rotated) - frobenius_norm(t)) <=
              1e-12 * frobenius_norm(t));
    }
}

TEST_CASE("unfold shape rule and order-2 passthrough") {
    const DenseTensor t = gaussian_tensor({2, 3, 4}, 61);
    const ModeUnfolding u = unfold(t, 1);
    CHECK(u.matrix.shape() == std::vector<std::size_t>{3, 8});
    CHECK(u.mode == 1);
    CHECK(u.source_shape == t.shape());

    const DenseTensor m = gaussian_tensor({4, 7}, 62);
    CHECK(bit_identical(unfold(m, 0).matrix, m));

    CHECK_THROWS_AS(unfold(t, 3), std::invalid_argument);
}

TEST_CASE("fold inverts unfold bit-exactly on every mode") {
    const DenseTensor t = gaussian_tensor({3, 4, 5}, 71);
    for (std::size_t mode = 0; mode < 3; ++mode) {
        const ModeUnfolding u = unfold(t, mode);
        const DenseTensor back = fold(u.matrix, mode, t.shape());
        CHECK(bit_identical(back, t));
    }
}

TEST_CASE("mode product factors through the unfolding") {
    const DenseTensor t = gaussian_tensor({3, 4, 5}, 81);
    const DenseTensor b = gaussian_tensor({6, 4}, 82);
    const DenseTensor direct = mode_n_product(t, b, 1);
    std::vector<std::size_t> adjusted = t.shape();
    adjusted[1] = 6;
    const DenseTensor via_unfold = fold(matmul(b, unfold(t, 1).matrix), 1, adjusted);
    CHECK(naive_distance(direct, via_unfold) <= 1e-13 * naive_frobenius(direct));
}

TEST_CASE("fold rejects inconsistent shapes") {
    CHECK_NOTHROW(fold(gaussian_tensor({3, 8}, 91), 1, {2, 3, 4}));
    CHECK_THROWS_AS(fold(gaussian_tensor({3, 7}, 92), 1, {2, 3, 4}), std::invalid_argument);
}

TEST_CASE("frobenius norm basics") {
    CHECK(frobenius_norm(DenseTensor::zeros({3, 3})) == 0.0);
    CHECK(frobenius_norm(identity(2)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    const DenseTensor t = DenseTensor::from_data({2, 2}, {1, 2, 3, 4});
    CHECK(frobenius_norm(t) == doctest::Approx(std::sqrt(30.0)).epsilon(1e-15));

    const DenseTensor r = gaussian_tensor({7, 3, 2}, 101);
    CHECK(frobenius_norm(r) == doctest::Approx(naive_frobenius(r)).epsilon(1e-13));
}

TEST_CASE("stack places inputs on a new trailing mode") {
    const DenseTensor a = DenseTensor::from_data({2, 2}, {1, 2, 3, 4});
    const DenseTensor b = DenseTensor::from_data({2, 2}, {5, 6, 7, 8});
    const std::vector<DenseTensor> inputs = {a, b};
    const DenseTensor s = stack(inputs);
    CHECK(s.shape() == std::vector<std::size_t>{2, 2, 2});
    CHECK(bit_identical(slice_last(s, 0), a));
    CHECK(bit_identical(slice_last(s, 1), b));
}

TEST_CASE("stacking sixteen per-head blocks yields the order-4 layout") {
    std::vector<DenseTensor> heads;
    for (std::size_t i = 0; i < 16; ++i) heads.push_back(gaussian_tensor({8, 2, 4}, 200 + i));
    const DenseTensor s = stack(heads);
    CHECK(s.shape() == std::vector<std::size_t>{8, 2, 4, 16});
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(bit_identical(slice_last(s, i), heads[i]));
    }
}

TEST_CASE("stack rejects mismatched or empty input") {
    const std::vector<DenseTensor> mismatched = {gaussian_tensor({2, 2}, 1),
                                                 gaussian_tensor({2, 3}, 2)};
    CHECK_THROWS_AS(stack(mismatched), std::invalid_argument);
    CHECK_THROWS_AS(stack(std::vector<DenseTensor>{}), std::invalid_argument);
}

TEST_CASE("transpose and matmul agree with naive loops") {
    const DenseTensor a = gaussian_tensor({4, 6}, 301);
    const DenseTensor b = gaussian_tensor({6, 3}, 302);
    const DenseTensor prod = matmul(a, b);
    CHECK(naive_distance(prod, naive_matmul(a, b)) <= 1e-13 * naive_frobenius(prod));

    const DenseTensor at = transpose(a);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(at(j, i) == a(i, j));
        }
    }
    CHECK_THROWS_AS(matmul(a, gaussian_tensor({5, 2}, 303)), std::invalid_argument);
}

TEST_SUITE_END();
