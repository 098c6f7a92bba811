// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "mhtc/mha.hpp"
#include "mhtc/random.hpp"
#include "mhtc/tensor.hpp"
#include "test_support.hpp"

using namespace mhtc;
using test::elementwise_shared_reconstruct;
using test::make_exact_shared;
using test::naive_distance;
using test::naive_frobenius;
using test::naive_matmul;

namespace {

MhaLayerWeights random_weights(std::size_t d_model, std::size_t h, std::uint64_t seed) {
    return MhaLayerWeights::create(gaussian_tensor({d_model, d_model}, seed),
                                   gaussian_tensor({d_model, d_model}, seed + 1),
                                   gaussian_tensor({d_model, d_model}, seed + 2),
                                   gaussian_tensor({d_model, d_model}, seed + 3), h);
}

}  // namespace

TEST_SUITE_BEGIN("mha");

TEST_CASE("layer weights validate their geometry") {
    const std::size_t d = 8;
    CHECK_NOTHROW(random_weights(d, 4, 1));
    // Head count must divide the projection width.
    CHECK_THROWS_AS(random_weights(d, 3, 2), std::invalid_argument);
    // h*d_v must equal d_model.
    CHECK_THROWS_AS(MhaLayerWeights::create(gaussian_tensor({4, 8}, 3), gaussian_tensor({4, 8}, 4),
                                            gaussian_tensor({4, 8}, 5), gaussian_tensor({8, 4}, 6),
                                            2),
                    std::invalid_argument);
    // Output projection has a fixed orientation.
    CHECK_THROWS_AS(MhaLayerWeights::create(gaussian_tensor({8, 8}, 7), gaussian_tensor({8, 8}, 8),
                                            gaussian_tensor({8, 8}, 9), gaussian_tensor({8, 4}, 10),
                                            2),
                    std::invalid_argument);
}

TEST_CASE("single-head tensorisation keeps Q as-is and transposes O") {
    const MhaLayerWeights w = random_weights(6, 1, 11);
    const DenseTensor t = tensorise(w);
    REQUIRE(t.shape() == std::vector<std::size_t>{6, 6, 4, 1});
    for (std::size_t a = 0; a < 6; ++a) {
        for (std::size_t b = 0; b < 6; ++b) {
            CHECK(t.at({a, b, 0, 0}) == w.wq(a, b));
            CHECK(t.at({a, b, 1, 0}) == w.wk(a, b));
            CHECK(t.at({a, b, 2, 0}) == w.wv(a, b));
            CHECK(t.at({a, b, 3, 0}) == w.wo(b, a));
        }
    }
}

TEST_CASE("head slices select the right column blocks") {
    const std::size_t d_model = 4, h = 2, d_v = 2;
    DenseTensor wq = DenseTensor::zeros({d_model, d_model});
    for (std::size_t r = 0; r < d_model; ++r) {
        for (std::size_t c = 0; c < d_model; ++c) wq(r, c) = static_cast<double>(c);
    }
    const MhaLayerWeights w = MhaLayerWeights::create(wq, DenseTensor::zeros({4, 4}),
                                                      DenseTensor::zeros({4, 4}),
                                                      DenseTensor::zeros({4, 4}), h);
    const DenseTensor t = tensorise(w);
    // Head 1 of Q holds columns 2..3 of the global matrix.
    for (std::size_t a = 0; a < d_model; ++a) {
        for (std::size_t b = 0; b < d_v; ++b) {
            CHECK(t.at({a, b, 0, 1}) == wq(a, d_v * 1 + b));
            CHECK(t.at({a, b, 0, 1}) == static_cast<double>(2 + b));
        }
    }
}

TEST_CASE("tensorise and detensorise are a bit-exact bijection") {
    for (auto [d_model, h] : std::vector<std::pair<std::size_t, std::size_t>>{
             {4, 1}, {4, 2}, {6, 3}, {8, 4}, {12, 2}, {16, 16}}) {
        const MhaLayerWeights w = random_weights(d_model, h, 100 + d_model + h);
        const DenseTensor t = tensorise(w);
        const MhaLayerWeights back = detensorise(t);
        CHECK(bit_identical(back.wq, w.wq));
        CHECK(bit_identical(back.wk, w.wk));
        CHECK(bit_identical(back.wv, w.wv));
        CHECK(bit_identical(back.wo, w.wo));
        CHECK(bit_identical(tensorise(back), t));
    }
}

TEST_CASE("detensorise handles degenerate contents") {
    const DenseTensor zeros = DenseTensor::zeros({8, 2, 4, 4});
    const MhaLayerWeights w = detensorise(zeros);
    CHECK(w.wq.shape() == std::vector<std::size_t>{8, 8});
    CHECK(w.wo.shape() == std::vector<std::size_t>{8, 8});
    CHECK(naive_frobenius(w.wq) == 0.0);
    CHECK(naive_frobenius(w.wo) == 0.0);

    // Only the output-projection slice populated.
    DenseTensor t = DenseTensor::zeros({4, 2, 4, 2});
    const DenseTensor block = gaussian_tensor({4, 2, 2}, 21);  // (a, b, head)
    for (std::size_t a = 0; a < 4; ++a) {
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t i = 0; i < 2; ++i) {
                t.at({a, b, 3, i}) = block.at({a, b, i});
            }
        }
    }
    const MhaLayerWeights only_o = detensorise(t);
    CHECK(naive_frobenius(only_o.wq) == 0.0);
    CHECK(naive_frobenius(only_o.wk) == 0.0);
    CHECK(naive_frobenius(only_o.wv) == 0.0);
    for (std::size_t a = 0; a < 4; ++a) {
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t i = 0; i < 2; ++i) {
                CHECK(only_o.wo(i * 2 + b, a) == block.at({a, b, i}));
            }
        }
    }
}

TEST_CASE("detensorise rejects tensors without the 4-way mode") {
    CHECK_THROWS_AS(detensorise(gaussian_tensor({4, 2, 3, 2}, 31)), std::invalid_argument);
    CHECK_THROWS_AS(detensorise(gaussian_tensor({4, 2, 4}, 32)), std::invalid_argument);
    // h*d_v != d_model.
    CHECK_THROWS_AS(detensorise(gaussian_tensor({4, 3, 4, 2}, 33)), std::invalid_argument);
}

TEST_CASE("full-rank compression is lossless and expands the parameter count") {
    const MhaLayerWeights w = random_weights(8, 2, 41);
    const auto [layer, report] = compress_layer(w, RankSpec{8, 4, 4});
    CHECK(report.relative_error <= 1e-10);
    CHECK(report.cr.value() < 1.0);
    CHECK(layer.fit >= 1.0 - 1e-10);
}

TEST_CASE("compression accounting matches the stored scalars") {
    const MhaLayerWeights w = random_weights(64, 4, 51);
    const auto [layer, report] = compress_layer(w, RankSpec{8, 4, 2});
    CHECK(report.n_original == 16384);
    CHECK(report.n_compressed == 840);
    // cr equals 16384/840 as an exact rational.
    CHECK(report.cr.num * 840 == report.cr.den * 16384);

    // Brute-force enumeration of scalars actually stored in the layer.
    const std::size_t stored = layer.shared.u1.size() + layer.shared.u2.size() +
                               layer.shared.u3.size() + layer.shared.cores.size();
    CHECK(stored == report.n_compressed);
    CHECK(layer.shared.parameter_count() == stored);
}

TEST_CASE("compression recovers synthetic exact-structure weights") {
    const auto inst = make_exact_shared(32, 8, 4, RankSpec{6, 3, 2}, 61);
    const MhaLayerWeights w = detensorise(inst.w_all);
    const auto [layer, report] = compress_layer(w, RankSpec{6, 3, 2});
    CHECK(report.relative_error <= 1e-9);
    CHECK(report.iterations <= 5);
}

TEST_CASE("reconstruct_layer inverts the pipeline at full ranks") {
    const MhaLayerWeights w = random_weights(8, 4, 71);
    const auto [layer, report] = compress_layer(w, RankSpec{8, 2, 4});
    const MhaLayerWeights back = reconstruct_layer(layer);
    CHECK(naive_distance(back.wq, w.wq) <= 1e-10 * naive_frobenius(w.wq));
    CHECK(naive_distance(back.wk, w.wk) <= 1e-10 * naive_frobenius(w.wk));
    CHECK(naive_distance(back.wv, w.wv) <= 1e-10 * naive_frobenius(w.wv));
    CHECK(naive_distance(back.wo, w.wo) <= 1e-10 * naive_frobenius(w.wo));
}

TEST_CASE("reconstruct_layer matches the element-wise oracle") {
    CompressedLayer layer;
    layer.shared.u1 = test::random_orthonormal(8, 3, 81);
    layer.shared.u2 = test::random_orthonormal(2, 2, 82);
    layer.shared.u3 = test::random_orthonormal(4, 2, 83);
    layer.shared.cores = gaussian_tensor({3, 2, 2, 4}, 84);
    layer.ranks = RankSpec{3, 2, 2};
    layer.original_dims = MhaDims{8, 4, 2};

    const MhaLayerWeights out = reconstruct_layer(layer);
    const MhaLayerWeights oracle = detensorise(elementwise_shared_reconstruct(layer.shared));
    CHECK(naive_distance(out.wq, oracle.wq) <= 1e-12 * std::max(1.0, naive_frobenius(oracle.wq)));
    CHECK(naive_distance(out.wo, oracle.wo) <= 1e-12 * std::max(1.0, naive_frobenius(oracle.wo)));

    CompressedLayer zeros = layer;
    zeros.shared.cores = DenseTensor::zeros({3, 2, 2, 4});
    const MhaLayerWeights z = reconstruct_layer(zeros);
    CHECK(naive_frobenius(z.wq) == 0.0);
    CHECK(naive_frobenius(z.wo) == 0.0);
}

TEST_CASE("single-position attention reduces to the value path") {
    const MhaLayerWeights w = random_weights(8, 2, 91);
    const DenseTensor q = gaussian_tensor({1, 8}, 92);
    const DenseTensor k = gaussian_tensor({1, 8}, 93);
    const DenseTensor v = gaussian_tensor({1, 8}, 94);
    const DenseTensor y = attention_forward(w, q, k, v);
    const DenseTensor expected = naive_matmul(naive_matmul(v, w.wv), w.wo);
    CHECK(naive_distance(y, expected) <= 1e-12 * naive_frobenius(expected));
}

TEST_CASE("zero query and key projections mean-pool the values") {
    const std::size_t d_model = 6, h = 3, len = 5;
    const MhaLayerWeights w = MhaLayerWeights::create(
        DenseTensor::zeros({d_model, d_model}), DenseTensor::zeros({d_model, d_model}),
        gaussian_tensor({d_model, d_model}, 101), gaussian_tensor({d_model, d_model}, 102), h);
    const DenseTensor q = gaussian_tensor({len, d_model}, 103);
    const DenseTensor k = gaussian_tensor({len, d_model}, 104);
    const DenseTensor v = gaussian_tensor({len, d_model}, 105);

    const DenseTensor y = attention_forward(w, q, k, v);

    DenseTensor mean = DenseTensor::zeros({1, d_model});
    for (std::size_t c = 0; c < d_model; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < len; ++r) acc += v(r, c);
        mean(0, c) = acc / static_cast<double>(len);
    }
    const DenseTensor pooled = naive_matmul(naive_matmul(mean, w.wv), w.wo);
    for (std::size_t r = 0; r < len; ++r) {
        for (std::size_t c = 0; c < d_model; ++c) {
            CHECK(y(r, c) == doctest::Approx(pooled(0, c)).epsilon(1e-11));
        }
    }
}

TEST_CASE("softmax rows sum to one") {
    const MhaLayerWeights w = random_weights(8, 4, 111);
    const AttentionDetail detail =
        attention_forward_detailed(w, gaussian_tensor({7, 8}, 112), gaussian_tensor({7, 8}, 113),
                                   gaussian_tensor({7, 8}, 114));
    REQUIRE(detail.head_probabilities.size() == 4);
    for (const DenseTensor& probs : detail.head_probabilities) {
        for (std::size_t r = 0; r < probs.extent(0); ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < probs.extent(1); ++c) sum += probs(r, c);
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("full-rank compress and reconstruct leaves attention outputs unchanged") {
    const MhaLayerWeights w = random_weights(16, 4, 121);
    const auto [layer, report] = compress_layer(w, RankSpec{16, 4, 4});
    const MhaLayerWeights rec = reconstruct_layer(layer);
    const DenseTensor q = gaussian_tensor({8, 16}, 122);
    const DenseTensor k = gaussian_tensor({8, 16}, 123);
    const DenseTensor v = gaussian_tensor({8, 16}, 124);
    const DenseTensor y0 = attention_forward(w, q, k, v);
    const DenseTensor y1 = attention_forward(rec, q, k, v);
    CHECK(naive_distance(y0, y1) <= 1e-6 * naive_frobenius(y0));
}

TEST_CASE("attention validates shapes and finiteness") {
    const MhaLayerWeights w = random_weights(8, 2, 131);
    CHECK_THROWS_AS(
        attention_forward(w, gaussian_tensor({4, 6}, 132), gaussian_tensor({4, 8}, 133),
                          gaussian_tensor({4, 8}, 134)),
        std::invalid_argument);
    CHECK_THROWS_AS(
        attention_forward(w, gaussian_tensor({4, 8}, 135), gaussian_tensor({3, 8}, 136),
                          gaussian_tensor({4, 8}, 137)),
        std::invalid_argument);
    DenseTensor bad = gaussian_tensor({4, 8}, 138);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(attention_forward(w, bad, bad, bad), std::invalid_argument);
}

TEST_CASE("reconstruction error shrinks as ranks grow") {
    const MhaLayerWeights w = random_weights(16, 4, 141);
    const auto [small_layer, small] = compress_layer(w, RankSpec{4, 2, 1});
    const auto [big_layer, big] = compress_layer(w, RankSpec{8, 3, 2});
    CHECK(big.relative_error <= small.relative_error + 1e-9);
}

TEST_CASE("compression ratio arithmetic is exact") {
    const Ratio r1 = compression_ratio(64, 4, 16, RankSpec{8, 4, 2});
    CHECK(r1.num * 840 == r1.den * 16384);
    CHECK(r1.value() == doctest::Approx(16384.0 / 840.0).epsilon(1e-15));

    const Ratio r2 = compression_ratio(64, 4, 16, RankSpec{1, 1, 1});
    CHECK(r2.num * 88 == r2.den * 16384);

    // Full ranks always expand: the factors come on top of the cores.
    const Ratio full = compression_ratio(64, 4, 16, RankSpec{64, 16, 4});
    const std::uint64_t expanded = 4ULL * 64 * 16 * 4 + 64ULL * 64 + 16ULL * 16 + 16ULL;
    CHECK(full.num * expanded == full.den * 16384);
    CHECK(full.value() < 1.0);

    CHECK_THROWS_AS(compression_ratio(64, 4, 16, RankSpec{65, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(compression_ratio(64, 4, 15, RankSpec{1, 1, 1}), std::invalid_argument);
}

TEST_SUITE_END();
