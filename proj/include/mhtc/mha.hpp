// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "mhtc/tensor.hpp"
#include "mhtc/tucker.hpp"

namespace mhtc {

/// Attention geometry of one layer. The head dimension is tied to the
/// embedding dimension: h * d_v == d_model.
struct MhaDims {
    std::size_t d_model = 0;
    std::size_t h = 0;
    std::size_t d_v = 0;
};

/// The four projection matrices of one attention layer, stored in the
/// orientation used by the forward pass: wq/wk/wv are d_model x (h*d_v),
/// wo is (h*d_v) x d_model. Head i owns columns [i*d_v, (i+1)*d_v) of
/// wq/wk/wv and rows [i*d_v, (i+1)*d_v) of wo.
struct MhaLayerWeights {
    DenseTensor wq;
    DenseTensor wk;
    DenseTensor wv;
    DenseTensor wo;
    MhaDims dims;

    /// Validates shapes, divisibility, and h*d_v == d_model.
    static MhaLayerWeights create(DenseTensor wq, DenseTensor wk, DenseTensor wv,
                                  DenseTensor wo, std::size_t n_heads);
};

/// Exact reduced fraction, kept in integer arithmetic.
struct Ratio {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

Ratio make_ratio(std::uint64_t num, std::uint64_t den);

struct CompressedLayer {
    SharedTucker shared;
    RankSpec ranks;
    MhaDims original_dims;
    double fit = 0.0;  // 1 - relative reconstruction error, in [0, 1]
};

struct CompressionReport {
    std::uint64_t n_original = 0;
    std::uint64_t n_compressed = 0;
    Ratio cr;
    double relative_error = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Rearranges the four projection matrices into the order-4 tensor
/// (d_model x d_v x 4 x h): slice j of the third mode holds, per head,
/// the Q, K, V blocks and the transposed O block. Pure data movement.
DenseTensor tensorise(const MhaLayerWeights& w);

/// Exact inverse of tensorise (re-transposes the output-projection slices).
MhaLayerWeights detensorise(const DenseTensor& w_all);

std::pair<CompressedLayer, CompressionReport> compress_layer(const MhaLayerWeights& w,
                                                             const RankSpec& ranks,
                                                             const SolverOptions& opts = {});

MhaLayerWeights reconstruct_layer(const CompressedLayer& c);

/// Scaled dot-product attention over h heads with concatenation and output
/// projection. q, k, v are L x d_model; the result is L x d_model.
DenseTensor attention_forward(const MhaLayerWeights& w, const DenseTensor& q,
                              const DenseTensor& k, const DenseTensor& v);

struct AttentionDetail {
    DenseTensor output;                            // L x d_model
    std::vector<DenseTensor> head_probabilities;   // h matrices, each L x L
};

AttentionDetail attention_forward_detailed(const MhaLayerWeights& w, const DenseTensor& q,
                                           const DenseTensor& k, const DenseTensor& v);

/// Original-to-compressed parameter-count ratio for one layer, exact.
Ratio compression_ratio(std::size_t d_model, std::size_t h, std::size_t d_v,
                        const RankSpec& ranks);

std::uint64_t original_parameter_count(std::size_t d_model, std::size_t h, std::size_t d_v);
std::uint64_t compressed_parameter_count(std::size_t d_model, std::size_t h, std::size_t d_v,
                                         const RankSpec& ranks);

}  // namespace mhtc
