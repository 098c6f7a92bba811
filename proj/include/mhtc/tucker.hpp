// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "mhtc/tensor.hpp"

namespace mhtc {

struct SolverOptions {
    std::size_t max_iters = 100;
    double fit_tolerance = 1e-8;   // stop when the fit changes less than this between sweeps
    bool deterministic_init = true;  // truncated-SVD init; randomized init is not supported

    void validate() const;
};

/// Per-solve diagnostics. fit = 1 - |T - reconstruction|_F / |T|_F.
struct SolverStats {
    std::size_t sweeps = 0;          // alternating sweeps performed (init excluded)
    bool converged = false;
    std::vector<double> fit_history;  // [0] is the init fit, then one entry per sweep
    double fit = 0.0;
};

/// Tucker format: a small core multiplied by one orthonormal factor per mode.
struct TuckerFactors {
    DenseTensor core;                  // R_1 x ... x R_N
    std::vector<DenseTensor> factors;  // factor n: I_n x R_n, orthonormal columns
};

struct TuckerResult {
    TuckerFactors decomposition;
    SolverStats stats;
};

/// Multilinear ranks for the three shared modes of a tensorised attention
/// layer: embedding axis, head axis, and the 4-way Q/K/V/O axis.
struct RankSpec {
    std::size_t r1 = 1;
    std::size_t r2 = 1;
    std::size_t r3 = 1;

    void validate(std::size_t d_model, std::size_t d_v) const;
    bool is_full(std::size_t d_model, std::size_t d_v) const;
};

/// Compressed representation of all attention weights in one layer: three
/// factor matrices shared by every head plus one core per head, stacked
/// along the trailing mode.
struct SharedTucker {
    DenseTensor u1;     // d_model x R1
    DenseTensor u2;     // d_v x R2
    DenseTensor u3;     // 4 x R3
    DenseTensor cores;  // R1 x R2 x R3 x h

    std::size_t d_model() const { return u1.extent(0); }
    std::size_t d_v() const { return u2.extent(0); }
    std::size_t n_heads() const { return cores.extent(3); }
    std::size_t r1() const { return u1.extent(1); }
    std::size_t r2() const { return u2.extent(1); }
    std::size_t r3() const { return u3.extent(1); }

    /// h*R1*R2*R3 + d_model*R1 + d_v*R2 + 4*R3.
    std::size_t parameter_count() const;
};

struct SharedTuckerResult {
    SharedTucker decomposition;
    SolverStats stats;
};

/// One-shot truncated decomposition: factor n spans the leading R_n left
/// singular vectors of the mode-n unfolding.
TuckerFactors hosvd(const DenseTensor& t, std::span<const std::size_t> ranks);

/// Alternating refinement of hosvd: each sweep replaces factor n with the
/// leading left singular basis of the unfolding of the tensor projected
/// through every other factor. The fit never decreases across sweeps.
TuckerResult hooi(const DenseTensor& t, std::span<const std::size_t> ranks,
                  const SolverOptions& opts = {});

/// Tucker decomposition of an order-4 (d_model x d_v x 4 x h) tensor with
/// the trailing head mode fixed to identity, so the three leading factor
/// matrices are shared across heads while each head keeps its own core.
SharedTuckerResult shared_factor_tucker(const DenseTensor& w_all, const RankSpec& ranks,
                                        const SolverOptions& opts = {});

DenseTensor reconstruct(const TuckerFactors& f);

/// cores x_1 U1 x_2 U2 x_3 U3 (the trailing identity factor is omitted).
DenseTensor reconstruct_shared(const SharedTucker& st);

/// 0.5 * |w_all - reconstruct_shared(st)|_F^2.
double shared_objective(const DenseTensor& w_all, const SharedTucker& st);

/// Baseline: stacks the four global weight matrices (all d_model x h*d_v;
/// pass the output projection pre-transposed) along a new trailing mode and
/// runs a plain order-3 decomposition with no sharing structure.
TuckerResult trawl_stack_tucker(const DenseTensor& wq, const DenseTensor& wk,
                                const DenseTensor& wv, const DenseTensor& wo_t,
                                std::array<std::size_t, 3> ranks,
                                const SolverOptions& opts = {});

}  // namespace mhtc
