// SPDX-License-Identifier: Apache-2.0
#include "mhtc/tucker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mhtc/linalg.hpp"

namespace mhtc {

namespace {

void require_finite(const DenseTensor& t, const char* op) {
    for (double x : t.data()) {
        if (!std::isfinite(x)) {
            throw std::invalid_argument(std::string(op) + ": input has non-finite entries");
        }
    }
}

void validate_ranks(const DenseTensor& t, std::span<const std::size_t> ranks, const char* op) {
    if (ranks.size() != t.order()) {
        throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(t.order()) +
                                    " ranks, got " + std::to_string(ranks.size()));
    }
    for (std::size_t n = 0; n < ranks.size(); ++n) {
        if (ranks[n] < 1 || ranks[n] > t.extent(n)) {
            throw std::invalid_argument(std::string(op) + ": rank " + std::to_string(ranks[n]) +
                                        " out of range [1, " + std::to_string(t.extent(n)) +
                                        "] for mode " + std::to_string(n));
        }
    }
}

// T projected through U_m^T on every mode in `modes` except `skip`
// (skip == npos projects all of them).
DenseTensor project(const DenseTensor& t, const std::vector<DenseTensor>& factors,
                    std::span<const std::size_t> modes, std::size_t skip) {
    DenseTensor y = t;
    for (std::size_t m : modes) {
        if (m == skip) continue;
        y = mode_n_product(y, transpose(factors[m]), m);
    }
    return y;
}

constexpr std::size_t kNoSkip = static_cast<std::size_t>(-1);

double fit_of(const DenseTensor& t, const DenseTensor& reconstruction, double t_norm) {
    if (t_norm == 0.0) return 1.0;
    return 1.0 - frobenius_distance(t, reconstruction) / t_norm;
}

// Shared alternating loop for the full solver and the shared-factor
// variant: only the modes listed in `active` are updated, any others keep
// an implicit identity factor.
SolverStats alternate(const DenseTensor& t, std::span<const std::size_t> ranks,
                      std::span<const std::size_t> active, const SolverOptions& opts,
                      std::vector<DenseTensor>& factors, DenseTensor& core) {
    const double t_norm = frobenius_norm(t);

    auto current_core = [&] { return project(t, factors, active, kNoSkip); };
    auto current_fit = [&](const DenseTensor& g) {
        DenseTensor rec = g;
        for (std::size_t m : active) rec = mode_n_product(rec, factors[m], m);
        return fit_of(t, rec, t_norm);
    };

    core = current_core();
    SolverStats stats;
    stats.fit_history.push_back(current_fit(core));

    for (std::size_t sweep = 1; sweep <= opts.max_iters; ++sweep) {
        for (std::size_t n : active) {
            const DenseTensor y = project(t, factors, active, n);
            factors[n] = left_singular_basis(unfold(y, n).matrix, ranks[n]);
        }
        core = current_core();
        const double fit = current_fit(core);
        stats.fit_history.push_back(fit);
        stats.sweeps = sweep;
        if (std::abs(fit - stats.fit_history[stats.fit_history.size() - 2]) <
            opts.fit_tolerance) {
            stats.converged = true;
            break;
        }
    }
    stats.fit = stats.fit_history.back();
    return stats;
}

}  // namespace

void SolverOptions::validate() const {
    if (max_iters < 1) {
        throw std::invalid_argument("max_iters must be >= 1");
    }
    if (!(fit_tolerance > 0.0)) {
        throw std::invalid_argument("fit_tolerance must be positive");
    }
    if (!deterministic_init) {
        throw std::invalid_argument("randomized initialization is not supported");
    }
}

void RankSpec::validate(std::size_t d_model, std::size_t d_v) const {
    if (r1 < 1 || r1 > d_model) {
        throw std::invalid_argument("R1 = " + std::to_string(r1) + " out of range [1, " +
                                    std::to_string(d_model) + "]");
    }
    if (r2 < 1 || r2 > d_v) {
        throw std::invalid_argument("R2 = " + std::to_string(r2) + " out of range [1, " +
                                    std::to_string(d_v) + "]");
    }
    if (r3 < 1 || r3 > 4) {
        throw std::invalid_argument("R3 = " + std::to_string(r3) + " out of range [1, 4]");
    }
}

bool RankSpec::is_full(std::size_t d_model, std::size_t d_v) const {
    return r1 == d_model && r2 == d_v && r3 == 4;
}

std::size_t SharedTucker::parameter_count() const {
    return n_heads() * r1() * r2() * r3() + d_model() * r1() + d_v() * r2() + 4 * r3();
}

TuckerFactors hosvd(const DenseTensor& t, std::span<const std::size_t> ranks) {
    require_finite(t, "hosvd");
    validate_ranks(t, ranks, "hosvd");

    std::vector<std::size_t> modes(t.order());
    for (std::size_t n = 0; n < modes.size(); ++n) modes[n] = n;

    std::vector<DenseTensor> factors(t.order());
    for (std::size_t n = 0; n < t.order(); ++n) {
        factors[n] = left_singular_basis(unfold(t, n).matrix, ranks[n]);
    }
    DenseTensor core = project(t, factors, modes, kNoSkip);
    return TuckerFactors{std::move(core), std::move(factors)};
}

TuckerResult hooi(const DenseTensor& t, std::span<const std::size_t> ranks,
                  const SolverOptions& opts) {
    opts.validate();
    TuckerFactors init = hosvd(t, ranks);

    std::vector<std::size_t> modes(t.order());
    for (std::size_t n = 0; n < modes.size(); ++n) modes[n] = n;

    TuckerResult result;
    result.decomposition.factors = std::move(init.factors);
    result.stats = alternate(t, ranks, modes, opts, result.decomposition.factors,
                             result.decomposition.core);
    return result;
}

SharedTuckerResult shared_factor_tucker(const DenseTensor& w_all, const RankSpec& ranks,
                                        const SolverOptions& opts) {
    opts.validate();
    if (w_all.order() != 4) {
        throw std::invalid_argument("shared_factor_tucker expects an order-4 tensor");
    }
    if (w_all.extent(2) != 4) {
        throw std::invalid_argument("shared_factor_tucker expects extent 4 on the third mode");
    }
    require_finite(w_all, "shared_factor_tucker");
    ranks.validate(w_all.extent(0), w_all.extent(1));

    const std::size_t rank_list[3] = {ranks.r1, ranks.r2, ranks.r3};
    const std::size_t active[3] = {0, 1, 2};

    std::vector<DenseTensor> factors(4);  // factor 3 stays an implicit identity
    for (std::size_t n = 0; n < 3; ++n) {
        factors[n] = left_singular_basis(unfold(w_all, n).matrix, rank_list[n]);
    }

    DenseTensor core;
    // Rank list is indexed by mode; pad to mode 3 so `alternate` can index
    // uniformly (the padding value is never read).
    const std::size_t padded_ranks[4] = {ranks.r1, ranks.r2, ranks.r3, w_all.extent(3)};
    SolverStats stats = alternate(w_all, std::span<const std::size_t>(padded_ranks, 4),
                                  std::span<const std::size_t>(active, 3), opts, factors, core);

    SharedTuckerResult result;
    result.decomposition =
        SharedTucker{std::move(factors[0]), std::move(factors[1]), std::move(factors[2]),
                     std::move(core)};
    result.stats = std::move(stats);
    return result;
}

DenseTensor reconstruct(const TuckerFactors& f) {
    DenseTensor out = f.core;
    for (std::size_t n = 0; n < f.factors.size(); ++n) {
        out = mode_n_product(out, f.factors[n], n);
    }
    return out;
}

DenseTensor reconstruct_shared(const SharedTucker& st) {
    if (st.cores.order() != 4) {
        throw std::invalid_argument("shared cores must be order-4");
    }
    DenseTensor out = mode_n_product(st.cores, st.u1, 0);
    out = mode_n_product(out, st.u2, 1);
    out = mode_n_product(out, st.u3, 2);
    return out;
}

double shared_objective(const DenseTensor& w_all, const SharedTucker& st) {
    const DenseTensor rec = reconstruct_shared(st);
    if (!w_all.same_shape(rec)) {
        throw std::invalid_argument("shared_objective: tensor and reconstruction shapes differ");
    }
    const double dist = frobenius_distance(w_all, rec);
    return 0.5 * dist * dist;
}

TuckerResult trawl_stack_tucker(const DenseTensor& wq, const DenseTensor& wk,
                                const DenseTensor& wv, const DenseTensor& wo_t,
                                std::array<std::size_t, 3> ranks, const SolverOptions& opts) {
    const DenseTensor* mats[4] = {&wq, &wk, &wv, &wo_t};
    for (const DenseTensor* m : mats) {
        if (m->order() != 2) {
            throw std::invalid_argument("trawl_stack_tucker expects order-2 inputs");
        }
        if (!m->same_shape(wq)) {
            throw std::invalid_argument("trawl_stack_tucker expects four identically shaped inputs");
        }
    }
    const DenseTensor stacked = stack(std::array<DenseTensor, 4>{wq, wk, wv, wo_t});
    return hooi(stacked, std::span<const std::size_t>(ranks.data(), 3), opts);
}

}  // namespace mhtc
