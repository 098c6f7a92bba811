// SPDX-License-Identifier: Apache-2.0
#include "mhtc/mha.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mhtc {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajorMatrix>;

ConstMap map_of(const DenseTensor& m) {
    return ConstMap(m.data().data(), static_cast<Eigen::Index>(m.extent(0)),
                    static_cast<Eigen::Index>(m.extent(1)));
}

void require_finite(const DenseTensor& t, const char* what) {
    for (double x : t.data()) {
        if (!std::isfinite(x)) {
            throw std::invalid_argument(std::string(what) + " has non-finite entries");
        }
    }
}

DenseTensor from_eigen_rows(const RowMajorMatrix& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    return DenseTensor::from_data(
        {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
        std::move(data));
}

}  // namespace

MhaLayerWeights MhaLayerWeights::create(DenseTensor wq, DenseTensor wk, DenseTensor wv,
                                        DenseTensor wo, std::size_t n_heads) {
    if (wq.order() != 2 || wk.order() != 2 || wv.order() != 2 || wo.order() != 2) {
        throw std::invalid_argument("projection weights must be order-2");
    }
    const std::size_t d_model = wq.extent(0);
    const std::size_t hdv = wq.extent(1);
    if (n_heads < 1) {
        throw std::invalid_argument("n_heads must be >= 1");
    }
    if (hdv % n_heads != 0) {
        throw std::invalid_argument("head count " + std::to_string(n_heads) +
                                    " does not divide the projection width " +
                                    std::to_string(hdv));
    }
    if (hdv != d_model) {
        throw std::invalid_argument("h*d_v (" + std::to_string(hdv) + ") must equal d_model (" +
                                    std::to_string(d_model) + ")");
    }
    if (!wk.same_shape(wq) || !wv.same_shape(wq)) {
        throw std::invalid_argument("query/key/value projections must share one shape");
    }
    if (wo.extent(0) != hdv || wo.extent(1) != d_model) {
        throw std::invalid_argument("output projection must be (h*d_v) x d_model");
    }
    MhaLayerWeights w;
    w.wq = std::move(wq);
    w.wk = std::move(wk);
    w.wv = std::move(wv);
    w.wo = std::move(wo);
    w.dims = MhaDims{d_model, n_heads, hdv / n_heads};
    return w;
}

Ratio make_ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) {
        throw std::invalid_argument("ratio denominator must be nonzero");
    }
    const std::uint64_t g = std::gcd(num, den);
    return Ratio{num / g, den / g};
}

DenseTensor tensorise(const MhaLayerWeights& w) {
    const std::size_t d_model = w.dims.d_model;
    const std::size_t h = w.dims.h;
    const std::size_t d_v = w.dims.d_v;

    DenseTensor out = DenseTensor::zeros({d_model, d_v, 4, h});
    double* dst = out.data().data();
    const double* q = w.wq.data().data();
    const double* k = w.wk.data().data();
    const double* v = w.wv.data().data();
    const double* o = w.wo.data().data();
    const std::size_t hdv = h * d_v;

    for (std::size_t a = 0; a < d_model; ++a) {
        for (std::size_t b = 0; b < d_v; ++b) {
            for (std::size_t i = 0; i < h; ++i) {
                const std::size_t base = ((a * d_v + b) * 4) * h + i;
                dst[base] = q[a * hdv + i * d_v + b];
                dst[base + h] = k[a * hdv + i * d_v + b];
                dst[base + 2 * h] = v[a * hdv + i * d_v + b];
                // Output projection enters transposed: row i*d_v+b, column a.
                dst[base + 3 * h] = o[(i * d_v + b) * d_model + a];
            }
        }
    }
    return out;
}

MhaLayerWeights detensorise(const DenseTensor& w_all) {
    if (w_all.order() != 4) {
        throw std::invalid_argument("detensorise expects an order-4 tensor");
    }
    if (w_all.extent(2) != 4) {
        throw std::invalid_argument("detensorise expects extent 4 on the third mode, got " +
                                    std::to_string(w_all.extent(2)));
    }
    const std::size_t d_model = w_all.extent(0);
    const std::size_t d_v = w_all.extent(1);
    const std::size_t h = w_all.extent(3);
    if (h * d_v != d_model) {
        throw std::invalid_argument("h*d_v (" + std::to_string(h * d_v) +
                                    ") must equal d_model (" + std::to_string(d_model) + ")");
    }
    const std::size_t hdv = h * d_v;

    DenseTensor wq = DenseTensor::zeros({d_model, hdv});
    DenseTensor wk = DenseTensor::zeros({d_model, hdv});
    DenseTensor wv = DenseTensor::zeros({d_model, hdv});
    DenseTensor wo = DenseTensor::zeros({hdv, d_model});
    const double* src = w_all.data().data();

    for (std::size_t a = 0; a < d_model; ++a) {
        for (std::size_t b = 0; b < d_v; ++b) {
            for (std::size_t i = 0; i < h; ++i) {
                const std::size_t base = ((a * d_v + b) * 4) * h + i;
                wq.data()[a * hdv + i * d_v + b] = src[base];
                wk.data()[a * hdv + i * d_v + b] = src[base + h];
                wv.data()[a * hdv + i * d_v + b] = src[base + 2 * h];
                wo.data()[(i * d_v + b) * d_model + a] = src[base + 3 * h];
            }
        }
    }
    return MhaLayerWeights::create(std::move(wq), std::move(wk), std::move(wv), std::move(wo), h);
}

std::pair<CompressedLayer, CompressionReport> compress_layer(const MhaLayerWeights& w,
                                                             const RankSpec& ranks,
                                                             const SolverOptions& opts) {
    ranks.validate(w.dims.d_model, w.dims.d_v);
    const DenseTensor w_all = tensorise(w);
    SharedTuckerResult solved = shared_factor_tucker(w_all, ranks, opts);

    CompressedLayer layer;
    layer.shared = std::move(solved.decomposition);
    layer.ranks = ranks;
    layer.original_dims = w.dims;
    layer.fit = std::clamp(solved.stats.fit, 0.0, 1.0);

    CompressionReport report;
    report.n_original = original_parameter_count(w.dims.d_model, w.dims.h, w.dims.d_v);
    report.n_compressed = compressed_parameter_count(w.dims.d_model, w.dims.h, w.dims.d_v, ranks);
    report.cr = make_ratio(report.n_original, report.n_compressed);
    report.relative_error = 1.0 - layer.fit;
    report.iterations = solved.stats.sweeps;
    report.converged = solved.stats.converged;
    return {std::move(layer), std::move(report)};
}

MhaLayerWeights reconstruct_layer(const CompressedLayer& c) {
    return detensorise(reconstruct_shared(c.shared));
}

AttentionDetail attention_forward_detailed(const MhaLayerWeights& w, const DenseTensor& q,
                                           const DenseTensor& k, const DenseTensor& v) {
    const std::size_t d_model = w.dims.d_model;
    const std::size_t h = w.dims.h;
    const std::size_t d_v = w.dims.d_v;

    for (const DenseTensor* m : {&q, &k, &v}) {
        if (m->order() != 2 || m->extent(1) != d_model) {
            throw std::invalid_argument("probe matrices must be L x d_model");
        }
        require_finite(*m, "attention input");
    }
    if (q.extent(0) != k.extent(0) || q.extent(0) != v.extent(0)) {
        throw std::invalid_argument("probe matrices must share the same number of positions");
    }
    for (const DenseTensor* m : {&w.wq, &w.wk, &w.wv, &w.wo}) {
        require_finite(*m, "attention weight");
    }
    const std::size_t len = q.extent(0);

    ConstMap qm = map_of(q);
    ConstMap km = map_of(k);
    ConstMap vm = map_of(v);
    ConstMap wq = map_of(w.wq);
    ConstMap wk = map_of(w.wk);
    ConstMap wv = map_of(w.wv);
    ConstMap wo = map_of(w.wo);

    const double scale = 1.0 / std::sqrt(static_cast<double>(d_v));
    RowMajorMatrix concat(len, h * d_v);
    AttentionDetail detail;
    detail.head_probabilities.reserve(h);

    for (std::size_t i = 0; i < h; ++i) {
        const Eigen::Index off = static_cast<Eigen::Index>(i * d_v);
        const Eigen::Index width = static_cast<Eigen::Index>(d_v);
        RowMajorMatrix qh = qm * wq.middleCols(off, width);
        RowMajorMatrix kh = km * wk.middleCols(off, width);
        RowMajorMatrix vh = vm * wv.middleCols(off, width);

        RowMajorMatrix logits = (qh * kh.transpose()) * scale;
        RowMajorMatrix probs(len, len);
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            const double row_max = logits.row(r).maxCoeff();
            Eigen::ArrayXd e = (logits.row(r).array() - row_max).exp();
            probs.row(r) = (e / e.sum()).matrix().transpose();
        }
        concat.middleCols(off, width) = probs * vh;
        detail.head_probabilities.push_back(from_eigen_rows(probs));
    }

    RowMajorMatrix out = concat * wo;
    detail.output = from_eigen_rows(out);
    return detail;
}

DenseTensor attention_forward(const MhaLayerWeights& w, const DenseTensor& q,
                              const DenseTensor& k, const DenseTensor& v) {
    return attention_forward_detailed(w, q, k, v).output;
}

std::uint64_t original_parameter_count(std::size_t d_model, std::size_t h, std::size_t d_v) {
    return 4ULL * d_model * h * d_v;
}

std::uint64_t compressed_parameter_count(std::size_t d_model, std::size_t h, std::size_t d_v,
                                         const RankSpec& ranks) {
    return static_cast<std::uint64_t>(h) * ranks.r1 * ranks.r2 * ranks.r3 +
           static_cast<std::uint64_t>(d_model) * ranks.r1 +
           static_cast<std::uint64_t>(d_v) * ranks.r2 + 4ULL * ranks.r3;
}

Ratio compression_ratio(std::size_t d_model, std::size_t h, std::size_t d_v,
                        const RankSpec& ranks) {
    if (h < 1 || d_v < 1 || h * d_v != d_model) {
        throw std::invalid_argument("compression_ratio requires h*d_v == d_model");
    }
    ranks.validate(d_model, d_v);
    return make_ratio(original_parameter_count(d_model, h, d_v),
                      compressed_parameter_count(d_model, h, d_v, ranks));
}

}  // namespace mhtc
