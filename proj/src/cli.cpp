// SPDX-License-Identifier: Apache-2.0
#include "mhtc/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>
#include <vector>

#include "mhtc/artifact.hpp"
#include "mhtc/container.hpp"
#include "mhtc/layer_map.hpp"
#include "mhtc/linalg.hpp"
#include "mhtc/mha.hpp"
#include "mhtc/random.hpp"
#include "mhtc/tucker.hpp"

namespace mhtc {

namespace {

class usage_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Human-readable reports round to 4 significant figures; JSON reports keep
// full precision.
std::string fmt4(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4g", x);
    return buf;
}

std::size_t parse_index(const std::string& token, const char* what) {
    if (token.empty() ||
        !std::all_of(token.begin(), token.end(),
                     [](unsigned char ch) { return std::isdigit(ch) != 0; })) {
        throw usage_error(std::string(what) + " '" + token + "' is not a non-negative integer");
    }
    return std::stoull(token);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string token;
    std::istringstream in(s);
    while (std::getline(in, token, sep)) out.push_back(token);
    return out;
}

std::vector<std::size_t> parse_layer_selection(const std::string& spec, std::size_t n_layers) {
    std::vector<std::size_t> out;
    if (spec == "all") {
        for (std::size_t i = 0; i < n_layers; ++i) out.push_back(i);
        return out;
    }
    for (const std::string& token : split(spec, ',')) {
        const std::size_t idx = parse_index(token, "layer index");
        if (idx >= n_layers) {
            throw std::invalid_argument("layer index " + std::to_string(idx) +
                                        " out of range for " + std::to_string(n_layers) +
                                        " layers");
        }
        out.push_back(idx);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.empty()) {
        throw usage_error("--layers selected no layers");
    }
    return out;
}

RankSpec parse_ranks(const std::string& s) {
    const std::vector<std::string> parts = split(s, ',');
    if (parts.size() != 3) {
        throw usage_error("--ranks expects R1,R2,R3");
    }
    RankSpec r;
    r.r1 = parse_index(parts[0], "rank");
    r.r2 = parse_index(parts[1], "rank");
    r.r3 = parse_index(parts[2], "rank");
    return r;
}

struct CommonArgs {
    std::string checkpoint;
    std::string naming;
    std::string layers = "all";
    std::string report = "table";
};

bool jsonl(const CommonArgs& a) { return a.report == "jsonl"; }

// ---------------------------------------------------------------- inspect

int cmd_inspect(const CommonArgs& args, std::ostream& out, std::ostream& err) {
    const TensorContainer c = read_container(args.checkpoint);
    const LayerNamingConfig cfg = LayerNamingConfig::from_json_file(args.naming);
    const std::vector<std::size_t> layers = parse_layer_selection(args.layers, cfg.n_layers);

    if (!jsonl(args)) {
        out << std::left << std::setw(7) << "layer" << std::setw(9) << "d_model" << std::setw(4)
            << "h" << std::setw(6) << "d_v" << std::setw(12) << "n_original"
            << "tensors\n";
    }
    bool ok = true;
    for (std::size_t layer : layers) {
        MhaLayerWeights w;
        try {
            w = load_layer(c, cfg, layer);
        } catch (const std::invalid_argument& e) {
            err << "layer " << layer << ": " << e.what() << "\n";
            ok = false;
            continue;
        }
        const std::uint64_t n_original =
            original_parameter_count(w.dims.d_model, w.dims.h, w.dims.d_v);
        if (jsonl(args)) {
            nlohmann::json row;
            row["layer"] = layer;
            row["d_model"] = w.dims.d_model;
            row["h"] = w.dims.h;
            row["d_v"] = w.dims.d_v;
            row["n_original"] = n_original;
            row["tensors"] = {{"q", cfg.name_q(layer)},
                              {"k", cfg.name_k(layer)},
                              {"v", cfg.name_v(layer)},
                              {"o", cfg.name_o(layer)}};
            out << row.dump() << "\n";
        } else {
            out << std::left << std::setw(7) << layer << std::setw(9) << w.dims.d_model
                << std::setw(4) << w.dims.h << std::setw(6) << w.dims.d_v << std::setw(12)
                << n_original << cfg.name_q(layer) << ", " << cfg.name_k(layer) << ", "
                << cfg.name_v(layer) << ", " << cfg.name_o(layer) << "\n";
        }
    }
    return ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- compress

struct CompressArgs {
    CommonArgs common;
    std::string ranks;
    std::string out_path;
    std::size_t max_iters = 100;
    double tol = 1e-8;
    std::size_t jobs = 0;  // 0 = available cores
};

int cmd_compress(const CompressArgs& args, std::ostream& out, std::ostream& err) {
    const RankSpec base_ranks = parse_ranks(args.ranks);
    if (args.max_iters < 1) throw usage_error("--max-iters must be >= 1");
    if (!(args.tol > 0)) throw usage_error("--tol must be positive");

    SolverOptions opts;
    opts.max_iters = args.max_iters;
    opts.fit_tolerance = args.tol;

    const TensorContainer c = read_container(args.common.checkpoint);
    const LayerNamingConfig cfg = LayerNamingConfig::from_json_file(args.common.naming);
    const std::vector<std::size_t> layers =
        parse_layer_selection(args.common.layers, cfg.n_layers);

    std::size_t jobs = args.jobs != 0 ? args.jobs
                                      : std::max<std::size_t>(1, std::thread::hardware_concurrency());
    jobs = std::min(jobs, layers.size());

    struct Slot {
        std::optional<LayerArtifact> result;
        std::optional<CompressionReport> report;
        std::string error;
    };
    std::vector<Slot> slots(layers.size());
    std::atomic<std::size_t> cursor{0};

    auto worker = [&] {
        for (;;) {
            const std::size_t slot = cursor.fetch_add(1);
            if (slot >= layers.size()) return;
            const std::size_t layer = layers[slot];
            try {
                const MhaLayerWeights w = load_layer(c, cfg, layer);
                RankSpec ranks = base_ranks;
                if (auto it = cfg.rank_overrides.find(layer); it != cfg.rank_overrides.end()) {
                    ranks = it->second;
                }
                auto [compressed, report] = compress_layer(w, ranks, opts);
                LayerArtifact la;
                la.layer_index = layer;
                la.layer = std::move(compressed);
                la.relative_error = report.relative_error;
                la.iterations = report.iterations;
                la.converged = report.converged;
                la.options = opts;
                slots[slot].result = std::move(la);
                slots[slot].report = report;
            } catch (const std::exception& e) {
                slots[slot].error = e.what();
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(jobs);
        for (std::size_t i = 0; i < jobs; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    if (!jsonl(args.common)) {
        out << std::left << std::setw(7) << "layer" << std::setw(12) << "ranks" << std::setw(12)
            << "n_original" << std::setw(14) << "n_compressed" << std::setw(10) << "cr"
            << std::setw(12) << "rel_error" << std::setw(10) << "fit" << std::setw(7) << "iters"
            << "converged\n";
    }
    ArtifactFile artifact;
    bool ok = true;
    for (std::size_t slot = 0; slot < layers.size(); ++slot) {
        const std::size_t layer = layers[slot];
        if (!slots[slot].error.empty()) {
            err << "layer " << layer << ": " << slots[slot].error << "\n";
            ok = false;
            continue;
        }
        const CompressionReport& r = *slots[slot].report;
        const RankSpec& ranks = slots[slot].result->layer.ranks;
        if (jsonl(args.common)) {
            nlohmann::json row;
            row["layer"] = layer;
            row["d_model"] = slots[slot].result->layer.original_dims.d_model;
            row["h"] = slots[slot].result->layer.original_dims.h;
            row["d_v"] = slots[slot].result->layer.original_dims.d_v;
            row["ranks"] = {ranks.r1, ranks.r2, ranks.r3};
            row["n_original"] = r.n_original;
            row["n_compressed"] = r.n_compressed;
            row["cr"] = r.cr.value();
            row["cr_num"] = r.cr.num;
            row["cr_den"] = r.cr.den;
            row["relative_error"] = r.relative_error;
            row["fit"] = 1.0 - r.relative_error;
            row["iterations"] = r.iterations;
            row["converged"] = r.converged;
            out << row.dump() << "\n";
        } else {
            std::ostringstream ranks_text;
            ranks_text << ranks.r1 << "," << ranks.r2 << "," << ranks.r3;
            out << std::left << std::setw(7) << layer << std::setw(12) << ranks_text.str()
                << std::setw(12) << r.n_original << std::setw(14) << r.n_compressed
                << std::setw(10) << fmt4(r.cr.value()) << std::setw(12) << fmt4(r.relative_error)
                << std::setw(10) << fmt4(1.0 - r.relative_error) << std::setw(7) << r.iterations
                << (r.converged ? "yes" : "no") << "\n";
        }
        artifact.layers.push_back(std::move(*slots[slot].result));
    }
    write_artifact(artifact, args.out_path);
    return ok ? kExitOk : kExitFailure;
}

// ------------------------------------------------------------- reconstruct

struct ReconstructArgs {
    CommonArgs common;
    std::string artifact_path;
    std::string out_path;
};

int cmd_reconstruct(const ReconstructArgs& args, std::ostream& out, std::ostream& err) {
    TensorContainer c = read_container(args.common.checkpoint);
    const LayerNamingConfig cfg = LayerNamingConfig::from_json_file(args.common.naming);
    const ArtifactFile artifact = read_artifact(args.artifact_path);

    std::map<std::size_t, const LayerArtifact*> by_index;
    for (const LayerArtifact& la : artifact.layers) by_index[la.layer_index] = &la;

    std::vector<std::size_t> selected;
    if (args.common.layers == "all") {
        for (const auto& [index, la] : by_index) selected.push_back(index);
    } else {
        selected = parse_layer_selection(args.common.layers, cfg.n_layers);
    }

    bool ok = true;
    for (std::size_t layer : selected) {
        auto it = by_index.find(layer);
        if (it == by_index.end()) {
            err << "layer " << layer << ": not present in artifact\n";
            ok = false;
            continue;
        }
        const LayerArtifact& la = *it->second;
        MhaLayerWeights w;
        try {
            w = load_layer(c, cfg, layer);
        } catch (const std::invalid_argument& e) {
            err << "layer " << layer << ": " << e.what() << "\n";
            ok = false;
            continue;
        }
        const MhaDims& have = w.dims;
        const MhaDims& want = la.layer.original_dims;
        if (have.d_model != want.d_model || have.h != want.h || have.d_v != want.d_v) {
            err << "layer " << layer << ": artifact dims (" << want.d_model << ", " << want.h
                << ", " << want.d_v << ") do not match checkpoint dims (" << have.d_model << ", "
                << have.h << ", " << have.d_v << ")\n";
            ok = false;
            continue;
        }
        store_layer(c, cfg, layer, reconstruct_layer(la.layer));
        if (jsonl(args.common)) {
            nlohmann::json row;
            row["layer"] = layer;
            row["replaced"] = true;
            out << row.dump() << "\n";
        } else {
            out << "layer " << layer << ": weights replaced by reconstruction\n";
        }
    }
    if (!ok) {
        return kExitFailure;
    }
    write_container(c, args.out_path);
    return kExitOk;
}

// ------------------------------------------------------------------ verify

struct VerifyArgs {
    CommonArgs common;
    std::string artifact_path;  // optional
    double forward_tol = -1.0;  // < 0: enforce only at full ranks
};

double orthonormality_deviation(const DenseTensor& u) {
    const DenseTensor gram = matmul(transpose(u), u);
    return frobenius_distance(gram, identity(u.extent(1)));
}

// Sum of per-head objectives computed head by head; an independent route
// from the stacked form used by shared_objective.
double per_head_objective(const DenseTensor& w_all, const SharedTucker& st) {
    double total = 0.0;
    for (std::size_t i = 0; i < st.n_heads(); ++i) {
        const DenseTensor w_i = slice_last(w_all, i);
        DenseTensor rec = slice_last(st.cores, i);
        rec = mode_n_product(rec, st.u1, 0);
        rec = mode_n_product(rec, st.u2, 1);
        rec = mode_n_product(rec, st.u3, 2);
        const double dist = frobenius_distance(w_i, rec);
        total += 0.5 * dist * dist;
    }
    return total;
}

int cmd_verify(const VerifyArgs& args, std::ostream& out, std::ostream& err) {
    const TensorContainer c = read_container(args.common.checkpoint);
    const LayerNamingConfig cfg = LayerNamingConfig::from_json_file(args.common.naming);
    const std::vector<std::size_t> layers =
        parse_layer_selection(args.common.layers, cfg.n_layers);

    std::map<std::size_t, const LayerArtifact*> by_index;
    ArtifactFile artifact;
    if (!args.artifact_path.empty()) {
        artifact = read_artifact(args.artifact_path);
        for (const LayerArtifact& la : artifact.layers) by_index[la.layer_index] = &la;
    }

    bool all_pass = true;
    auto emit = [&](std::size_t layer, const char* check, bool pass, double value,
                    const std::string& detail) {
        all_pass = all_pass && pass;
        if (jsonl(args.common)) {
            nlohmann::json row;
            row["layer"] = layer;
            row["check"] = check;
            row["pass"] = pass;
            row["value"] = value;
            if (!detail.empty()) row["detail"] = detail;
            out << row.dump() << "\n";
        } else {
            out << std::left << std::setw(7) << layer << std::setw(26) << check << std::setw(6)
                << (pass ? "PASS" : "FAIL") << fmt4(value)
                << (detail.empty() ? "" : "  " + detail) << "\n";
        }
    };

    for (std::size_t layer : layers) {
        MhaLayerWeights w;
        try {
            w = load_layer(c, cfg, layer);
        } catch (const std::invalid_argument& e) {
            err << "layer " << layer << ": " << e.what() << "\n";
            all_pass = false;
            continue;
        }

        const DenseTensor w_all = tensorise(w);
        const MhaLayerWeights round = detensorise(w_all);
        const bool rt = bit_identical(round.wq, w.wq) && bit_identical(round.wk, w.wk) &&
                        bit_identical(round.wv, w.wv) && bit_identical(round.wo, w.wo);
        emit(layer, "tensorise_round_trip", rt, rt ? 0.0 : 1.0,
             rt ? "" : "round trip is not bit-exact");

        auto it = by_index.find(layer);
        if (it == by_index.end()) continue;
        const LayerArtifact& la = *it->second;
        const SharedTucker& st = la.layer.shared;

        const double dev1 = orthonormality_deviation(st.u1);
        const double dev2 = orthonormality_deviation(st.u2);
        const double dev3 = orthonormality_deviation(st.u3);
        const double worst = std::max({dev1, dev2, dev3});
        std::string which;
        if (worst > 1e-9) {
            which = worst == dev1 ? "u1" : (worst == dev2 ? "u2" : "u3");
            which = "factor " + which + " deviates from orthonormality";
        }
        emit(layer, "factor_orthonormality", worst <= 1e-9, worst, which);

        const double obj_stacked = shared_objective(w_all, st);
        const double obj_heads = per_head_objective(w_all, st);
        const double denom = std::max({obj_stacked, obj_heads, 1e-300});
        const double obj_dev = std::abs(obj_stacked - obj_heads) / denom;
        emit(layer, "objective_equivalence", obj_dev <= 1e-12, obj_dev, "");

        const MhaLayerWeights rec = reconstruct_layer(la.layer);
        const std::uint64_t seed = kProbeSeed + layer;
        const DenseTensor q = gaussian_tensor({kProbeLength, w.dims.d_model}, seed);
        const DenseTensor k = gaussian_tensor({kProbeLength, w.dims.d_model}, seed + 101);
        const DenseTensor v = gaussian_tensor({kProbeLength, w.dims.d_model}, seed + 202);
        const DenseTensor y0 = attention_forward(w, q, k, v);
        const DenseTensor y1 = attention_forward(rec, q, k, v);
        const double base = frobenius_norm(y0);
        const double delta = base > 0 ? frobenius_distance(y0, y1) / base : 0.0;
        const bool full = la.layer.ranks.is_full(w.dims.d_model, w.dims.d_v);
        bool pass = true;
        std::string detail;
        if (args.forward_tol >= 0.0) {
            pass = delta <= args.forward_tol;
        } else if (full) {
            pass = delta <= 1e-6;
        } else {
            detail = "informational at reduced ranks";
        }
        emit(layer, "forward_delta", pass, delta, detail);
    }
    return all_pass ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Attention-weight compression via shared-factor tensor decomposition", "mhtc"};
    app.require_subcommand(1);

    CommonArgs inspect_args;
    CLI::App* inspect = app.add_subcommand("inspect", "List layer geometry and parameter counts");
    inspect->add_option("--checkpoint", inspect_args.checkpoint, "Checkpoint file")->required();
    inspect->add_option("--naming", inspect_args.naming, "Layer-naming config (JSON)")->required();
    inspect->add_option("--layers", inspect_args.layers, "Layer selection: \"3\", \"0,5,7\", or \"all\"");
    inspect->add_option("--report", inspect_args.report, "Report format")
        ->check(CLI::IsMember({"table", "jsonl"}));

    CompressArgs compress_args;
    CLI::App* compress = app.add_subcommand("compress", "Compress attention weights per layer");
    compress->add_option("--checkpoint", compress_args.common.checkpoint, "Checkpoint file")
        ->required();
    compress->add_option("--naming", compress_args.common.naming, "Layer-naming config (JSON)")
        ->required();
    compress->add_option("--layers", compress_args.common.layers, "Layer selection");
    compress->add_option("--report", compress_args.common.report, "Report format")
        ->check(CLI::IsMember({"table", "jsonl"}));
    compress->add_option("--ranks", compress_args.ranks, "Multilinear ranks R1,R2,R3")->required();
    compress->add_option("--out", compress_args.out_path, "Output artifact path")->required();
    compress->add_option("--max-iters", compress_args.max_iters, "Maximum solver sweeps");
    compress->add_option("--tol", compress_args.tol, "Fit-change stopping tolerance");
    compress->add_option("--jobs", compress_args.jobs, "Parallel layer workers (0 = cores)");

    ReconstructArgs reconstruct_args;
    CLI::App* reconstruct =
        app.add_subcommand("reconstruct", "Write a checkpoint with reconstructed weights");
    reconstruct->add_option("--checkpoint", reconstruct_args.common.checkpoint, "Checkpoint file")
        ->required();
    reconstruct->add_option("--naming", reconstruct_args.common.naming, "Layer-naming config")
        ->required();
    reconstruct->add_option("--artifact", reconstruct_args.artifact_path, "Compressed artifact")
        ->required();
    reconstruct->add_option("--out", reconstruct_args.out_path, "Output checkpoint path")
        ->required();
    reconstruct->add_option("--layers", reconstruct_args.common.layers, "Layer selection");
    reconstruct->add_option("--report", reconstruct_args.common.report, "Report format")
        ->check(CLI::IsMember({"table", "jsonl"}));

    VerifyArgs verify_args;
    CLI::App* verify = app.add_subcommand("verify", "Run invariant checks on checkpoint data");
    verify->add_option("--checkpoint", verify_args.common.checkpoint, "Checkpoint file")
        ->required();
    verify->add_option("--naming", verify_args.common.naming, "Layer-naming config")->required();
    verify->add_option("--artifact", verify_args.artifact_path, "Compressed artifact (optional)");
    verify->add_option("--layers", verify_args.common.layers, "Layer selection");
    verify->add_option("--report", verify_args.common.report, "Report format")
        ->check(CLI::IsMember({"table", "jsonl"}));
    verify->add_option("--forward-tol", verify_args.forward_tol,
                       "Enforce this forward-delta bound at any ranks");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (inspect->parsed()) return cmd_inspect(inspect_args, out, err);
        if (compress->parsed()) return cmd_compress(compress_args, out, err);
        if (reconstruct->parsed()) return cmd_reconstruct(reconstruct_args, out, err);
        if (verify->parsed()) return cmd_verify(verify_args, out, err);
        err << "error: no subcommand selected\n";
        return kExitUsage;
    } catch (const usage_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const io_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace mhtc
