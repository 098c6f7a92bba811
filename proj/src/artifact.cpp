// SPDX-License-Identifier: Apache-2.0
#include "mhtc/artifact.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <string>

#include "mhtc/container.hpp"

namespace mhtc {

namespace {

std::string layer_prefix(std::size_t index) { return "layer." + std::to_string(index); }

bool parse_layer_key(const std::string& key, std::size_t& index) {
    const std::string prefix = "layer.";
    if (key.size() <= prefix.size() || key.compare(0, prefix.size(), prefix) != 0) return false;
    const std::string digits = key.substr(prefix.size());
    for (char ch : digits) {
        if (!std::isdigit(static_cast<unsigned char>(ch))) return false;
    }
    index = std::stoull(digits);
    return true;
}

}  // namespace

void write_artifact(const ArtifactFile& a, const std::filesystem::path& path) {
    TensorContainer c;
    c.metadata()["format"] = std::string(kArtifactFormat);
    for (const LayerArtifact& la : a.layers) {
        const std::string prefix = layer_prefix(la.layer_index);
        const SharedTucker& st = la.layer.shared;
        c.set(prefix + ".u1", st.u1, Dtype::F64);
        c.set(prefix + ".u2", st.u2, Dtype::F64);
        c.set(prefix + ".u3", st.u3, Dtype::F64);
        c.set(prefix + ".core", st.cores, Dtype::F64);

        nlohmann::json meta;
        meta["d_model"] = la.layer.original_dims.d_model;
        meta["h"] = la.layer.original_dims.h;
        meta["d_v"] = la.layer.original_dims.d_v;
        meta["ranks"] = {la.layer.ranks.r1, la.layer.ranks.r2, la.layer.ranks.r3};
        meta["fit"] = la.layer.fit;
        meta["relative_error"] = la.relative_error;
        meta["iterations"] = la.iterations;
        meta["converged"] = la.converged;
        meta["max_iters"] = la.options.max_iters;
        meta["fit_tolerance"] = la.options.fit_tolerance;
        c.metadata()[prefix] = meta.dump();
    }
    write_container(c, path);
}

ArtifactFile read_artifact(const std::filesystem::path& path) {
    TensorContainer c = read_container(path);
    auto format = c.metadata().find("format");
    if (format == c.metadata().end() || format->second != kArtifactFormat) {
        throw io_error("'" + path.string() + "' is not a compressed-artifact file (format marker '" +
                       std::string(kArtifactFormat) + "' missing)");
    }

    ArtifactFile out;
    for (const auto& [key, value] : c.metadata()) {
        std::size_t index = 0;
        if (!parse_layer_key(key, index)) continue;

        nlohmann::json meta = nlohmann::json::parse(value, nullptr, /*allow_exceptions=*/false);
        if (meta.is_discarded() || !meta.is_object()) {
            throw io_error("artifact metadata for " + key + " is malformed");
        }
        LayerArtifact la;
        la.layer_index = index;
        try {
            la.layer.original_dims.d_model = meta.at("d_model").get<std::size_t>();
            la.layer.original_dims.h = meta.at("h").get<std::size_t>();
            la.layer.original_dims.d_v = meta.at("d_v").get<std::size_t>();
            la.layer.ranks = RankSpec{meta.at("ranks").at(0).get<std::size_t>(),
                                      meta.at("ranks").at(1).get<std::size_t>(),
                                      meta.at("ranks").at(2).get<std::size_t>()};
            la.layer.fit = meta.at("fit").get<double>();
            la.relative_error = meta.at("relative_error").get<double>();
            la.iterations = meta.at("iterations").get<std::size_t>();
            la.converged = meta.at("converged").get<bool>();
            la.options.max_iters = meta.at("max_iters").get<std::size_t>();
            la.options.fit_tolerance = meta.at("fit_tolerance").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw io_error("artifact metadata for " + key + " is incomplete: " + e.what());
        }

        const std::string prefix = layer_prefix(index);
        SharedTucker& st = la.layer.shared;
        st.u1 = c.tensor(prefix + ".u1");
        st.u2 = c.tensor(prefix + ".u2");
        st.u3 = c.tensor(prefix + ".u3");
        st.cores = c.tensor(prefix + ".core");

        const auto& dims = la.layer.original_dims;
        const auto& ranks = la.layer.ranks;
        const bool consistent =
            st.u1.order() == 2 && st.u1.extent(0) == dims.d_model && st.u1.extent(1) == ranks.r1 &&
            st.u2.order() == 2 && st.u2.extent(0) == dims.d_v && st.u2.extent(1) == ranks.r2 &&
            st.u3.order() == 2 && st.u3.extent(0) == 4 && st.u3.extent(1) == ranks.r3 &&
            st.cores.order() == 4 && st.cores.extent(0) == ranks.r1 &&
            st.cores.extent(1) == ranks.r2 && st.cores.extent(2) == ranks.r3 &&
            st.cores.extent(3) == dims.h;
        if (!consistent) {
            throw io_error("artifact tensors for " + key + " do not match their metadata");
        }
        out.layers.push_back(std::move(la));
    }
    std::sort(out.layers.begin(), out.layers.end(),
              [](const LayerArtifact& a, const LayerArtifact& b) {
                  return a.layer_index < b.layer_index;
              });
    return out;
}

}  // namespace mhtc
