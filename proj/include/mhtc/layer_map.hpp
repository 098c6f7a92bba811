// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>

#include "mhtc/container.hpp"
#include "mhtc/mha.hpp"
#include "mhtc/tucker.hpp"

namespace mhtc {

/// Maps container tensor names onto the four per-layer projection matrices.
/// Templates substitute "{layer}" with the decimal layer index. Transpose
/// flags reorient checkpoints that store matrices out-features-first.
struct LayerNamingConfig {
    std::string q_template;
    std::string k_template;
    std::string v_template;
    std::string o_template;

    struct TransposeFlags {
        bool q = false;
        bool k = false;
        bool v = false;
        bool o = false;
    } transpose_on_load;

    std::size_t n_heads = 1;
    std::size_t n_layers = 1;

    /// Optional per-layer rank overrides, keyed by layer index.
    std::map<std::size_t, RankSpec> rank_overrides;

    static LayerNamingConfig from_json(const std::string& text);
    static LayerNamingConfig from_json_file(const std::filesystem::path& path);

    std::string name_q(std::size_t layer) const;
    std::string name_k(std::size_t layer) const;
    std::string name_v(std::size_t layer) const;
    std::string name_o(std::size_t layer) const;
};

/// Loads one layer's weights in forward-pass orientation, applying the
/// configured transposes. Throws std::invalid_argument when a name is
/// missing or shapes are inconsistent with n_heads.
MhaLayerWeights load_layer(const TensorContainer& c, const LayerNamingConfig& cfg,
                           std::size_t layer_index);

/// Overwrites exactly the four tensors of one layer (inverse transposes
/// applied, payloads re-encoded at each entry's original dtype). All other
/// entries are left byte-identical.
void store_layer(TensorContainer& c, const LayerNamingConfig& cfg, std::size_t layer_index,
                 const MhaLayerWeights& w);

}  // namespace mhtc
