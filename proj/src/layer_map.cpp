// SPDX-License-Identifier: Apache-2.0
#include "mhtc/layer_map.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mhtc {

namespace {

std::string substitute_layer(const std::string& tmpl, std::size_t layer) {
    const std::string token = "{layer}";
    std::string out = tmpl;
    std::size_t pos = 0;
    while ((pos = out.find(token, pos)) != std::string::npos) {
        const std::string value = std::to_string(layer);
        out.replace(pos, token.size(), value);
        pos += value.size();
    }
    return out;
}

std::string require_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
        throw io_error(std::string("naming config: missing or non-string key '") + key + "'");
    }
    return j[key].get<std::string>();
}

}  // namespace

LayerNamingConfig LayerNamingConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) {
        throw io_error("naming config: malformed JSON");
    }
    LayerNamingConfig cfg;
    cfg.q_template = require_string(j, "q");
    cfg.k_template = require_string(j, "k");
    cfg.v_template = require_string(j, "v");
    cfg.o_template = require_string(j, "o");
    if (!j.contains("n_heads") || !j["n_heads"].is_number_unsigned() ||
        j["n_heads"].get<std::size_t>() < 1) {
        throw io_error("naming config: 'n_heads' must be a positive integer");
    }
    cfg.n_heads = j["n_heads"].get<std::size_t>();
    if (!j.contains("n_layers") || !j["n_layers"].is_number_unsigned() ||
        j["n_layers"].get<std::size_t>() < 1) {
        throw io_error("naming config: 'n_layers' must be a positive integer");
    }
    cfg.n_layers = j["n_layers"].get<std::size_t>();

    if (j.contains("transpose_on_load")) {
        const auto& t = j["transpose_on_load"];
        if (!t.is_object()) {
            throw io_error("naming config: 'transpose_on_load' must be an object");
        }
        auto flag = [&](const char* key, bool& dst) {
            if (t.contains(key)) {
                if (!t[key].is_boolean()) {
                    throw io_error(std::string("naming config: transpose flag '") + key +
                                   "' must be a boolean");
                }
                dst = t[key].get<bool>();
            }
        };
        flag("q", cfg.transpose_on_load.q);
        flag("k", cfg.transpose_on_load.k);
        flag("v", cfg.transpose_on_load.v);
        flag("o", cfg.transpose_on_load.o);
    }

    if (j.contains("rank_overrides")) {
        const auto& overrides = j["rank_overrides"];
        if (!overrides.is_object()) {
            throw io_error("naming config: 'rank_overrides' must map layer indices to rank triples");
        }
        for (const auto& [key, value] : overrides.items()) {
            std::size_t layer = 0;
            try {
                std::size_t consumed = 0;
                layer = std::stoull(key, &consumed);
                if (consumed != key.size()) throw std::invalid_argument(key);
            } catch (const std::exception&) {
                throw io_error("naming config: rank override key '" + key +
                               "' is not a layer index");
            }
            if (!value.is_array() || value.size() != 3 || !value[0].is_number_unsigned() ||
                !value[1].is_number_unsigned() || !value[2].is_number_unsigned()) {
                throw io_error("naming config: rank override for layer " + key +
                               " must be [R1, R2, R3]");
            }
            cfg.rank_overrides[layer] = RankSpec{value[0].get<std::size_t>(),
                                                 value[1].get<std::size_t>(),
                                                 value[2].get<std::size_t>()};
        }
    }
    return cfg;
}

LayerNamingConfig LayerNamingConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open naming config '" + path.string() + "'");
    }
    std::ostringstream text;
    text << in.rdbuf();
    return from_json(text.str());
}

std::string LayerNamingConfig::name_q(std::size_t layer) const {
    return substitute_layer(q_template, layer);
}
std::string LayerNamingConfig::name_k(std::size_t layer) const {
    return substitute_layer(k_template, layer);
}
std::string LayerNamingConfig::name_v(std::size_t layer) const {
    return substitute_layer(v_template, layer);
}
std::string LayerNamingConfig::name_o(std::size_t layer) const {
    return substitute_layer(o_template, layer);
}

namespace {

DenseTensor fetch(const TensorContainer& c, const std::string& name, bool transpose_flag) {
    if (!c.has(name)) {
        throw std::invalid_argument("tensor '" + name + "' not found in checkpoint");
    }
    DenseTensor t = c.tensor(name);
    if (t.order() != 2) {
        throw std::invalid_argument("tensor '" + name + "' must be order-2");
    }
    return transpose_flag ? transpose(t) : t;
}

}  // namespace

MhaLayerWeights load_layer(const TensorContainer& c, const LayerNamingConfig& cfg,
                           std::size_t layer_index) {
    DenseTensor wq = fetch(c, cfg.name_q(layer_index), cfg.transpose_on_load.q);
    DenseTensor wk = fetch(c, cfg.name_k(layer_index), cfg.transpose_on_load.k);
    DenseTensor wv = fetch(c, cfg.name_v(layer_index), cfg.transpose_on_load.v);
    DenseTensor wo = fetch(c, cfg.name_o(layer_index), cfg.transpose_on_load.o);
    return MhaLayerWeights::create(std::move(wq), std::move(wk), std::move(wv), std::move(wo),
                                   cfg.n_heads);
}

void store_layer(TensorContainer& c, const LayerNamingConfig& cfg, std::size_t layer_index,
                 const MhaLayerWeights& w) {
    struct Item {
        std::string name;
        const DenseTensor* matrix;
        bool transpose_flag;
    };
    const Item items[4] = {
        {cfg.name_q(layer_index), &w.wq, cfg.transpose_on_load.q},
        {cfg.name_k(layer_index), &w.wk, cfg.transpose_on_load.k},
        {cfg.name_v(layer_index), &w.wv, cfg.transpose_on_load.v},
        {cfg.name_o(layer_index), &w.wo, cfg.transpose_on_load.o},
    };
    for (const Item& item : items) {
        if (!c.has(item.name)) {
            throw std::invalid_argument("tensor '" + item.name + "' not found in checkpoint");
        }
        const TensorEntry& existing = c.entry(item.name);
        DenseTensor stored = item.transpose_flag ? transpose(*item.matrix) : *item.matrix;
        if (stored.shape() != existing.shape) {
            throw std::invalid_argument("tensor '" + item.name +
                                        "' has a different shape than the weights being stored");
        }
        c.set(item.name, stored, existing.dtype);
    }
}

}  // namespace mhtc
