#include "srp/propagation.hpp"

#include <string>

#include "srp/errors.hpp"

namespace srp {

Propagator::Propagator(std::vector<std::size_t> input_widths, std::size_t edge_types, const PropagationConfig& config,
                       Rng& rng)
    : config_(config), edge_types_(edge_types), input_widths_(std::move(input_widths)) {
    if (config_.hidden == 0 || config_.layers == 0) {
        throw ConfigError("propagation needs a positive hidden width and layer count");
    }
    const std::size_t d = config_.hidden;
    projections_.reserve(input_widths_.size());
    projection_bias_.reserve(input_widths_.size());
    for (std::size_t t = 0; t < input_widths_.size(); ++t) {
        const std::size_t w = input_widths_[t];
        projections_.emplace_back("prop.input" + std::to_string(t) + ".weight", w == 0 ? 1 : w, d);
        glorot_uniform(projections_.back(), rng);
        projection_bias_.emplace_back("prop.input" + std::to_string(t) + ".bias", 1, d);
    }
    layers_.resize(config_.layers);
    for (std::size_t l = 0; l < config_.layers; ++l) {
        RelationalLayer& layer = layers_[l];
        const std::string prefix = "prop.layer" + std::to_string(l + 1);
        layer.self_weight = nn::Parameter(prefix + ".self", d, d);
        glorot_uniform(layer.self_weight, rng);
        layer.edge_weights.reserve(edge_types_);
        for (std::size_t r = 0; r < edge_types_; ++r) {
            layer.edge_weights.emplace_back(prefix + ".edge" + std::to_string(r), d, d);
            glorot_uniform(layer.edge_weights.back(), rng);
        }
        layer.bias = nn::Parameter(prefix + ".bias", 1, d);
    }
}

std::vector<nn::Parameter*> Propagator::parameters() {
    std::vector<nn::Parameter*> out;
    for (std::size_t t = 0; t < projections_.size(); ++t) {
        out.push_back(&projections_[t]);
        out.push_back(&projection_bias_[t]);
    }
    for (auto& layer : layers_) {
        out.push_back(&layer.self_weight);
        for (auto& w : layer.edge_weights) {
            out.push_back(&w);
        }
        out.push_back(&layer.bias);
    }
    return out;
}

nn::Var Propagator::init_node_inputs(nn::Tape& tape, const SampledBlock& block, const NodeInputs& inputs) {
    if (inputs.features.size() != input_widths_.size()) {
        throw ConfigError("node inputs do not cover every node type");
    }
    const std::size_t d = config_.hidden;
    if (block.nodes.empty()) {
        return tape.constant(nn::Tensor(0, d));
    }
    const std::size_t seeds = block.seed_count();
    std::vector<std::vector<std::size_t>> members(input_widths_.size());
    for (std::size_t i = 0; i < block.nodes.size(); ++i) {
        members.at(block.nodes[i].type).push_back(i);
    }
    std::vector<nn::Var> parts;
    std::vector<std::size_t> position(block.nodes.size());
    std::size_t row = 0;
    for (std::size_t t = 0; t < members.size(); ++t) {
        if (members[t].empty()) {
            continue;
        }
        const std::size_t w = input_widths_[t];
        nn::Var part;
        if (w == 0) {
            part = nn::broadcast_rows(tape.parameter(projections_[t]), members[t].size());
            part = nn::add_row(part, tape.parameter(projection_bias_[t]));
        } else {
            const nn::Tensor& feats = inputs.features[t];
            if (feats.cols() != w) {
                throw ConfigError("node feature width mismatch for node type " + std::to_string(t));
            }
            nn::Tensor x(members[t].size(), w);
            const std::vector<std::size_t>* hidden =
                t < inputs.seed_hidden_columns.size() ? &inputs.seed_hidden_columns[t] : nullptr;
            for (std::size_t k = 0; k < members[t].size(); ++k) {
                const std::size_t node = members[t][k];
                auto src = feats.row(block.nodes[node].id);
                std::copy(src.begin(), src.end(), x.row(k).begin());
                if (node < seeds && hidden != nullptr) {
                    for (std::size_t c : *hidden) {
                        x(k, c) = 0.0;
                    }
                }
            }
            part = nn::linear(tape.constant(std::move(x)), tape.parameter(projections_[t]),
                              tape.parameter(projection_bias_[t]));
        }
        for (std::size_t node : members[t]) {
            position[node] = row++;
        }
        parts.push_back(part);
    }
    nn::Var stacked = parts.size() == 1 ? parts[0] : nn::concat_rows(parts);
    return nn::gather_rows(stacked, position);
}

nn::Var Propagator::layer_forward(nn::Tape& tape, std::size_t l, const SampledBlock& block, nn::Var states,
                                  Rng* dropout_rng) {
    const std::size_t L = config_.layers;
    if (l == 0 || l > L || block.layers != L) {
        throw ConfigError("block depth does not match the layer count");
    }
    RelationalLayer& layer = layers_[l - 1];
    const std::size_t n_out = block.level_offsets[L - l + 1];
    std::vector<std::size_t> self_rows(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        self_rows[i] = i;
    }
    nn::Var self = states.rows() == n_out ? states : nn::gather_rows(states, self_rows);
    nn::Var out = nn::matmul(self, tape.parameter(layer.self_weight));

    // Aggregate first, then transform: mean_u(W h_u) = W mean_u(h_u). Only the
    // destinations that have neighbors of a type take part in its product.
    std::vector<std::vector<std::size_t>> src(edge_types_), dst(edge_types_);
    for (const BlockEdge& e : block.edges) {
        if (e.dst < n_out) {
            src[e.type].push_back(e.src);
            dst[e.type].push_back(e.dst);
        }
    }
    for (std::size_t r = 0; r < edge_types_; ++r) {
        if (src[r].empty()) {
            continue;
        }
        std::vector<std::size_t> compact(dst[r].size());
        std::vector<std::size_t> targets;
        std::vector<std::size_t> slot(n_out, SIZE_MAX);
        for (std::size_t e = 0; e < dst[r].size(); ++e) {
            if (slot[dst[r][e]] == SIZE_MAX) {
                slot[dst[r][e]] = targets.size();
                targets.push_back(dst[r][e]);
            }
            compact[e] = slot[dst[r][e]];
        }
        nn::Var mean = nn::segment_mean(states, src[r], compact, targets.size());
        nn::Var msg = nn::matmul(mean, tape.parameter(layer.edge_weights[r]));
        std::vector<std::size_t> identity(targets.size());
        for (std::size_t i = 0; i < identity.size(); ++i) {
            identity[i] = i;
        }
        out = nn::add(out, nn::segment_mean(msg, identity, targets, n_out));
    }
    out = nn::add_row(out, tape.parameter(layer.bias));
    if (l < L) {
        out = nn::relu(out);
        if (dropout_rng != nullptr && config_.dropout > 0.0) {
            out = nn::dropout(out, config_.dropout, *dropout_rng);
        }
    }
    return out;
}

nn::Var Propagator::propagate(nn::Tape& tape, const SampledBlock& block, const NodeInputs& inputs, Rng* dropout_rng) {
    if (block.layers != config_.layers) {
        throw ConfigError("block depth " + std::to_string(block.layers) + " does not match " +
                          std::to_string(config_.layers) + " layers");
    }
    if (block.nodes.empty()) {
        return tape.constant(nn::Tensor(0, config_.hidden));
    }
    nn::Var h = init_node_inputs(tape, block, inputs);
    for (std::size_t l = 1; l <= config_.layers; ++l) {
        h = layer_forward(tape, l, block, h, dropout_rng);
    }
    return h;
}

}  // namespace srp
