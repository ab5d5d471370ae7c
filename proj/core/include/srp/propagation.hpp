#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "srp/graph.hpp"
#include "srp/nn.hpp"
#include "srp/random.hpp"

namespace srp {

/// Encoded raw features of every node, per node type (count x width; width 0
/// for featureless types such as R2N dummy tables).
struct NodeInputs {
    std::vector<nn::Tensor> features;
    // Columns zeroed in the seeds' own inputs (level 0 of a block); used to
    // hide label channels of the rows being predicted.
    std::vector<std::vector<std::size_t>> seed_hidden_columns;
};

struct PropagationConfig {
    std::size_t hidden = 32;
    std::size_t layers = 2;
    double dropout = 0.0;
};

/// One message-passing layer: per edge type W_r, self weight W_0 and a bias.
struct RelationalLayer {
    nn::Parameter self_weight;
    std::vector<nn::Parameter> edge_weights;
    nn::Parameter bias;
};

/// RGCN-style propagation:
///   h^l_v = act(W_0 h^{l-1}_v + sum_r mean_{u in N_r(v)} W_r h^{l-1}_u + b)
/// with relu on hidden layers and identity on the last one.
class Propagator {
  public:
    /// `input_widths[t]` is the raw feature width of node type t.
    Propagator(std::vector<std::size_t> input_widths, std::size_t edge_types, const PropagationConfig& config,
               Rng& rng);

    const PropagationConfig& config() const { return config_; }
    std::size_t hidden() const { return config_.hidden; }
    std::size_t edge_type_count() const { return edge_types_; }

    std::vector<nn::Parameter*> parameters();
    std::vector<RelationalLayer>& layers() { return layers_; }

    /// Projects every block node's raw features to the hidden width; rows
    /// follow block node order.
    nn::Var init_node_inputs(nn::Tape& tape, const SampledBlock& block, const NodeInputs& inputs);

    /// Layer `l` (1-based) over node states of levels 0..L-l+1; returns states
    /// of levels 0..L-l.
    nn::Var layer_forward(nn::Tape& tape, std::size_t l, const SampledBlock& block, nn::Var states,
                          Rng* dropout_rng);

    /// H_c: the seeds' final states (seed_count x hidden). Dropout is applied
    /// only when `dropout_rng` is given.
    nn::Var propagate(nn::Tape& tape, const SampledBlock& block, const NodeInputs& inputs, Rng* dropout_rng = nullptr);

  private:
    PropagationConfig config_;
    std::size_t edge_types_ = 0;
    std::vector<std::size_t> input_widths_;
    std::vector<nn::Parameter> projections_;  // per type: width x hidden, or 1 x hidden constant when width is 0
    std::vector<nn::Parameter> projection_bias_;
    std::vector<RelationalLayer> layers_;
};

}  // namespace srp
