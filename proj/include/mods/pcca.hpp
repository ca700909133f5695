#pragma once

#include <string>
#include <vector>

#include "mods/layers.hpp"

namespace mods::pcca {

/// Scaled dot-product attention block with query/key/value/output
/// projections. `heads` splits d into equal slices.
struct AttentionParams {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  std::size_t heads = 1;

  static AttentionParams create(const std::string& name, std::size_t d, std::size_t heads = 1);
  void collect(ParamList& out);
};

/// Query from `query_source`, key/value from `kv_source`; softmax over key
/// positions. `attention`, when given, receives the per-head J_q × J_k weights.
Var cross_attention(Tape& tape, Var kv_source, Var query_source, const AttentionParams& params,
                    std::vector<Tensor>* attention = nullptr, const Dropout& drop = {});
Var self_attention(Tape& tape, Var h, const AttentionParams& params, std::vector<Tensor>* attention = nullptr,
                   const Dropout& drop = {});

struct PccaLayerParams {
  bool backflow = true;  // false for the last layer of a stack

  LayerNormParams ln_p, ln_a1, ln_a2;
  AttentionParams ca_a1_to_p, ca_a2_to_p, sa_p;
  // Present only when backflow is set.
  AttentionParams ca_p_to_a1, ca_p_to_a2;
  LayerNormParams ln_pff_a1, ln_pff_a2;
  FeedForward pff_a1, pff_a2;

  LayerNormParams ln_pff_p;
  FeedForward pff_p;

  static PccaLayerParams create(const std::string& name, std::size_t d, bool backflow, std::size_t heads = 1,
                                std::size_t ff_mult = 4);
  void collect(ParamList& out);
};

struct PccaState {
  Var h_p;
  Var h_a1;
  Var h_a2;
};

// Records which sources fed each attention block of one layer, for
// structural inspection: pairs of (block name, kv source, query source).
struct BlockEdge {
  std::string block;
  std::string kv;
  std::string query;
};

/// One reinforcement layer. With `is_final` the auxiliaries pass through
/// untouched and only the primary is updated.
PccaState pcca_layer(Tape& tape, const PccaState& in, const PccaLayerParams& params, bool is_final,
                     const Dropout& drop = {}, std::vector<BlockEdge>* wiring = nullptr);

std::vector<PccaLayerParams> create_stack(const std::string& name, std::size_t d, std::size_t depth,
                                          std::size_t heads = 1);

/// Applies the layers in order, the last one in final mode. Returns the primary.
Var pcca_stack(Tape& tape, const PccaState& in, const std::vector<PccaLayerParams>& layers, const Dropout& drop = {},
               std::vector<BlockEdge>* wiring = nullptr);

}  // namespace mods::pcca
