#include "mods/pcca.hpp"

#include <cmath>

namespace mods::pcca {

AttentionParams AttentionParams::create(const std::string& name, std::size_t d, std::size_t heads) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide width " + std::to_string(d));
  }
  return AttentionParams{Linear::create(name + ".q", d, d), Linear::create(name + ".k", d, d),
                         Linear::create(name + ".v", d, d), Linear::create(name + ".o", d, d), heads};
}

void AttentionParams::collect(ParamList& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

Var cross_attention(Tape& tape, Var kv_source, Var query_source, const AttentionParams& params,
                    std::vector<Tensor>* attention, const Dropout& drop) {
  if (kv_source.cols() != query_source.cols()) {
    throw DimensionError("cross_attention: widths " + std::to_string(kv_source.cols()) + " and " +
                         std::to_string(query_source.cols()) + " differ");
  }
  Var q = params.query(tape, query_source);
  Var k = params.key(tape, kv_source);
  Var v = params.value(tape, kv_source);
  const std::size_t d = q.cols(), heads = params.heads, dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Var a = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
    if (attention) attention->push_back(a.value());
    outs.push_back(matmul(dropout(a, drop), vh));
  }
  Var merged = heads == 1 ? outs[0] : concat_cols(outs);
  return params.output(tape, merged);
}

Var self_attention(Tape& tape, Var h, const AttentionParams& params, std::vector<Tensor>* attention,
                   const Dropout& drop) {
  return cross_attention(tape, h, h, params, attention, drop);
}

PccaLayerParams PccaLayerParams::create(const std::string& name, std::size_t d, bool backflow, std::size_t heads,
                                        std::size_t ff_mult) {
  PccaLayerParams p;
  p.backflow = backflow;
  p.ln_p = LayerNormParams::create(name + ".ln_p", d);
  p.ln_a1 = LayerNormParams::create(name + ".ln_a1", d);
  p.ln_a2 = LayerNormParams::create(name + ".ln_a2", d);
  p.ca_a1_to_p = AttentionParams::create(name + ".ca_a1_p", d, heads);
  p.ca_a2_to_p = AttentionParams::create(name + ".ca_a2_p", d, heads);
  p.sa_p = AttentionParams::create(name + ".sa_p", d, heads);
  if (backflow) {
    p.ca_p_to_a1 = AttentionParams::create(name + ".ca_p_a1", d, heads);
    p.ca_p_to_a2 = AttentionParams::create(name + ".ca_p_a2", d, heads);
    p.ln_pff_a1 = LayerNormParams::create(name + ".ln_pff_a1", d);
    p.ln_pff_a2 = LayerNormParams::create(name + ".ln_pff_a2", d);
    p.pff_a1 = FeedForward::create(name + ".pff_a1", d, ff_mult * d);
    p.pff_a2 = FeedForward::create(name + ".pff_a2", d, ff_mult * d);
  }
  p.ln_pff_p = LayerNormParams::create(name + ".ln_pff_p", d);
  p.pff_p = FeedForward::create(name + ".pff_p", d, ff_mult * d);
  return p;
}

void PccaLayerParams::collect(ParamList& out) {
  ln_p.collect(out);
  ln_a1.collect(out);
  ln_a2.collect(out);
  ca_a1_to_p.collect(out);
  ca_a2_to_p.collect(out);
  sa_p.collect(out);
  if (backflow) {
    ca_p_to_a1.collect(out);
    ca_p_to_a2.collect(out);
    ln_pff_a1.collect(out);
    ln_pff_a2.collect(out);
    pff_a1.collect(out);
    pff_a2.collect(out);
  }
  ln_pff_p.collect(out);
  pff_p.collect(out);
}

PccaState pcca_layer(Tape& tape, const PccaState& in, const PccaLayerParams& params, bool is_final,
                     const Dropout& drop, std::vector<BlockEdge>* wiring) {
  if (in.h_a1.rows() != in.h_p.rows() || in.h_a2.rows() != in.h_p.rows() || in.h_a1.cols() != in.h_p.cols() ||
      in.h_a2.cols() != in.h_p.cols()) {
    throw DimensionError("pcca_layer: primary and auxiliary sequences must share shape");
  }
  if (!is_final && !params.backflow) throw ConfigError("pcca_layer: layer built without back-flow used as non-final");
  auto note = [wiring](const char* block, const char* kv, const char* query) {
    if (wiring) wiring->push_back(BlockEdge{block, kv, query});
  };

  Var p_ln = params.ln_p(tape, in.h_p);
  Var a1_ln = params.ln_a1(tape, in.h_a1);
  Var a2_ln = params.ln_a2(tape, in.h_a2);

  Var a1_to_p = cross_attention(tape, a1_ln, p_ln, params.ca_a1_to_p, nullptr, drop);
  note("ca_a1_p", "a1", "p");
  Var a2_to_p = cross_attention(tape, a2_ln, p_ln, params.ca_a2_to_p, nullptr, drop);
  note("ca_a2_p", "a2", "p");
  Var p_update = add(self_attention(tape, p_ln, params.sa_p, nullptr, drop), in.h_p);
  note("sa_p", "p", "p");
  Var p_fused = add(add(p_update, a1_to_p), a2_to_p);

  PccaState out;
  if (is_final) {
    out.h_a1 = in.h_a1;
    out.h_a2 = in.h_a2;
  } else {
    Var p_to_a1 = cross_attention(tape, p_fused, in.h_a1, params.ca_p_to_a1, nullptr, drop);
    note("ca_p_a1", "p", "a1");
    Var p_to_a2 = cross_attention(tape, p_fused, in.h_a2, params.ca_p_to_a2, nullptr, drop);
    note("ca_p_a2", "p", "a2");
    out.h_a1 = add(params.pff_a1(tape, params.ln_pff_a1(tape, p_to_a1), drop), p_to_a1);
    out.h_a2 = add(params.pff_a2(tape, params.ln_pff_a2(tape, p_to_a2), drop), p_to_a2);
  }
  out.h_p = add(params.pff_p(tape, params.ln_pff_p(tape, p_fused), drop), p_fused);
  return out;
}

std::vector<PccaLayerParams> create_stack(const std::string& name, std::size_t d, std::size_t depth,
                                          std::size_t heads) {
  if (depth == 0) throw ConfigError("pcca depth must be at least 1");
  std::vector<PccaLayerParams> layers;
  for (std::size_t i = 0; i < depth; ++i) {
    layers.push_back(PccaLayerParams::create(name + "." + std::to_string(i), d, i + 1 < depth, heads));
  }
  return layers;
}

Var pcca_stack(Tape& tape, const PccaState& in, const std::vector<PccaLayerParams>& layers, const Dropout& drop,
               std::vector<BlockEdge>* wiring) {
  if (layers.empty()) throw ConfigError("pcca_stack: at least one layer required");
  PccaState s = in;
  for (std::size_t i = 0; i < layers.size(); ++i) s = pcca_layer(tape, s, layers[i], i + 1 == layers.size(), drop, wiring);
  return s.h_p;
}

}  // namespace mods::pcca
