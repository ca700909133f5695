#pragma once

#include <array>
#include <string>

#include "mods/dataio.hpp"
#include "mods/layers.hpp"

namespace mods::mselector {

// Weight vectors are ordered (a, l, v), the concatenation order of the MLP
// input. The language weight is called w_t in some write-ups; it is w_l here.
inline constexpr std::array<Modality, 3> kWeightOrder = {Modality::acoustic, Modality::language, Modality::visual};
std::size_t weight_index(Modality m);

/// Attention pooling over timesteps with a single learned score vector.
struct AggregationParams {
  Parameter score;  // d × 1

  static AggregationParams create(const std::string& name, std::size_t d);
  void collect(ParamList& out) { out.push_back(&score); }
};

/// a = softmax(H·W / √d)ᵀ, h = a·H. Returns 1 × d.
Var adaptive_aggregate(Tape& tape, Var sequence, const AggregationParams& params);
// Same, also returning the 1 × T attention weights.
Var adaptive_aggregate(Tape& tape, Var sequence, const AggregationParams& params, Var* attention);

struct MSelectorParams {
  AggregationParams agg_a;
  AggregationParams agg_l;
  AggregationParams agg_v;
  Linear hidden;  // 3d → d
  Linear logits;  // d → 3, zero-initialized weight so initial weights are uniform

  static MSelectorParams create(const std::string& name, std::size_t d);
  void collect(ParamList& out);
  const AggregationParams& aggregation(Modality m) const;
};

/// softmax(MLP(concat(h_a, h_l, h_v))) as a 1 × 3 row in (a, l, v) order.
Var modality_weights(Tape& tape, Var h_a, Var h_l, Var h_v, const MSelectorParams& params);
// Logits before the softmax, same order.
Var modality_logits(Tape& tape, Var h_a, Var h_l, Var h_v, const MSelectorParams& params);

struct SelectionOutcome {
  // (w_a, w_l, w_v)
  std::array<double, 3> weights{};
  Modality primary = Modality::language;
  // Modality occupying the p, a1, a2 slots.
  std::array<Modality, 3> roles{};
  Var h_p;
  Var h_a1;
  Var h_a2;
  Var weight_row;  // 1 × 3, differentiable

  double weight(Modality m) const { return weights[weight_index(m)]; }
};

/// Argmax with tie priority l > a > v.
Modality argmax_primary(const std::array<double, 3>& weights);
/// Primary first, then the auxiliaries by descending weight (ties by the same priority).
std::array<Modality, 3> rank_modalities(const std::array<double, 3>& weights);

/// Scales every sequence by its own weight and binds p/a1/a2 by rank.
SelectionOutcome select_primary(Var weight_row, Var h_a, Var h_l, Var h_v);

}  // namespace mods::mselector
