#include "mods/mselector.hpp"

#include <algorithm>
#include <cmath>

namespace mods::mselector {

std::size_t weight_index(Modality m) {
  switch (m) {
    case Modality::acoustic:
      return 0;
    case Modality::language:
      return 1;
    case Modality::visual:
      return 2;
  }
  return 1;
}

AggregationParams AggregationParams::create(const std::string& name, std::size_t d) {
  return AggregationParams{make_param(name + ".score", {d, 1}, ParamInit::fan_in_uniform, d)};
}

Var adaptive_aggregate(Tape& tape, Var sequence, const AggregationParams& params) {
  return adaptive_aggregate(tape, sequence, params, nullptr);
}

Var adaptive_aggregate(Tape& tape, Var sequence, const AggregationParams& params, Var* attention) {
  const std::size_t d = sequence.cols();
  if (params.score.value.dim(0) != d) {
    throw DimensionError("adaptive_aggregate: score width " + std::to_string(params.score.value.dim(0)) +
                         " vs sequence width " + std::to_string(d));
  }
  Var scores = scale(matmul(sequence, tape.param(params.score)), 1.0 / std::sqrt(static_cast<double>(d)));
  Var a = softmax_rows(transpose(scores));
  if (attention) *attention = a;
  return matmul(a, sequence);
}

MSelectorParams MSelectorParams::create(const std::string& name, std::size_t d) {
  return MSelectorParams{
      AggregationParams::create(name + ".agg_a", d),
      AggregationParams::create(name + ".agg_l", d),
      AggregationParams::create(name + ".agg_v", d),
      Linear::create(name + ".mlp0", 3 * d, d),
      Linear::create(name + ".mlp1", d, 3, /*zero_weight=*/true),
  };
}

void MSelectorParams::collect(ParamList& out) {
  agg_a.collect(out);
  agg_l.collect(out);
  agg_v.collect(out);
  hidden.collect(out);
  logits.collect(out);
}

const AggregationParams& MSelectorParams::aggregation(Modality m) const {
  switch (m) {
    case Modality::acoustic:
      return agg_a;
    case Modality::visual:
      return agg_v;
    case Modality::language:
      break;
  }
  return agg_l;
}

Var modality_logits(Tape& tape, Var h_a, Var h_l, Var h_v, const MSelectorParams& params) {
  if (h_a.cols() != h_l.cols() || h_v.cols() != h_l.cols()) throw DimensionError("modality_weights: width mismatch");
  Var parts[] = {h_a, h_l, h_v};
  return params.logits(tape, relu(params.hidden(tape, concat_cols(parts))));
}

Var modality_weights(Tape& tape, Var h_a, Var h_l, Var h_v, const MSelectorParams& params) {
  return softmax_rows(modality_logits(tape, h_a, h_l, h_v, params));
}

namespace {

// Lower is preferred on ties.
int priority(Modality m) {
  switch (m) {
    case Modality::language:
      return 0;
    case Modality::acoustic:
      return 1;
    case Modality::visual:
      return 2;
  }
  return 3;
}

}  // namespace

std::array<Modality, 3> rank_modalities(const std::array<double, 3>& weights) {
  std::array<Modality, 3> order = {Modality::language, Modality::acoustic, Modality::visual};
  std::stable_sort(order.begin(), order.end(), [&](Modality x, Modality y) {
    const double wx = weights[weight_index(x)], wy = weights[weight_index(y)];
    if (wx != wy) return wx > wy;
    return priority(x) < priority(y);
  });
  return order;
}

Modality argmax_primary(const std::array<double, 3>& weights) { return rank_modalities(weights)[0]; }

SelectionOutcome select_primary(Var weight_row, Var h_a, Var h_l, Var h_v) {
  if (weight_row.rows() != 1 || weight_row.cols() != 3) throw DimensionError("select_primary: weights must be 1x3");
  SelectionOutcome out;
  out.weight_row = weight_row;
  for (std::size_t k = 0; k < 3; ++k) out.weights[k] = weight_row.value()(0, k);
  out.roles = rank_modalities(out.weights);
  out.primary = out.roles[0];
  auto scaled = [&](Modality m) {
    Var h = m == Modality::acoustic ? h_a : (m == Modality::language ? h_l : h_v);
    return mul_scalar(h, element(weight_row, 0, weight_index(m)));
  };
  out.h_p = scaled(out.roles[0]);
  out.h_a1 = scaled(out.roles[1]);
  out.h_a2 = scaled(out.roles[2]);
  return out;
}

}  // namespace mods::mselector
