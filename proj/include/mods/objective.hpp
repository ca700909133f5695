#pragma once

#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "mods/layers.hpp"

namespace mods::objective {

/// Per-batch vectors for the contrastive term; all K × d.
struct BatchRepresentations {
  Var h_p;
  Var h_l;
  Var h_a;
  Var h_v;
};

/// Reverse prediction map F: d → d → d with ReLU, one per modality term.
struct ReverseMaps {
  FeedForward to_l;
  FeedForward to_a;
  FeedForward to_v;

  static ReverseMaps create(const std::string& name, std::size_t d);
  void collect(ParamList& out);
};

/// S[i, k] = cos(h_m[k], F(h_p[i])) with ε-guarded normalization. K × K.
Var similarity_scores(Tape& tape, Var h_m, Var h_p, const FeedForward& reverse);

/// −(1/K) Σ_i log softmax_k(S[i, ·] / τ)[i]. Returns 1×1.
Var infonce_loss(Var scores, double temperature = 1.0);

Var nce_total(Tape& tape, const BatchRepresentations& batch, const ReverseMaps& maps, double temperature = 1.0);

/// Mean absolute error over K predictions (K × 1 each). Returns 1×1.
Var regression_loss(Var y_pred, Var y_true);

Var total_loss(Var l_reg, Var l_nce, double alpha);

struct MetricReport {
  double mae = 0.0;
  double corr = 0.0;
  double acc2_nonneg = 0.0;
  double acc2_posneg = 0.0;
  double f1_nonneg = 0.0;
  double f1_posneg = 0.0;
  double acc3 = 0.0;
  double acc5 = 0.0;
  double acc7 = 0.0;
  // Set when either series has zero variance; corr is then reported as 0.
  bool corr_degenerate = false;
};

// Class edges on the [-1, 1] scale.
inline constexpr double kNeutralEdge = 0.1;
inline constexpr double kStrongEdge = 0.7;

int acc3_class(double x);
int acc5_class(double x);
// Clamp to [-3, 3] and round half away from zero.
int acc7_class(double x);

/// Labels and predictions are rescaled by R = max(|lo|, |hi|): to [-1, 1]
/// for Acc3/Acc5 and to [-3, 3] for Acc7.
MetricReport compute_metrics(const std::vector<double>& y_pred, const std::vector<double>& y_true,
                             std::array<double, 2> label_range);

// Flat object with the nine metric keys.
nlohmann::ordered_json metrics_to_json(const MetricReport& r);

}  // namespace mods::objective
