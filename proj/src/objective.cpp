#include "mods/objective.hpp"

#include <algorithm>
#include <cmath>

namespace mods::objective {

ReverseMaps ReverseMaps::create(const std::string& name, std::size_t d) {
  return ReverseMaps{FeedForward::create(name + ".to_l", d, d), FeedForward::create(name + ".to_a", d, d),
                     FeedForward::create(name + ".to_v", d, d)};
}

void ReverseMaps::collect(ParamList& out) {
  to_l.collect(out);
  to_a.collect(out);
  to_v.collect(out);
}

Var similarity_scores(Tape& tape, Var h_m, Var h_p, const FeedForward& reverse) {
  if (h_m.rows() != h_p.rows() || h_m.cols() != h_p.cols()) {
    throw DimensionError("similarity_scores: h_m and h_p must both be K x d");
  }
  Var predicted = l2_normalize_rows(reverse(tape, h_p), 1e-8);
  return matmul_nt(predicted, l2_normalize_rows(h_m, 1e-8));
}

Var infonce_loss(Var scores, double temperature) {
  if (temperature <= 0.0) throw ConfigError("infonce temperature must be positive");
  const Tensor& s = scores.value();
  const std::size_t K = s.rows();
  if (s.cols() != K) throw DimensionError("infonce_loss: score matrix must be square, got " + shape_string(s.shape()));
  // Row softmax of S/τ, kept for the backward pass.
  Tensor soft({K, K});
  double loss = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    double mx = s(i, 0) / temperature;
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, s(i, k) / temperature);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      soft(i, k) = std::exp(s(i, k) / temperature - mx);
      z += soft(i, k);
    }
    for (std::size_t k = 0; k < K; ++k) soft(i, k) /= z;
    loss -= s(i, i) / temperature - mx - std::log(z);
  }
  loss /= static_cast<double>(K);
  return scores.tape().push("infonce", Tensor::scalar(loss), {scores},
                            [scores, soft = std::move(soft), K, temperature](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gs = t.grad_mut(scores);
    const double c = g[0] / (static_cast<double>(K) * temperature);
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t k = 0; k < K; ++k) gs(i, k) += c * (soft(i, k) - (i == k ? 1.0 : 0.0));
  });
}

Var nce_total(Tape& tape, const BatchRepresentations& batch, const ReverseMaps& maps, double temperature) {
  Var l = infonce_loss(similarity_scores(tape, batch.h_l, batch.h_p, maps.to_l), temperature);
  Var a = infonce_loss(similarity_scores(tape, batch.h_a, batch.h_p, maps.to_a), temperature);
  Var v = infonce_loss(similarity_scores(tape, batch.h_v, batch.h_p, maps.to_v), temperature);
  return add(add(l, a), v);
}

Var regression_loss(Var y_pred, Var y_true) {
  if (y_pred.rows() != y_true.rows() || y_pred.cols() != y_true.cols()) {
    throw DimensionError("regression_loss: " + shape_string(y_pred.value().shape()) + " vs " +
                         shape_string(y_true.value().shape()));
  }
  return mean(abs(sub(y_true, y_pred)));
}

Var total_loss(Var l_reg, Var l_nce, double alpha) {
  if (alpha < 0.0) throw ConfigError("alpha must be nonnegative");
  return add(l_reg, scale(l_nce, alpha));
}

int acc3_class(double x) {
  if (x < -kNeutralEdge) return 0;
  if (x > kNeutralEdge) return 2;
  return 1;
}

int acc5_class(double x) {
  if (x < -kStrongEdge) return 0;
  if (x < -kNeutralEdge) return 1;
  if (x <= kNeutralEdge) return 2;
  if (x <= kStrongEdge) return 3;
  return 4;
}

int acc7_class(double x) { return static_cast<int>(std::round(std::clamp(x, -3.0, 3.0))); }

namespace {

// Support-weighted F1 over the two classes of a binary labelling.
double weighted_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (truth.empty()) return 0.0;
  double total = 0.0;
  for (int cls : {0, 1}) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool p = pred[i] == cls, t = truth[i] == cls;
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
      support += t;
    }
    const double denom = 2 * tp + fp + fn;
    const double f1 = denom > 0 ? 2 * tp / denom : 0.0;
    total += f1 * support;
  }
  return total / static_cast<double>(truth.size());
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace

MetricReport compute_metrics(const std::vector<double>& y_pred, const std::vector<double>& y_true,
                             std::array<double, 2> label_range) {
  if (y_pred.size() != y_true.size()) throw DimensionError("compute_metrics: prediction/label count mismatch");
  if (y_true.empty()) throw DataError("compute_metrics: empty split");
  const double R = std::max(std::fabs(label_range[0]), std::fabs(label_range[1]));
  if (!(R > 0.0)) throw ConfigError("compute_metrics: degenerate label range");
  const std::size_t n = y_true.size();
  MetricReport r;

  double mp = 0, mt = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r.mae += std::fabs(y_pred[i] - y_true[i]);
    mp += y_pred[i];
    mt += y_true[i];
  }
  r.mae /= static_cast<double>(n);
  mp /= static_cast<double>(n);
  mt /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (y_pred[i] - mp) * (y_true[i] - mt);
    sxx += (y_pred[i] - mp) * (y_pred[i] - mp);
    syy += (y_true[i] - mt) * (y_true[i] - mt);
  }
  if (n < 2 || sxx <= 1e-24 || syy <= 1e-24) {
    r.corr = 0.0;
    r.corr_degenerate = true;
  } else {
    r.corr = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  }

  std::vector<int> p2, t2, p2nz, t2nz, p3, t3, p5, t5, p7, t7;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = y_pred[i], t = y_true[i];
    p2.push_back(p >= 0);
    t2.push_back(t >= 0);
    if (t != 0.0) {
      p2nz.push_back(p > 0);
      t2nz.push_back(t > 0);
    }
    p3.push_back(acc3_class(p / R));
    t3.push_back(acc3_class(t / R));
    p5.push_back(acc5_class(p / R));
    t5.push_back(acc5_class(t / R));
    p7.push_back(acc7_class(3.0 * p / R));
    t7.push_back(acc7_class(3.0 * t / R));
  }
  r.acc2_nonneg = accuracy(p2, t2);
  r.f1_nonneg = weighted_f1(p2, t2);
  r.acc2_posneg = accuracy(p2nz, t2nz);
  r.f1_posneg = weighted_f1(p2nz, t2nz);
  r.acc3 = accuracy(p3, t3);
  r.acc5 = accuracy(p5, t5);
  r.acc7 = accuracy(p7, t7);
  return r;
}

nlohmann::ordered_json metrics_to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["mae"] = r.mae;
  j["corr"] = r.corr;
  j["acc2_nonneg"] = r.acc2_nonneg;
  j["acc2_posneg"] = r.acc2_posneg;
  j["f1_nonneg"] = r.f1_nonneg;
  j["f1_posneg"] = r.f1_posneg;
  j["acc3"] = r.acc3;
  j["acc5"] = r.acc5;
  j["acc7"] = r.acc7;
  return j;
}

}  // namespace mods::objective
