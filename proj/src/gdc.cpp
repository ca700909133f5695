#include "mods/gdc.hpp"

#include <cmath>

namespace mods::gdc {

std::string capsule_mode_name(CapsuleMode m) { return m == CapsuleMode::shared ? "shared" : "full"; }

CapsuleMode parse_capsule_mode(const std::string& s) {
  if (s == "shared") return CapsuleMode::shared;
  if (s == "full") return CapsuleMode::full;
  throw ConfigError("unknown capsule mode '" + s + "'");
}

GdcParams GdcParams::create(const std::string& name, const GdcConfig& cfg) {
  if (cfg.in_dim == 0 || cfg.hidden == 0 || cfg.max_nodes == 0) throw ConfigError("gdc dimensions must be positive");
  if (cfg.routing_iters == 0) throw ConfigError("routing_iters must be at least 1");
  GdcParams p;
  p.config = cfg;
  Shape caps_shape = cfg.mode == CapsuleMode::shared ? Shape{cfg.max_nodes, cfg.in_dim, cfg.hidden}
                                                     : Shape{cfg.max_len, cfg.max_nodes, cfg.in_dim, cfg.hidden};
  p.capsules = make_param(name + ".capsules", caps_shape, ParamInit::fan_in_uniform, cfg.in_dim);
  p.edge_query = make_param(name + ".edge_query", {cfg.hidden, cfg.hidden}, ParamInit::fan_in_uniform, cfg.hidden);
  p.edge_key = make_param(name + ".edge_key", {cfg.hidden, cfg.hidden}, ParamInit::fan_in_uniform, cfg.hidden);
  for (std::size_t l = 0; l < cfg.gcn_layers; ++l) {
    p.gcn.push_back(Linear::create(name + ".gcn" + std::to_string(l), cfg.hidden, cfg.hidden));
  }
  return p;
}

void GdcParams::collect(ParamList& out) {
  out.push_back(&capsules);
  out.push_back(&edge_query);
  out.push_back(&edge_key);
  for (auto& l : gcn) l.collect(out);
}

Tensor CapsuleBank::capsule(std::size_t i, std::size_t j) const {
  Tensor c({dim});
  const Tensor& v = votes.value();
  for (std::size_t k = 0; k < dim; ++k) c[k] = v(i, j * dim + k);
  return c;
}

CapsuleBank build_capsules(Tape& tape, Var sequence, const GdcParams& params, std::size_t nodes) {
  const GdcConfig& cfg = params.config;
  // Registering the parameter may grow the tape, so take value references after it.
  Var w = tape.param(params.capsules);
  const Tensor& h = sequence.value();
  const std::size_t T = h.rows(), dm = h.cols(), d = cfg.hidden;
  if (dm != cfg.in_dim) {
    throw DimensionError("gdc: feature width " + std::to_string(dm) + " does not match configured " +
                         std::to_string(cfg.in_dim));
  }
  if (nodes == 0 || nodes > cfg.max_nodes) {
    throw DimensionError("gdc: node count " + std::to_string(nodes) + " outside [1, " + std::to_string(cfg.max_nodes) + "]");
  }
  if (cfg.mode == CapsuleMode::full && T > cfg.max_len) {
    throw DimensionError("gdc: sequence length " + std::to_string(T) + " exceeds full-mode capsule limit " +
                         std::to_string(cfg.max_len));
  }
  const bool full = cfg.mode == CapsuleMode::full;
  const std::size_t max_nodes = cfg.max_nodes;
  // Flat offset of W^{ij} (a d_m × d block).
  auto block = [full, max_nodes, dm, d](std::size_t i, std::size_t j) {
    return (full ? (i * max_nodes + j) : j) * dm * d;
  };

  Tensor out({T, nodes * d});
  const Tensor& wv = w.value();
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < nodes; ++j) {
      const double* wb = wv.values().data() + block(i, j);
      double* o = &out(i, j * d);
      for (std::size_t c = 0; c < dm; ++c) {
        const double hv = h(i, c);
        for (std::size_t k = 0; k < d; ++k) o[k] += hv * wb[c * d + k];
      }
    }
  }
  Var votes = tape.push("capsule_votes", std::move(out), {sequence, w},
                        [sequence, w, block, T, nodes, dm, d](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& hv = t.value(sequence);
    const Tensor& wv = t.value(w);
    const bool need_h = t.needs_grad(sequence);
    const bool need_w = t.needs_grad(w);
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t j = 0; j < nodes; ++j) {
        const std::size_t off = block(i, j);
        const double* gr = g.values().data() + i * nodes * d + j * d;
        for (std::size_t c = 0; c < dm; ++c) {
          if (need_h) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) acc += gr[k] * wv[off + c * d + k];
            t.grad_mut(sequence)[i * dm + c] += acc;
          }
          if (need_w) {
            Tensor& gw = t.grad_mut(w);
            const double x = hv[i * dm + c];
            for (std::size_t k = 0; k < d; ++k) gw[off + c * d + k] += x * gr[k];
          }
        }
      }
    }
  });
  return CapsuleBank{votes, T, nodes, d};
}

Var route_nodes(Var votes, Var coefficients, std::size_t dim) {
  const Tensor& u = votes.value();
  const Tensor& r = coefficients.value();
  const std::size_t T = r.rows(), J = r.cols();
  if (u.rows() != T || u.cols() != J * dim) throw DimensionError("route_nodes: votes/coefficients mismatch");
  Tensor out({J, dim});
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      const double rij = r(i, j);
      for (std::size_t k = 0; k < dim; ++k) out(j, k) += rij * u(i, j * dim + k);
    }
  return votes.tape().push("route_nodes", std::move(out), {votes, coefficients},
                           [votes, coefficients, T, J, dim](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& u = t.value(votes);
    const Tensor& r = t.value(coefficients);
    if (t.needs_grad(votes)) {
      Tensor& gu = t.grad_mut(votes);
      for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t k = 0; k < dim; ++k) gu(i, j * dim + k) += r(i, j) * g(j, k);
    }
    if (t.needs_grad(coefficients)) {
      Tensor& gr = t.grad_mut(coefficients);
      for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < J; ++j) {
          double acc = 0.0;
          for (std::size_t k = 0; k < dim; ++k) acc += u(i, j * dim + k) * g(j, k);
          gr(i, j) += acc;
        }
    }
  });
}

Var route_agreement(Var votes, Var node_values) {
  const Tensor& u = votes.value();
  const Tensor& v = node_values.value();
  const std::size_t J = v.rows(), dim = v.cols(), T = u.rows();
  if (u.cols() != J * dim) throw DimensionError("route_agreement: votes/nodes mismatch");
  Tensor out({T, J});
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < dim; ++k) acc += u(i, j * dim + k) * v(j, k);
      out(i, j) = acc;
    }
  return votes.tape().push("route_agreement", std::move(out), {votes, node_values},
                           [votes, node_values, T, J, dim](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& u = t.value(votes);
    const Tensor& v = t.value(node_values);
    if (t.needs_grad(votes)) {
      Tensor& gu = t.grad_mut(votes);
      for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t k = 0; k < dim; ++k) gu(i, j * dim + k) += g(i, j) * v(j, k);
    }
    if (t.needs_grad(node_values)) {
      Tensor& gv = t.grad_mut(node_values);
      for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t k = 0; k < dim; ++k) gv(j, k) += g(i, j) * u(i, j * dim + k);
    }
  });
}

RoutingState dynamic_routing(const CapsuleBank& bank, std::size_t iters, std::vector<Tensor>* trace) {
  if (iters == 0) throw ConfigError("dynamic_routing: iters must be at least 1");
  Tape& tape = bank.votes.tape();
  RoutingState state;
  state.logits = tape.constant(Tensor({bank.steps, bank.nodes}, 0.0));
  for (std::size_t it = 0; it < iters; ++it) {
    state.coefficients = softmax_rows(state.logits);
    if (trace) trace->push_back(state.coefficients.value());
    state.nodes = route_nodes(bank.votes, state.coefficients, bank.dim);
    state.logits = add(state.logits, route_agreement(bank.votes, tanh(state.nodes)));
  }
  return state;
}

std::pair<std::size_t, std::size_t> slice_bounds(std::size_t steps, std::size_t nodes, std::size_t j) {
  const std::size_t start = (j * steps) / nodes;
  const std::size_t end = ((j + 1) * steps + nodes - 1) / nodes;
  return {start, std::max(end, start + 1)};
}

Tensor slice_pooling_matrix(std::size_t steps, std::size_t nodes) {
  Tensor p({nodes, steps});
  for (std::size_t j = 0; j < nodes; ++j) {
    auto [s, e] = slice_bounds(steps, nodes, j);
    for (std::size_t i = s; i < e; ++i) p(j, i) = 1.0 / static_cast<double>(e - s);
  }
  return p;
}

RoutingState slice_average_routing(const CapsuleBank& bank) {
  Tape& tape = bank.votes.tape();
  // r[i, j] = 1/|slice j| for timesteps inside slice j.
  Tensor r = transpose(tape.constant(slice_pooling_matrix(bank.steps, bank.nodes))).value();
  RoutingState state;
  state.logits = tape.constant(Tensor({bank.steps, bank.nodes}, 0.0));
  state.coefficients = tape.constant(std::move(r));
  state.nodes = route_nodes(bank.votes, state.coefficients, bank.dim);
  return state;
}

Var build_edges(Var nodes, Var query_weight, Var key_weight) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(nodes.cols()));
  Var q = matmul_nt(nodes, query_weight);
  Var k = matmul_nt(nodes, key_weight);
  return relu(scale(matmul_nt(q, k), inv_sqrt_d));
}

Var gcn_layer(Var features, Var edges, Var weight, Var bias) {
  Tape& tape = edges.tape();
  const std::size_t J = edges.rows();
  if (edges.cols() != J || features.rows() != J) throw DimensionError("gcn_layer: edges must be JxJ matching features");
  Var looped = add(edges, tape.constant(Tensor::identity(J)));
  Var inv_sqrt_deg = pow(row_sums(looped), -0.5);
  Var normalized = mul(looped, matmul_nt(inv_sqrt_deg, inv_sqrt_deg));
  return relu(add_bias(matmul(matmul(normalized, features), weight), bias));
}

ModalityGraph build_graph(Tape& tape, const RoutingState& routing, const GdcParams& params) {
  return ModalityGraph{routing.nodes,
                       build_edges(routing.nodes, tape.param(params.edge_query), tape.param(params.edge_key))};
}

Var compress_sequence(Tape& tape, Var sequence, const GdcParams& params, std::size_t nodes, bool slice_nodes) {
  CapsuleBank bank = build_capsules(tape, sequence, params, nodes);
  RoutingState routing = slice_nodes ? slice_average_routing(bank) : dynamic_routing(bank, params.config.routing_iters);
  if (params.gcn.empty()) return routing.nodes;
  ModalityGraph graph = build_graph(tape, routing, params);
  Var h = graph.nodes;
  for (const Linear& layer : params.gcn) {
    h = gcn_layer(h, graph.edges, tape.param(layer.weight), tape.param(layer.bias));
  }
  return h;
}

}  // namespace mods::gdc
