#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mods/layers.hpp"

// Graph-based dynamic compression of an acoustic/visual sequence onto J
// graph nodes: capsule votes, dynamic routing, attention-derived edges and
// stacked graph convolutions.
namespace mods::gdc {

enum class CapsuleMode {
  // one d_m→d map per node, reused for every timestep
  shared,
  // one map per (timestep, node) pair, timesteps bounded by max_len
  full,
};

std::string capsule_mode_name(CapsuleMode m);
CapsuleMode parse_capsule_mode(const std::string& s);

struct GdcConfig {
  std::size_t in_dim = 8;
  std::size_t hidden = 8;
  std::size_t max_nodes = 8;
  std::size_t max_len = 64;
  CapsuleMode mode = CapsuleMode::shared;
  std::size_t routing_iters = 3;
  std::size_t gcn_layers = 1;
};

struct GdcParams {
  GdcConfig config;
  // shared: [max_nodes, in_dim, hidden]; full: [max_len, max_nodes, in_dim, hidden]
  Parameter capsules;
  Parameter edge_query;  // hidden × hidden
  Parameter edge_key;    // hidden × hidden
  std::vector<Linear> gcn;

  static GdcParams create(const std::string& name, const GdcConfig& cfg);
  void collect(ParamList& out);
};

/// Capsule votes laid out as a T × (J·d) matrix: row i holds the J vectors
/// caps[i, j] = W^{ij} · H[i] back to back.
struct CapsuleBank {
  Var votes;
  std::size_t steps = 0;
  std::size_t nodes = 0;
  std::size_t dim = 0;

  Tensor capsule(std::size_t i, std::size_t j) const;
};

struct RoutingState {
  Var logits;        // T × J, after the final agreement update
  Var coefficients;  // T × J, softmax over nodes of the logits used for `nodes`
  Var nodes;         // J × d
};

struct ModalityGraph {
  Var nodes;  // J × d
  Var edges;  // J × J, nonnegative
};

CapsuleBank build_capsules(Tape& tape, Var sequence, const GdcParams& params, std::size_t nodes);

// Differentiable primitives behind routing.
// N[j] = Σ_i r[i, j] · caps[i, j]
Var route_nodes(Var votes, Var coefficients, std::size_t dim);
// A[i, j] = ⟨caps[i, j], v[j]⟩
Var route_agreement(Var votes, Var node_values);

/// Iterates: r = softmax_j(b); N_j = Σ_i r_ij caps_ij; b_ij += ⟨caps_ij, tanh(N_j)⟩.
/// `trace`, when given, receives r for every iteration.
RoutingState dynamic_routing(const CapsuleBank& bank, std::size_t iters, std::vector<Tensor>* trace = nullptr);

/// Nodes as averages of the capsules in contiguous timestep slices
/// (routing removed; used by the no-capsule ablation).
RoutingState slice_average_routing(const CapsuleBank& bank);

// Adaptive-pooling slice [start, end) of node j when T steps map onto J nodes.
std::pair<std::size_t, std::size_t> slice_bounds(std::size_t steps, std::size_t nodes, std::size_t j);
// J × T matrix averaging each slice; pooling(T, J)·X resamples X to J rows.
Tensor slice_pooling_matrix(std::size_t steps, std::size_t nodes);

/// E = relu((N·W_qᵀ)(N·W_kᵀ)ᵀ / √d)
Var build_edges(Var nodes, Var query_weight, Var key_weight);

/// relu(D^{-1/2} Ẽ D^{-1/2} · H · W + b) with Ẽ = E + I and D the degree of Ẽ.
Var gcn_layer(Var features, Var edges, Var weight, Var bias);

ModalityGraph build_graph(Tape& tape, const RoutingState& routing, const GdcParams& params);

/// Full compression T_m × d_m → J × d. `slice_nodes` swaps dynamic routing
/// for slice averages.
Var compress_sequence(Tape& tape, Var sequence, const GdcParams& params, std::size_t nodes, bool slice_nodes = false);

}  // namespace mods::gdc
