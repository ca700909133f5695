#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mods/tensor.hpp"

namespace mods {

enum class ParamInit { zeros, ones, fan_in_uniform };

/// A named trainable tensor. Gradients live on the tape that used it, so
/// models can stay const during forward passes.
struct Parameter {
  std::string name;
  Tensor value;
  ParamInit init = ParamInit::zeros;
  std::size_t fan_in = 0;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode tape. Every op pushes its forward value plus a closure that
/// scatters the output gradient into its inputs. Nodes that do not depend
/// on a parameter or leaf carry no closure and receive no gradient.
class Tape {
 public:
  // Receives the output gradient and the output value of the node.
  using Backward = std::function<void(Tape&, const Tensor& out_grad, const Tensor& out_value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Differentiable input that is not a Parameter (used by grad checks on inputs).
  Var leaf(Tensor value);
  // One node per parameter per tape; repeated calls return the same Var.
  Var param(const Parameter& p);

  // Record an op result. `name` shows up in non-finite errors.
  Var push(const char* name, Tensor value, std::initializer_list<Var> inputs, Backward fn);
  Var push(const char* name, Tensor value, std::span<const Var> inputs, Backward fn);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  // Lazily zero-initialised gradient buffer of `v`.
  Tensor& grad_mut(Var v);

  // Seeds d(out)/d(out) = 1 on a 1×1 output and propagates backwards.
  void backward(Var out);

  // Gradient of the last backward() output w.r.t. `v` (zeros if untouched).
  Tensor grad(Var v) const;
  Tensor param_grad(const Parameter& p) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool needs_grad = false;
    bool has_grad = false;
  };

  Var add_node(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> params_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

// ---------------------------------------------------------------------------
// Differentiable ops. All operate on rank-2 values; rank-1 bias/gain
// parameters read as 1×n rows.
// ---------------------------------------------------------------------------

Var matmul(Var a, Var b);
// a · bᵀ
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
// x scaled by the single value held in a 1×1 node.
Var mul_scalar(Var x, Var s);
// Adds a length-cols row vector to every row of x.
Var add_bias(Var x, Var bias);

Var relu(Var x);
Var tanh(Var x);
Var abs(Var x);
// Elementwise x^p for strictly positive x.
Var pow(Var x, double p);

Var softmax_rows(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// Each row divided by max(‖row‖₂, eps).
Var l2_normalize_rows(Var x, double eps = 1e-8);

Var sum(Var x);
Var mean(Var x);
Var row_sums(Var x);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var element(Var x, std::size_t r, std::size_t c);
Var reshape(Var x, std::size_t rows, std::size_t cols);

}  // namespace mods
