#pragma once

#include <random>
#include <string>
#include <vector>

#include "mods/autodiff.hpp"

namespace mods {

using ParamList = std::vector<Parameter*>;

Parameter make_param(std::string name, Shape shape, ParamInit init = ParamInit::zeros, std::size_t fan_in = 0);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for fan_in_uniform parameters,
// constants otherwise. Visits parameters in list order.
void initialize_parameters(const ParamList& params, std::mt19937_64& rng);

/// y = x·W + b with W stored in×out.
struct Linear {
  Parameter weight;
  Parameter bias;

  static Linear create(const std::string& name, std::size_t in, std::size_t out, bool zero_weight = false);
  Var operator()(Tape& tape, Var x) const;
  void collect(ParamList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct LayerNormParams {
  Parameter gain;
  Parameter bias;

  static LayerNormParams create(const std::string& name, std::size_t width);
  Var operator()(Tape& tape, Var x) const;
  void collect(ParamList& out) {
    out.push_back(&gain);
    out.push_back(&bias);
  }
};

// Inverted dropout; a no-op unless rate > 0 and an RNG is supplied.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
};
Var dropout(Var x, const Dropout& d);

/// Position-wise feed-forward: relu(x·W1 + b1)·W2 + b2.
struct FeedForward {
  Linear inner;
  Linear outer;

  static FeedForward create(const std::string& name, std::size_t width, std::size_t hidden);
  Var operator()(Tape& tape, Var x, const Dropout& drop = {}) const;
  void collect(ParamList& out) {
    inner.collect(out);
    outer.collect(out);
  }
};

}  // namespace mods
