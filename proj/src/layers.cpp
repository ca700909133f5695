#include "mods/layers.hpp"

#include <cmath>

namespace mods {

Parameter make_param(std::string name, Shape shape, ParamInit init, std::size_t fan_in) {
  Parameter p;
  p.name = std::move(name);
  p.value = Tensor(std::move(shape), init == ParamInit::ones ? 1.0 : 0.0);
  p.init = init;
  p.fan_in = fan_in;
  return p;
}

void initialize_parameters(const ParamList& params, std::mt19937_64& rng) {
  for (Parameter* p : params) {
    switch (p->init) {
      case ParamInit::zeros:
        p->value.fill(0.0);
        break;
      case ParamInit::ones:
        p->value.fill(1.0);
        break;
      case ParamInit::fan_in_uniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(p->fan_in, 1)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : p->value.storage()) v = dist(rng);
        break;
      }
    }
    round_to_f32(p->value);
  }
}

Linear Linear::create(const std::string& name, std::size_t in, std::size_t out, bool zero_weight) {
  return Linear{make_param(name + ".weight", {in, out}, zero_weight ? ParamInit::zeros : ParamInit::fan_in_uniform, in),
                make_param(name + ".bias", {out})};
}

Var Linear::operator()(Tape& tape, Var x) const {
  return add_bias(matmul(x, tape.param(weight)), tape.param(bias));
}

LayerNormParams LayerNormParams::create(const std::string& name, std::size_t width) {
  return LayerNormParams{make_param(name + ".gain", {width}, ParamInit::ones), make_param(name + ".bias", {width})};
}

Var LayerNormParams::operator()(Tape& tape, Var x) const {
  return layer_norm(x, tape.param(gain), tape.param(bias));
}

Var dropout(Var x, const Dropout& d) {
  if (d.rate <= 0.0 || d.rng == nullptr) return x;
  Tensor mask(Shape{x.rows(), x.cols()});
  std::bernoulli_distribution keep(1.0 - d.rate);
  const double s = 1.0 / (1.0 - d.rate);
  for (double& v : mask.storage()) v = keep(*d.rng) ? s : 0.0;
  return mul(x, x.tape().constant(std::move(mask)));
}

FeedForward FeedForward::create(const std::string& name, std::size_t width, std::size_t hidden) {
  return FeedForward{Linear::create(name + ".inner", width, hidden), Linear::create(name + ".outer", hidden, width)};
}

Var FeedForward::operator()(Tape& tape, Var x, const Dropout& drop) const {
  return outer(tape, dropout(relu(inner(tape, x)), drop));
}

}  // namespace mods
