#include "mods/gradsuite.hpp"

#include <chrono>
#include <random>

#include "mods/gdc.hpp"
#include "mods/mselector.hpp"
#include "mods/objective.hpp"
#include "mods/pcca.hpp"
#include "mods/trainer.hpp"

namespace mods {

namespace {

constexpr std::size_t kD = 8;
constexpr std::size_t kJ = 4;
constexpr std::size_t kT = 12;
constexpr std::size_t kK = 4;

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.storage()) v = d(rng);
  return t;
}

// Default init leaves zeros (biases, the selector head) and ones (LN gains);
// jitter everything so no gradient is trivially zero.
void randomize(const ParamList& params, std::mt19937_64& rng) {
  initialize_parameters(params, rng);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  for (Parameter* p : params)
    for (double& v : p->value.storage()) v += jitter(rng);
}

// Scalar readout with a distinct upstream weight per element.
Var readout(Tape& tape, Var x, std::mt19937_64::result_type seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(x, tape.constant(uniform({x.rows(), x.cols()}, rng))));
}

std::size_t count(const ParamList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

}  // namespace

std::vector<SuiteEntry> run_gradcheck_suite(std::uint64_t seed, const GradCheckOptions& opts) {
  std::vector<SuiteEntry> out;
  std::mt19937_64 rng(seed);
  auto run = [&](const std::string& name, const ScalarFn& f, const ParamList& params) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteEntry e;
    e.module = name;
    e.report = grad_check(f, params, opts);
    e.parameters = count(params);
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(e));
  };

  for (gdc::CapsuleMode mode : {gdc::CapsuleMode::shared, gdc::CapsuleMode::full}) {
    gdc::GdcConfig cfg;
    cfg.in_dim = 6;
    cfg.hidden = kD;
    cfg.max_nodes = kJ;
    cfg.max_len = kT;
    cfg.mode = mode;
    auto params = gdc::GdcParams::create("gdc", cfg);
    Parameter input{"input", uniform({kT, cfg.in_dim}, rng)};
    ParamList list{&input};
    params.collect(list);
    randomize(ParamList(list.begin() + 1, list.end()), rng);
    run("gdc." + gdc::capsule_mode_name(mode),
        [&](Tape& t) { return readout(t, gdc::compress_sequence(t, t.param(input), params, kJ), 1); }, list);
  }

  {
    Parameter votes{"votes", uniform({kT, kJ * kD}, rng)};
    Parameter coeff{"coefficients", uniform({kT, kJ}, rng)};
    Parameter nodes{"nodes", uniform({kJ, kD}, rng)};
    run("gdc.routing",
        [&](Tape& t) {
          Var n = gdc::route_nodes(t.param(votes), t.param(coeff), kD);
          return add(readout(t, n, 2), readout(t, gdc::route_agreement(t.param(votes), t.param(nodes)), 3));
        },
        {&votes, &coeff, &nodes});
  }

  {
    auto sel = mselector::MSelectorParams::create("selector", kD);
    ParamList list;
    sel.collect(list);
    randomize(list, rng);
    Tensor ha = uniform({kJ, kD}, rng), hl = uniform({kJ, kD}, rng), hv = uniform({kJ, kD}, rng);
    run("mselector",
        [&](Tape& t) {
          Var a = t.constant(ha), l = t.constant(hl), v = t.constant(hv);
          Var w = mselector::modality_weights(t, mselector::adaptive_aggregate(t, a, sel.agg_a),
                                              mselector::adaptive_aggregate(t, l, sel.agg_l),
                                              mselector::adaptive_aggregate(t, v, sel.agg_v), sel);
          auto s = mselector::select_primary(w, a, l, v);
          return add(add(readout(t, s.h_p, 4), readout(t, s.h_a1, 5)), readout(t, s.h_a2, 6));
        },
        list);
  }

  {
    auto stack = pcca::create_stack("pcca", kD, 2, 2);
    ParamList list;
    for (auto& layer : stack) layer.collect(list);
    randomize(list, rng);
    Tensor hp = uniform({kJ, kD}, rng), ha1 = uniform({kJ, kD}, rng), ha2 = uniform({kJ, kD}, rng);
    run("pcca",
        [&](Tape& t) {
          pcca::PccaState in{t.constant(hp), t.constant(ha1), t.constant(ha2)};
          return readout(t, pcca::pcca_stack(t, in, stack), 7);
        },
        list);
  }

  {
    auto maps = objective::ReverseMaps::create("reverse", kD);
    ParamList list;
    maps.collect(list);
    randomize(list, rng);
    Parameter hp{"h_p", uniform({kK, kD}, rng)};
    Parameter y{"y_pred", uniform({kK, 1}, rng, -3, 3)};
    list.push_back(&hp);
    list.push_back(&y);
    Tensor hl = uniform({kK, kD}, rng), ha = uniform({kK, kD}, rng), hv = uniform({kK, kD}, rng);
    Tensor truth = uniform({kK, 1}, rng, -3, 3);
    run("objective",
        [&](Tape& t) {
          objective::BatchRepresentations b{t.param(hp), t.constant(hl), t.constant(ha), t.constant(hv)};
          Var nce = objective::nce_total(t, b, maps, 0.7);
          return objective::total_loss(objective::regression_loss(t.param(y), t.constant(truth)), nce, 0.1);
        },
        list);
  }

  {
    trainer::ModelConfig cfg;
    cfg.input_dims = {6, 5, 7};
    cfg.d = kD;
    cfg.pcca_depth = 2;
    cfg.heads = 2;
    cfg.max_nodes = kJ;
    cfg.max_len = kT;
    trainer::Model model(cfg);
    randomize(model.parameters(), rng);
    std::vector<MultimodalSample> batch(kK);
    std::uniform_int_distribution<std::size_t> len(kJ, kT);
    for (std::size_t i = 0; i < kK; ++i) {
      batch[i].language = uniform({kJ, cfg.input_dims[0]}, rng);
      batch[i].acoustic = uniform({len(rng), cfg.input_dims[1]}, rng);
      batch[i].visual = uniform({len(rng), cfg.input_dims[2]}, rng);
      batch[i].label = std::uniform_real_distribution<double>(-3, 3)(rng);
    }
    std::vector<const MultimodalSample*> ptrs;
    for (const auto& s : batch) ptrs.push_back(&s);
    run("full_forward", [&](Tape& t) { return model.batch_loss(t, ptrs).total; }, model.parameters());
  }
  return out;
}

}  // namespace mods
