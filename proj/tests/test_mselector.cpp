#include <cmath>
#include <random>

#include "doctest.h"
#include "mods/gradcheck.hpp"
#include "mods/mselector.hpp"
#include "test_util.hpp"

using namespace mods;
using namespace mods::mselector;
using mods::testing::random_tensor;
using mods::testing::weighted_sum;

namespace {

MSelectorParams seeded_selector(std::size_t d, std::uint64_t seed) {
  MSelectorParams p = MSelectorParams::create("sel", d);
  ParamList list;
  p.collect(list);
  std::mt19937_64 rng(seed);
  initialize_parameters(list, rng);
  return p;
}

}  // namespace

TEST_CASE("adaptive aggregation examples") {
  AggregationParams agg = AggregationParams::create("agg", 2);
  Tape t;
  Tensor h = Tensor::matrix({{1.0, 4.0}, {3.0, -2.0}, {5.0, 1.0}});

  SUBCASE("equal scores give the column mean") {
    Var out = adaptive_aggregate(t, t.constant(h), agg);
    CHECK(out.value()(0, 0) == doctest::Approx(3.0));
    CHECK(out.value()(0, 1) == doctest::Approx(1.0));
  }
  SUBCASE("single row is returned as is") {
    agg.score.value = Tensor({2, 1}, {0.3, -0.7});
    Var out = adaptive_aggregate(t, t.constant(Tensor::matrix({{2.5, -1.5}})), agg);
    CHECK(out.value()(0, 0) == 2.5);
    CHECK(out.value()(0, 1) == -1.5);
  }
  SUBCASE("scores (0, ln 2) weight rows by 1/3 and 2/3") {
    // W = (ln2·√2, 0) scores the rows (0, ln 2) after the 1/√d scaling.
    const double c = std::log(2.0) * std::sqrt(2.0);
    agg.score.value = Tensor({2, 1}, {c, 0.0});
    Tensor two = Tensor::matrix({{0.0, 7.0}, {1.0, -5.0}});
    Var att;
    Var out = adaptive_aggregate(t, t.constant(two), agg, &att);
    CHECK(att.value()(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(out.value()(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(out.value()(0, 1) == doctest::Approx(7.0 / 3.0 - 10.0 / 3.0).epsilon(1e-14));
  }
}

TEST_CASE("modality weight examples") {
  MSelectorParams p = seeded_selector(3, 1);
  std::mt19937_64 rng(2);
  Tape t;
  Var ha = t.constant(random_tensor({1, 3}, rng));
  Var hl = t.constant(random_tensor({1, 3}, rng));
  Var hv = t.constant(random_tensor({1, 3}, rng));

  SUBCASE("zero-initialized head gives thirds") {
    Var w = modality_weights(t, ha, hl, hv, p);
    for (std::size_t k = 0; k < 3; ++k) CHECK(w.value()(0, k) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("logits (0, ln 2, 0) give (1/4, 1/2, 1/4)") {
    p.logits.bias.value = Tensor({3}, {0.0, std::log(2.0), 0.0});
    Var w = modality_weights(t, ha, hl, hv, p);
    CHECK(w.value()(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(w.value()(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(w.value()(0, 2) == doctest::Approx(0.25).epsilon(1e-14));
  }
}

TEST_CASE("primary selection and role binding") {
  Tape t;
  Tensor a = Tensor::matrix({{1.0, 2.0}}), l = Tensor::matrix({{3.0, 4.0}}), v = Tensor::matrix({{5.0, 6.0}});

  auto outcome = select_primary(t.constant(Tensor::matrix({{0.5, 0.3, 0.2}})), t.constant(a), t.constant(l), t.constant(v));
  CHECK(outcome.primary == Modality::acoustic);
  CHECK(outcome.roles[1] == Modality::language);
  CHECK(outcome.roles[2] == Modality::visual);
  CHECK(outcome.h_p.value()(0, 1) == doctest::Approx(1.0));
  CHECK(outcome.h_a1.value()(0, 0) == doctest::Approx(0.9));
  CHECK(outcome.h_a2.value()(0, 1) == doctest::Approx(1.2));

  const double third = 1.0 / 3.0;
  auto tie = select_primary(t.constant(Tensor::matrix({{third, third, third}})), t.constant(a), t.constant(l), t.constant(v));
  CHECK(tie.primary == Modality::language);
  CHECK(tie.roles[1] == Modality::acoustic);
  CHECK(tie.roles[2] == Modality::visual);

  CHECK(argmax_primary({0.4, 0.2, 0.4}) == Modality::acoustic);
  CHECK(argmax_primary({0.2, 0.4, 0.4}) == Modality::language);
  CHECK(rank_modalities({0.1, 0.2, 0.7}) == std::array<Modality, 3>{Modality::visual, Modality::language, Modality::acoustic});
}

TEST_CASE("weights stay on the simplex and ignore common logit shifts") {
  MSelectorParams p = seeded_selector(4, 3);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    p.logits.weight.value = random_tensor({4, 3}, rng, -3, 3);
    p.logits.bias.value = random_tensor({3}, rng, -3, 3);
    Tape t;
    Var ha = t.constant(random_tensor({1, 4}, rng, -5, 5));
    Var hl = t.constant(random_tensor({1, 4}, rng, -5, 5));
    Var hv = t.constant(random_tensor({1, 4}, rng, -5, 5));
    Var w = modality_weights(t, ha, hl, hv, p);
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(w.value()(0, k) > 0.0);
      CHECK(w.value()(0, k) < 1.0);
      s += w.value()(0, k);
    }
    CHECK(std::fabs(s - 1.0) < 1e-6);

    auto base = select_primary(w, ha, hl, hv);
    MSelectorParams shifted = p;
    const double c = std::uniform_real_distribution<double>(-10, 10)(rng);
    for (std::size_t k = 0; k < 3; ++k) shifted.logits.bias.value[k] += c;
    Tape t2;
    Var w2 = modality_weights(t2, t2.constant(ha.value()), t2.constant(hl.value()), t2.constant(hv.value()), shifted);
    auto moved = select_primary(w2, t2.constant(ha.value()), t2.constant(hl.value()), t2.constant(hv.value()));
    CHECK(moved.primary == base.primary);
    for (std::size_t k = 0; k < 3; ++k) CHECK(moved.weights[k] == doctest::Approx(base.weights[k]).epsilon(1e-12));
  }
}

TEST_CASE("selection is per sample") {
  MSelectorParams p = seeded_selector(2, 5);
  p.logits.weight.value = Tensor({2, 3}, {4.0, -4.0, 0.0, -4.0, 4.0, 0.0});
  p.hidden.weight.value.fill(0.0);
  for (std::size_t k = 0; k < 2; ++k) p.hidden.weight.value[k * 2 + k] = 1.0;  // passes h_a through
  Tape t;
  Var hl = t.constant(Tensor({1, 2}, 0.0));
  Var hv = t.constant(Tensor({1, 2}, 0.0));
  auto pick = [&](Tensor ha) {
    Var a = t.constant(ha);
    return select_primary(modality_weights(t, a, hl, hv, p), a, hl, hv).primary;
  };
  CHECK(pick(Tensor::matrix({{1.0, 0.0}})) == Modality::acoustic);
  CHECK(pick(Tensor::matrix({{0.0, 1.0}})) == Modality::language);
}

TEST_CASE("selector gradients flow through the weight multiplication") {
  MSelectorParams p = seeded_selector(3, 9);
  std::mt19937_64 rng(10);
  p.logits.weight.value = random_tensor({3, 3}, rng);
  p.hidden.bias.value = random_tensor({3}, rng, 0.1, 0.5);
  Tensor ha = random_tensor({4, 3}, rng), hl = random_tensor({5, 3}, rng), hv = random_tensor({4, 3}, rng);
  ParamList list;
  p.collect(list);
  auto rep = grad_check(
      [&](Tape& t) {
        Var a = t.constant(ha), l = t.constant(hl), v = t.constant(hv);
        Var w = modality_weights(t, adaptive_aggregate(t, a, p.agg_a), adaptive_aggregate(t, l, p.agg_l),
                                 adaptive_aggregate(t, v, p.agg_v), p);
        auto sel = select_primary(w, a, slice_rows(l, 0, 4), v);
        return add(add(weighted_sum(t, sel.h_p, 1), weighted_sum(t, sel.h_a1, 2)), weighted_sum(t, sel.h_a2, 3));
      },
      list);
  CHECK(rep.max_rel_error < 1e-4);
  for (const auto& [name, err] : rep.per_parameter) {
    CAPTURE(name);
    CHECK(err < 1e-4);
  }
}
