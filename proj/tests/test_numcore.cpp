#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mods/gradcheck.hpp"
#include "mods/layers.hpp"
#include "test_util.hpp"

using namespace mods;

using mods::testing::random_param;
using mods::testing::random_tensor;
using mods::testing::weighted_sum;

TEST_CASE("matmul examples") {
  Tape tape;
  Var id = tape.constant(Tensor::identity(2));
  Var m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  CHECK(matmul(id, m).value() == Tensor::matrix({{1, 2}, {3, 4}}));

  Var row = tape.constant(Tensor::matrix({{1, 2}}));
  Var col = tape.constant(Tensor::matrix({{3}, {4}}));
  CHECK(matmul(row, col).value()[0] == 11.0);

  Var zero = tape.constant(Tensor({3, 2}, 0.0));
  CHECK(matmul(zero, m).value() == Tensor({3, 2}, 0.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("x [2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax_rows examples") {
  Tape tape;
  auto sm = [&](Tensor t) { return softmax_rows(tape.constant(std::move(t))).value(); };
  auto half = sm(Tensor::row({0.0, 0.0}));
  CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-15));
  auto thirds = sm(Tensor::row({0.0, std::log(2.0)}));
  CHECK(std::fabs(thirds[0] - 1.0 / 3.0) < 1e-12);
  CHECK(std::fabs(thirds[1] - 2.0 / 3.0) < 1e-12);
  auto big = sm(Tensor::row({1000.0, 1000.0}));
  CHECK(big[0] == 0.5);
  CHECK(big[1] == 0.5);
}

TEST_CASE("softmax rows sum to one for arbitrary finite input") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Tape tape;
    Tensor x = random_tensor({4, 7}, rng, -50.0, 50.0);
    auto y = softmax_rows(tape.constant(x)).value();
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(y(i, j) >= 0.0);
        s += y(i, j);
      }
      CHECK(std::fabs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("layer_norm examples") {
  Tape tape;
  Var g1 = tape.constant(Tensor({3}, 1.0));
  Var b0 = tape.constant(Tensor({3}, 0.0));
  auto c = layer_norm(tape.constant(Tensor::row({2.5, 2.5, 2.5})), g1, b0).value();
  for (double v : c.values()) CHECK(v == 0.0);

  Var g2 = tape.constant(Tensor({2}, 1.0));
  Var z2 = tape.constant(Tensor({2}, 0.0));
  auto pm = layer_norm(tape.constant(Tensor::row({1.0, -1.0})), g2, z2, 1e-14).value();
  CHECK(std::fabs(pm[0] - 1.0) < 1e-9);
  CHECK(std::fabs(pm[1] + 1.0) < 1e-9);

  Var zero_gain = tape.constant(Tensor({3}, 0.0));
  Var bias = tape.constant(Tensor(Shape{3}, std::vector<double>{0.1, -0.2, 0.3}));
  auto bb = layer_norm(tape.constant(Tensor::matrix({{1, 5, -2}, {0, 3, 9}})), zero_gain, bias).value();
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(bb(i, 0) == 0.1);
    CHECK(bb(i, 1) == -0.2);
    CHECK(bb(i, 2) == 0.3);
  }
}

TEST_CASE("grad_check examples") {
  Parameter x{"x", Tensor::scalar(3.0)};
  Parameter* ps[] = {&x};
  auto square = grad_check([&](Tape& t) { Var v = t.param(x); return mul(v, v); }, ps, {1e-5, 1e-6});
  CHECK(square.passed);
  CHECK(square.max_rel_error < 1e-6);
  {
    Tape t;
    Var v = t.param(x);
    Var out = mul(v, v);
    t.backward(out);
    CHECK(t.param_grad(x)[0] == 6.0);
  }

  auto constant = grad_check([&](Tape& t) { t.param(x); return t.constant(Tensor::scalar(4.0)); }, ps);
  CHECK(constant.passed);
  CHECK(constant.max_rel_error == 0.0);

  std::mt19937_64 rng(3);
  Parameter pos = random_param("pos", {3, 4}, rng, 0.1, 2.0);
  Parameter* pp[] = {&pos};
  auto r = grad_check([&](Tape& t) { return sum(relu(t.param(pos))); }, pp);
  CHECK(r.passed);
  Tape t;
  Var out = sum(relu(t.param(pos)));
  t.backward(out);
  const Tensor grad = t.param_grad(pos);
  for (double g : grad.values()) CHECK(g == 1.0);
}

TEST_CASE("grad_check report max equals max of per-parameter errors") {
  std::mt19937_64 rng(11);
  Parameter a = random_param("a", {2, 3}, rng);
  Parameter b = random_param("b", {3, 2}, rng);
  Parameter* ps[] = {&a, &b};
  auto rep = grad_check([&](Tape& t) { return weighted_sum(t, tanh(matmul(t.param(a), t.param(b))), 1); }, ps);
  double mx = 0.0;
  for (const auto& [name, err] : rep.per_parameter) mx = std::max(mx, err);
  CHECK(rep.max_rel_error == mx);
  CHECK(rep.per_parameter.size() == 2);
}

TEST_CASE("grad_check detects corrupted gradient and names parameter") {
  std::mt19937_64 rng(12);
  Parameter a = random_param("alpha", {2, 2}, rng);
  Parameter b = random_param("beta", {2, 2}, rng);
  Parameter* ps[] = {&a, &b};
  GradCheckOptions opts;
  opts.corrupt_parameter = "beta";
  auto rep = grad_check([&](Tape& t) { return sum(matmul(t.param(a), t.param(b))); }, ps, opts);
  CHECK_FALSE(rep.passed);
  CHECK(rep.worst_parameter == "beta");
  CHECK(rep.per_parameter["alpha"] < 1e-6);
}

TEST_CASE("grad_check rejects non-finite evaluations") {
  Parameter x{"x", Tensor::scalar(0.0)};
  Parameter* ps[] = {&x};
  CHECK_THROWS_AS(grad_check([&](Tape& t) { return pow(t.param(x), 0.5); }, ps), NumericalError);
}

TEST_CASE("every differentiable op passes grad_check at random inputs") {
  std::mt19937_64 rng(2024);
  Parameter a = random_param("a", {3, 4}, rng);
  Parameter b = random_param("b", {4, 5}, rng);
  Parameter c = random_param("c", {3, 4}, rng);
  Parameter bt = random_param("bt", {5, 4}, rng);
  Parameter bias = random_param("bias", {4}, rng);
  Parameter gain = random_param("gain", {4}, rng, 0.5, 1.5);
  Parameter s = random_param("s", {1, 1}, rng);
  Parameter positive = random_param("positive", {3, 4}, rng, 0.5, 2.0);

  struct Case {
    const char* name;
    std::vector<Parameter*> params;
    ScalarFn fn;
  };
  const std::vector<Case> cases = {
      {"matmul", {&a, &b}, [&](Tape& t) { return weighted_sum(t, matmul(t.param(a), t.param(b)), 1); }},
      {"matmul_nt", {&a, &bt}, [&](Tape& t) { return weighted_sum(t, matmul_nt(t.param(a), t.param(bt)), 2); }},
      {"transpose", {&a}, [&](Tape& t) { return weighted_sum(t, transpose(t.param(a)), 3); }},
      {"add", {&a, &c}, [&](Tape& t) { return weighted_sum(t, add(t.param(a), t.param(c)), 4); }},
      {"sub", {&a, &c}, [&](Tape& t) { return weighted_sum(t, sub(t.param(a), t.param(c)), 5); }},
      {"mul", {&a, &c}, [&](Tape& t) { return weighted_sum(t, mul(t.param(a), t.param(c)), 6); }},
      {"scale", {&a}, [&](Tape& t) { return weighted_sum(t, scale(t.param(a), -1.7), 7); }},
      {"mul_scalar", {&a, &s}, [&](Tape& t) { return weighted_sum(t, mul_scalar(t.param(a), t.param(s)), 8); }},
      {"add_bias", {&a, &bias}, [&](Tape& t) { return weighted_sum(t, add_bias(t.param(a), t.param(bias)), 9); }},
      {"relu", {&a}, [&](Tape& t) { return weighted_sum(t, relu(t.param(a)), 10); }},
      {"tanh", {&a}, [&](Tape& t) { return weighted_sum(t, tanh(t.param(a)), 11); }},
      {"abs", {&a}, [&](Tape& t) { return weighted_sum(t, abs(t.param(a)), 12); }},
      {"pow", {&positive}, [&](Tape& t) { return weighted_sum(t, pow(t.param(positive), -0.5), 13); }},
      {"softmax_rows", {&a}, [&](Tape& t) { return weighted_sum(t, softmax_rows(t.param(a)), 14); }},
      {"layer_norm", {&a, &gain, &bias},
       [&](Tape& t) { return weighted_sum(t, layer_norm(t.param(a), t.param(gain), t.param(bias)), 15); }},
      {"l2_normalize_rows", {&a}, [&](Tape& t) { return weighted_sum(t, l2_normalize_rows(t.param(a)), 16); }},
      {"row_sums", {&a}, [&](Tape& t) { return weighted_sum(t, row_sums(t.param(a)), 17); }},
      {"mean", {&a}, [&](Tape& t) { return mean(tanh(t.param(a))); }},
      {"concat_rows", {&a, &c},
       [&](Tape& t) {
         Var parts[] = {t.param(a), t.param(c)};
         return weighted_sum(t, concat_rows(parts), 18);
       }},
      {"concat_cols", {&a, &c},
       [&](Tape& t) {
         Var parts[] = {t.param(a), t.param(c), t.param(a)};
         return weighted_sum(t, concat_cols(parts), 19);
       }},
      {"slice_rows", {&a}, [&](Tape& t) { return weighted_sum(t, slice_rows(t.param(a), 1, 2), 20); }},
      {"slice_cols", {&a}, [&](Tape& t) { return weighted_sum(t, slice_cols(t.param(a), 1, 3), 21); }},
      {"element", {&a}, [&](Tape& t) { return mul(element(t.param(a), 2, 1), element(t.param(a), 0, 3)); }},
      {"reshape", {&a}, [&](Tape& t) { return weighted_sum(t, tanh(reshape(t.param(a), 2, 6)), 22); }},
  };
  for (const auto& cs : cases) {
    CAPTURE(cs.name);
    auto rep = grad_check(cs.fn, cs.params);
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("forward passes are bit-deterministic") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({5, 6}, rng);
  auto run = [&] {
    Tape t;
    Var v = t.constant(x);
    Var g = t.constant(Tensor({6}, 1.0));
    Var b = t.constant(Tensor({6}, 0.0));
    return softmax_rows(matmul_nt(layer_norm(v, g, b), tanh(v))).value();
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite results are an error state") {
  Tape t;
  Var big = t.constant(Tensor::row({1e308, 1e308}));
  CHECK_THROWS_AS(add(big, big), NumericalError);
  Tensor bad({1, 1});
  bad[0] = std::nan("");
  CHECK_THROWS_AS(t.constant(bad), NumericalError);
}

TEST_CASE("tensor binary encoding") {
  std::mt19937_64 rng(9);
  Tensor t = random_tensor({3, 2}, rng);
  round_to_f32(t);
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.size() == 4 + 2 * 4 + 6 * 4);
  // rank 2 little-endian
  CHECK(bytes[0] == 2);
  CHECK(bytes[1] == 0);
  CHECK(bytes[4] == 3);
  CHECK(bytes[8] == 2);
  std::stringstream in(bytes);
  CHECK(read_tensor(in, "mem") == t);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  try {
    read_tensor(truncated, "sample.a.bin");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("sample.a.bin") != std::string::npos);
  }
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.all_finite());
}

TEST_CASE("linear layer init is seeded and bounded by fan-in") {
  Linear a = Linear::create("lin", 16, 4);
  Linear b = Linear::create("lin", 16, 4);
  std::mt19937_64 r1(1), r2(1);
  ParamList pa, pb;
  a.collect(pa);
  b.collect(pb);
  initialize_parameters(pa, r1);
  initialize_parameters(pb, r2);
  CHECK(a.weight.value == b.weight.value);
  for (double v : a.weight.value.values()) CHECK(std::fabs(v) <= 0.25);
  for (double v : a.bias.value.values()) CHECK(v == 0.0);
}
