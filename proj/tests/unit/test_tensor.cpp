#include <doctest.h>

#include <cmath>
#include <limits>

#include "jepagrasp/gradsuite.hpp"
#include "jepagrasp/random.hpp"
#include "jepagrasp/tensor.hpp"

using namespace jepagrasp;
using tc::Tensor;

TEST_CASE("matmul and bias add values") {
  tc::Graph<double> g;
  auto a = g.constant(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
  auto b = g.constant(Tensor<double>({3, 2}, {1, 0, 0, 1, 1, 1}));
  auto c = tc::matmul(a, b);
  CHECK(c.shape() == tc::Shape{2, 2});
  CHECK(c.value() == std::vector<double>{4, 5, 10, 11});
  auto d = tc::add(c, g.constant(Tensor<double>({2}, {1, -1})));
  CHECK(d.value() == std::vector<double>{5, 4, 11, 10});
}

TEST_CASE("shape mismatches are configuration errors") {
  tc::Graph<double> g;
  auto a = g.constant(Tensor<double>({2, 3}));
  auto b = g.constant(Tensor<double>({2, 2}));
  CHECK_THROWS_AS(tc::matmul(a, b), ConfigError);
  CHECK_THROWS_AS(tc::mul(a, b), ConfigError);
  CHECK_THROWS_AS(tc::gather_rows(a, {2}), ConfigError);
  CHECK_THROWS_AS(tc::slice_cols(a, 2, 2), ConfigError);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  tc::Graph<double> g;
  auto s = tc::softmax(g.constant(Tensor<double>({2, 3}, {1000, 1001, 1002, -5, 0, 5})));
  for (std::size_t r = 0; r < 2; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) sum += s.value()[r * 3 + c];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("cross entropy with a single logit is exactly zero") {
  tc::Graph<float> g;
  auto l = tc::cross_entropy_from_logits(g.constant(Tensor<float>({1, 1}, {3.25f})), 0);
  CHECK(l.item() == 0.0f);
}

TEST_CASE("non-finite values raise NumericError naming the op") {
  tc::Graph<double> g;
  auto a = g.constant(Tensor<double>({1, 2}, {1.0, 0.0}));
  auto big = g.constant(Tensor<double>({1, 2}, {1e308, 1e308}));
  try {
    tc::scale(tc::add(a, big), 10.0);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.op() == "scale");
  }
}

TEST_CASE("gradient suite passes for every op") {
  const auto rows = run_gradient_suite(11, 5);
  CHECK(rows.size() == gradient_suite_cases().size());
  for (const auto& r : rows) {
    INFO(r.name);
    CHECK(r.passed);
    CHECK(r.checked > 0);
    CHECK(r.max_error <= 1e-4);
  }
}

TEST_CASE("non-trainable bindings receive no gradient") {
  tc::ParameterSet<double> ps;
  ps.add("w", Tensor<double>({2}, {1.0, 2.0}));
  ps.add("frozen", Tensor<double>({2}, {3.0, 4.0}));
  ps[1].trainable = false;
  tc::Graph<double> g;
  auto loss = tc::sum(tc::mul(g.parameter(ps, "w"), g.parameter(ps, "frozen")));
  g.backward(loss);
  tc::Gradients<double> grads(ps);
  g.accumulate_into(ps, grads);
  CHECK(grads[0] == std::vector<double>{3.0, 4.0});
  CHECK(grads[1] == std::vector<double>{0.0, 0.0});

  // The same parameter bound with trainable=false is a constant.
  tc::Graph<double> g2;
  auto loss2 = tc::sum(tc::mul(g2.parameter(ps, "w", false), g2.parameter(ps, "w", false)));
  CHECK_FALSE(loss2.requires_grad());
}

TEST_CASE("a graph without grad records no backward") {
  tc::ParameterSet<double> ps;
  ps.add("w", Tensor<double>({1}, {2.0}));
  tc::Graph<double> g(false);
  auto y = tc::scale(g.parameter(ps, "w"), 3.0);
  CHECK(y.item() == 6.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("adam two-tier learning rates: first step ratio is exact") {
  tc::ParameterSet<double> ps;
  ps.add("backbone.w", Tensor<double>({3}, {0.5, -1.0, 2.0}), 0);
  ps.add("head.w", Tensor<double>({3}, {0.5, -1.0, 2.0}), 1);
  tc::Adam<double> adam(ps, {1e-5, 1e-3});
  tc::Gradients<double> grads(ps);
  grads[0] = {0.3, -0.7, 1.1};
  grads[1] = grads[0];
  const auto before0 = ps[0].value.values(), before1 = ps[1].value.values();
  adam.step(ps, grads);
  for (std::size_t i = 0; i < 3; ++i) {
    const double d0 = ps[0].value[i] - before0[i], d1 = ps[1].value[i] - before1[i];
    CHECK(d1 / d0 == doctest::Approx(100.0).epsilon(1e-9));
    // First Adam step moves by lr * g / (|g| + eps').
    CHECK(std::abs(d1) == doctest::Approx(1e-3).epsilon(1e-6));
  }
}

TEST_CASE("adam skips non-trainable and zero-lr parameters, rejects NaN gradients") {
  tc::ParameterSet<float> ps;
  ps.add("a", Tensor<float>({2}, {1.0f, 1.0f}), 0);
  ps.add("b", Tensor<float>({2}, {1.0f, 1.0f}), 1);
  ps.add("c", Tensor<float>({2}, {1.0f, 1.0f}), 1);
  ps[2].trainable = false;
  tc::Adam<float> adam(ps, {0.0, 0.1});
  tc::Gradients<float> grads(ps);
  for (std::size_t i = 0; i < 3; ++i) grads[i] = {1.0f, -1.0f};
  adam.step(ps, grads);
  CHECK(ps[0].value.values() == std::vector<float>{1.0f, 1.0f});
  CHECK(ps[1].value[0] < 1.0f);
  CHECK(ps[2].value.values() == std::vector<float>{1.0f, 1.0f});
  grads[1][0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(adam.step(ps, grads), NumericError);
  CHECK_THROWS_AS(tc::Adam<float>(ps, {-1.0, 0.1}), ConfigError);
}

TEST_CASE("checkpoint round trip is exact") {
  tc::ParameterSet<float> ps;
  Rng rng(1);
  Tensor<float> a({3, 4}), b({5});
  for (auto& v : a.values()) v = float(rng.normal());
  for (auto& v : b.values()) v = float(rng.normal());
  ps.add("backbone.a", a);
  ps.add("head.b", b, 1);
  const auto bytes = tc::checkpoint_bytes(ps);
  const auto back = tc::checkpoint_from_bytes(bytes);
  REQUIRE(back.size() == 2);
  CHECK(back.get("backbone.a").value.values() == a.values());
  CHECK(back.get("backbone.a").value.shape() == a.shape());
  CHECK(back.get("head.b").value.values() == b.values());
  CHECK(tc::checkpoint_bytes(back) == bytes);
}

TEST_CASE("corrupt checkpoints are rejected") {
  tc::ParameterSet<float> ps;
  ps.add("x", Tensor<float>({2, 2}, {1, 2, 3, 4}));
  auto bytes = tc::checkpoint_bytes(ps);
  SUBCASE("truncated") {
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(tc::checkpoint_from_bytes(bytes), IoError);
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(tc::checkpoint_from_bytes(bytes), FormatError);
  }
  SUBCASE("unknown version") {
    bytes[8] = 9;
    CHECK_THROWS_AS(tc::checkpoint_from_bytes(bytes), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(tc::load_checkpoint("/nonexistent/x.ckpt"), IoError);
  }
}

TEST_CASE("parameter copy requires matching shapes") {
  tc::ParameterSet<float> a, b;
  a.add("backbone.w", Tensor<float>({2}, {1, 2}));
  a.add("head.w", Tensor<float>({2}, {3, 4}));
  b.add("backbone.w", Tensor<float>({2}, {7, 8}));
  b.add("head.w", Tensor<float>({2}, {9, 9}));
  CHECK(a.copy_from(b, "backbone.") == 1);
  CHECK(a.get("backbone.w").value.values() == std::vector<float>{7, 8});
  CHECK(a.get("head.w").value.values() == std::vector<float>{3, 4});
  tc::ParameterSet<float> c;
  c.add("backbone.w", Tensor<float>({3}));
  CHECK_THROWS_AS(a.copy_from(c), ConfigError);
}
