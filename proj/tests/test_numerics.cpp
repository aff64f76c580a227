#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "mrt/archive.hpp"
#include "mrt/autodiff.hpp"
#include "mrt/error.hpp"
#include "mrt/grad_check.hpp"
#include "mrt/optim.hpp"
#include "mrt/params.hpp"
#include "support.hpp"

using namespace mrt;
using mrt::test::random_tensor;

TEST_SUITE("numerics") {

TEST_CASE("matmul identity and hand sums") {
  const Tensor i2 = Tensor::identity(2);
  CHECK(matmul(i2, i2) == i2);
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor b = Tensor::from_rows({{1}, {1}});
  CHECK(matmul(a, b) == Tensor::from_rows({{3}, {7}}));
  const Tensor c = Tensor::from_rows({{1.5, -2}, {0.25, 8}});
  CHECK(matmul(i2, c) == c);
  CHECK(matmul(c, i2) == c);
}

TEST_CASE("matmul matches triple loop") {
  std::mt19937_64 rng(11);
  const Tensor a = random_tensor(5, 4, rng), b = random_tensor(4, 3, rng);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
  CHECK(max_abs_diff(matmul_tn(a.transposed(), b), c) < 1e-14);
  CHECK(max_abs_diff(matmul_nt(a, b.transposed()), c) < 1e-14);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor(2, 3), Tensor(2, 3));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax rows") {
  CHECK(max_abs_diff(softmax_rows(Tensor::from_rows({{0, 0, 0}})),
                     Tensor::from_rows({{1.0 / 3, 1.0 / 3, 1.0 / 3}})) < 1e-15);
  const Tensor big = softmax_rows(Tensor::from_rows({{1000, 1000}}));
  CHECK(big(0, 0) == 0.5);
  CHECK(big(0, 1) == 0.5);
  // Extended-precision reference from tests/oracles/golden.py.
  const Tensor s = softmax_rows(Tensor::from_rows({{1, 2, 3}}));
  CHECK(s(0, 0) == doctest::Approx(0.090030573170380457998).epsilon(1e-15));
  CHECK(s(0, 1) == doctest::Approx(0.24472847105479765247).epsilon(1e-15));
  CHECK(s(0, 2) == doctest::Approx(0.66524095577482188953).epsilon(1e-15));

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor(4, 7, rng, -50.0, 50.0);
    const Tensor y = softmax_rows(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (double v : y.row(r)) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("layer norm") {
  Tape tape;
  LayerNormParams ln("ln", 5);
  Var constant = tape.constant(Tensor(1, 5, 3.0));
  const Tensor zero = ln(tape, constant).value();
  CHECK(max_abs_diff(zero, Tensor(1, 5)) == 0.0);

  ln.gamma.value.fill(0.0);
  ln.beta.value = Tensor::from_rows({{1, 2, 3, 4, 5}});
  std::mt19937_64 rng(5);
  Tape tape2;
  CHECK(max_abs_diff(ln(tape2, tape2.constant(random_tensor(1, 5, rng))).value(), ln.beta.value) == 0.0);

  Tape tape3;
  LayerNormParams plain("plain", 64);
  const Tensor y = plain(tape3, tape3.constant(random_tensor(1, 64, rng, -3.0, 7.0))).value();
  double mean = 0.0, var = 0.0;
  for (double v : y.data()) mean += v;
  mean /= 64.0;
  for (double v : y.data()) var += (v - mean) * (v - mean);
  var /= 64.0;
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(var - 1.0) < 1e-4);  // eps = 1e-5 shrinks the variance slightly
}

TEST_CASE("layer norm moments before epsilon") {
  // With a large spread the epsilon contribution is negligible.
  std::mt19937_64 rng(8);
  Tape tape;
  LayerNormParams plain("plain", 32);
  const Tensor y = plain(tape, tape.constant(random_tensor(1, 32, rng, -100.0, 100.0))).value();
  double mean = 0.0, var = 0.0;
  for (double v : y.data()) mean += v;
  mean /= 32.0;
  for (double v : y.data()) var += (v - mean) * (v - mean);
  var /= 32.0;
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(var - 1.0) < 1e-6);
}

TEST_CASE("adam zero gradient is a no-op on values") {
  ParamTensor p("w", Tensor::from_rows({{1.0, -2.0}}));
  ParamSet set({&p});
  AdamState state;
  for (int i = 0; i < 5; ++i) adam_step(set, state);
  CHECK(p.value == Tensor::from_rows({{1.0, -2.0}}));
  CHECK(state.step == 5);
}

TEST_CASE("adam descends against a constant gradient") {
  ParamTensor p("w", Tensor::scalar(0.0));
  ParamSet set({&p});
  AdamState state;
  state.lr = 0.01;
  for (int i = 0; i < 20; ++i) {
    p.grad[0] = 3.0;
    adam_step(set, state);
  }
  CHECK(p.value[0] < 0.0);
  CHECK(p.grad[0] == 0.0);
}

TEST_CASE("adam matches the scalar reference trace on w^2") {
  // 40-digit hand-rolled Adam from tests/oracles/golden.py.
  const double trace[] = {0.9000000004999999975,  0.80041222869179214524, 0.70158627294602954516,
                          0.6039390605737448393,  0.50796365926434067674, 0.41423645599366060874,
                          0.3234207049391005065,  0.23626372452104057979, 0.15358456007036253631,
                          0.076249155606911102582};
  ParamTensor p("w", Tensor::scalar(1.0));
  ParamSet set({&p});
  AdamState state;
  state.lr = 0.1;
  double prev = 1.0;
  for (double expected : trace) {
    Tape tape;
    tape.backward(sum_squares(tape.param(p)));
    adam_step(set, state);
    CHECK(p.value[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(p.value[0]) < std::abs(prev));
    prev = p.value[0];
  }
}

TEST_CASE("adam rejects non-finite gradients by name") {
  ParamTensor a("good", Tensor::scalar(1.0)), b("bad", Tensor::scalar(1.0));
  ParamSet set({&a, &b});
  AdamState state;
  a.grad[0] = 1.0;
  b.grad[0] = std::nan("");
  try {
    adam_step(set, state);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
  CHECK(a.value[0] == 1.0);
}

TEST_CASE("param set rejects duplicate names") {
  ParamTensor a("x", Tensor::scalar(1.0)), b("x", Tensor::scalar(2.0));
  CHECK_THROWS_AS(ParamSet({&a, &b}), ConfigError);
}

TEST_CASE("initialization") {
  Linear lin("fc", 6, 4);
  LayerNormParams ln("ln", 4);
  std::vector<ParamTensor*> all;
  lin.collect(all);
  ln.collect(all);
  ParamSet set(all);
  initialize(set, 42);
  const double bound = std::sqrt(6.0 / 10.0);
  double max_abs = 0.0;
  for (double v : lin.weight.value.data()) max_abs = std::max(max_abs, std::abs(v));
  CHECK(max_abs <= bound);
  CHECK(max_abs > 0.0);
  CHECK(lin.bias.value == Tensor(1, 4));
  CHECK(ln.gamma.value == Tensor(1, 4, 1.0));
  CHECK(ln.beta.value == Tensor(1, 4));
  const Tensor first = lin.weight.value;
  initialize(set, 42);
  CHECK(lin.weight.value == first);
}

TEST_CASE("grad check on sum of squares is exact") {
  std::mt19937_64 rng(1);
  ParamTensor w("w", random_tensor(3, 4, rng));
  ParamSet set({&w});
  const auto report =
      grad_check([&](Tape& t) { return sum_squares(t.param(w)); }, set);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-9);
}

TEST_CASE("grad check of every composite op") {
  std::mt19937_64 rng(2);
  ParamTensor a("a", random_tensor(3, 4, rng)), b("b", random_tensor(4, 3, rng));
  ParamTensor row("row", random_tensor(1, 3, rng)), g("g", random_tensor(1, 3, rng, 0.5, 1.5));
  ParamTensor beta("beta", random_tensor(1, 3, rng));
  ParamSet set({&a, &b, &row, &g, &beta});
  const auto loss = [&](Tape& t) {
    Var x = matmul(t.param(a), t.param(b));
    x = add_row(x, t.param(row));
    x = layer_norm(x, t.param(g), t.param(beta));
    Var sm = softmax_rows(2.0 * x);
    Var y = relu(x + 0.3 * transpose(matmul(transpose(t.param(b)), transpose(t.param(a)))));
    const Var rows[] = {slice_rows(sm, 0, 2), slice_rows(y, 1, 2)};
    Var z = concat_rows(rows);
    const Var cols[] = {slice_cols(z, 0, 1), z - sm.tape().constant(Tensor(4, 3, 0.1))};
    Var w = cumsum_rows(reshape(concat_cols(cols), 8, 2));
    return sum_squares(w);
  };
  const auto report = grad_check(loss, set);
  CHECK(report.max_rel_error < 1e-6);
  CHECK(report.passed);
}

TEST_CASE("grad check detects a corrupted backward") {
  std::mt19937_64 rng(4);
  ParamTensor w("w", random_tensor(2, 2, rng));
  ParamSet set({&w});
  const auto broken = [&](Tape& t) {
    Var x = t.param(w);
    const Var inputs[] = {x};
    // Correct forward (identity), backward doubled.
    Var y = t.record(x.value(), inputs, [x](Tape& tape, const Tensor& g) {
      Tensor twice = g;
      twice *= 2.0;
      tape.accumulate(x, twice);
    });
    return sum_squares(y);
  };
  CHECK_FALSE(grad_check(broken, set).passed);
}

TEST_CASE("grad check aborts on a non-finite loss") {
  ParamTensor w("w", Tensor::scalar(1.0));
  ParamSet set({&w});
  const auto bad = [&](Tape& t) {
    Var x = t.param(w);
    return t.constant(Tensor::scalar(std::nan(""))) + sum_squares(x);
  };
  CHECK_THROWS_AS(grad_check(bad, set), NumericalError);
}

TEST_CASE("frozen parameters receive no gradient") {
  ParamTensor w("w", Tensor::scalar(2.0));
  Tape tape;
  tape.backward(sum_squares(tape.param(w, false)));
  CHECK(w.grad[0] == 0.0);
  Tape tape2;
  tape2.backward(sum_squares(tape2.param(w)));
  CHECK(w.grad[0] == 4.0);
}

TEST_CASE("archive round trip is bit-exact at 32-bit") {
  test::TempDir dir("archive");
  std::mt19937_64 rng(9);
  Linear lin("fc", 3, 5);
  std::vector<ParamTensor*> all;
  lin.collect(all);
  ParamSet set(all);
  lin.weight.value = random_tensor(3, 5, rng);
  Archive ar;
  ar.meta["note"] = "x";
  store_params(ar, set, "P.");
  write_archive(dir / "a.bin", ar);
  Archive back = read_archive(dir / "a.bin");
  CHECK(back.meta["note"] == "x");
  Linear other("fc", 3, 5);
  std::vector<ParamTensor*> oall;
  other.collect(oall);
  restore_params(back, ParamSet(oall), "P.");
  for (std::size_t i = 0; i < 15; ++i)
    CHECK(other.weight.value[i] == static_cast<double>(static_cast<float>(lin.weight.value[i])));
  // Saving the restored values again reproduces the same bytes.
  Archive again;
  again.meta["note"] = "x";
  store_params(again, ParamSet(oall), "P.");
  write_archive(dir / "b.bin", again);
  std::ifstream fa(dir / "a.bin", std::ios::binary), fb(dir / "b.bin", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);

  Linear wrong("fc", 3, 4);
  std::vector<ParamTensor*> wall;
  wrong.collect(wall);
  CHECK_THROWS_AS(restore_params(back, ParamSet(wall), "P."), ConfigError);
}

TEST_CASE("archive rejects garbage") {
  test::TempDir dir("archive-bad");
  {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << "NOTANARCHIVE";
  }
  CHECK_THROWS_AS(read_archive(dir / "bad.bin"), ParseError);
}

TEST_CASE("adam state round trip") {
  test::TempDir dir("adam");
  ParamTensor p("w", Tensor::from_rows({{1.0, 2.0}}));
  ParamSet set({&p});
  AdamState state;
  state.lr = 0.05;
  p.grad = Tensor::from_rows({{0.5, -0.25}});
  adam_step(set, state);
  Archive ar;
  store_adam(ar, state, "adam");
  write_archive(dir / "s.bin", ar);
  AdamState back;
  restore_adam(read_archive(dir / "s.bin"), back, "adam");
  CHECK(back.step == 1);
  CHECK(back.lr == 0.05);
  CHECK(back.moments.at("w").m.shape() == Shape{1, 2});
}

}  // TEST_SUITE
