#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mcmult/optim.hpp"
#include "mcmult/tensor.hpp"

using namespace mcmult;

namespace {

Matrix random_matrix(Rng& rng, Index rows, Index cols, double lo = -1.0,
                     double hi = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = uniform_range(rng, lo, hi);
    }
  }
  return m;
}

// Independent triple-loop product.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      for (Index k = 0; k < a.cols(); ++k) {
        out(i, j) += a(i, k) * b(k, j);
      }
    }
  }
  return out;
}

// Sliding-window convolution, written directly from the definition.
Matrix conv_oracle(const Matrix& x, const Matrix& kernel, const Matrix& bias,
                   int k) {
  const Index t_len = x.rows();
  const Index d_in = x.cols();
  const Index d_out = kernel.cols();
  const int half = (k - 1) / 2;
  Matrix out(t_len, d_out);
  for (Index t = 0; t < t_len; ++t) {
    for (Index o = 0; o < d_out; ++o) {
      double acc = bias(0, o);
      for (int tap = 0; tap < k; ++tap) {
        const Index src = t + tap - half;
        if (src < 0 || src >= t_len) continue;
        for (Index i = 0; i < d_in; ++i) {
          acc += x(src, i) * kernel(tap * d_in + i, o);
        }
      }
      out(t, o) = acc;
    }
  }
  return out;
}

// Runs fn forward under a fresh tape, backprops, returns grad of the leaf.
template <typename Fn>
Matrix grad_of(const Matrix& x, Fn&& fn) {
  Tape tape;
  Var vx = tape.leaf(x);
  Var loss = fn(tape, vx);
  tape.backward(loss);
  return vx.grad();
}

template <typename Fn>
double fd_check(const Matrix& x, Fn&& fn, double eps = 1e-5) {
  Matrix analytic = grad_of(x, fn);
  const auto value_at = [&fn](const Matrix& probe) {
    Tape tape;
    Var vx = tape.leaf(probe);
    return fn(tape, vx).value()(0, 0);
  };
  return finite_diff_check(value_at, x, analytic, eps);
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
  Tape tape;
  Matrix b(2, 2);
  b << 5, 6, 7, 8;
  Var vi = tape.leaf(Matrix::Identity(2, 2));
  Var vb = tape.leaf(b);
  CHECK(matmul(vi, vb).value().isApprox(b, 0.0));

  Var vz = tape.leaf(Matrix::Zero(2, 3));
  Rng rng(1);
  Var vr = tape.leaf(random_matrix(rng, 3, 4));
  CHECK(matmul(vz, vr).value().isZero(0.0));
}

TEST_CASE("matmul against triple-loop oracle") {
  Tape tape;
  Matrix a(2, 2), b(2, 2), expect(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  expect << 19, 22, 43, 50;
  Var prod = matmul(tape.leaf(a), tape.leaf(b));
  CHECK(prod.value() == expect);
  CHECK(prod.value() == matmul_oracle(a, b));

  Rng rng(2);
  const Matrix ra = random_matrix(rng, 3, 5);
  const Matrix rb = random_matrix(rng, 5, 4);
  Var rprod = matmul(tape.leaf(ra), tape.leaf(rb));
  CHECK((rprod.value() - matmul_oracle(ra, rb)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("matmul shape error names both shapes") {
  Tape tape;
  Var a = tape.leaf(Matrix::Zero(2, 3));
  Var b = tape.leaf(Matrix::Zero(4, 2));
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       doctest::Contains("2x3"), DimensionError);
}

TEST_CASE("matmul associativity on random triples") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Index m = uniform_int(rng, 1, 6);
    const Index k = uniform_int(rng, 1, 6);
    const Index l = uniform_int(rng, 1, 6);
    const Index n = uniform_int(rng, 1, 6);
    Tape tape;
    Var a = tape.leaf(random_matrix(rng, m, k));
    Var b = tape.leaf(random_matrix(rng, k, l));
    Var c = tape.leaf(random_matrix(rng, l, n));
    const Matrix left = matmul(matmul(a, b), c).value();
    const Matrix right = matmul(a, matmul(b, c)).value();
    const double denom = std::max(1.0, left.cwiseAbs().maxCoeff());
    CHECK((left - right).cwiseAbs().maxCoeff() / denom < 1e-10);
  }
}

TEST_CASE("matmul backward rule") {
  Rng rng(4);
  const Matrix a = random_matrix(rng, 3, 4);
  const Matrix b = random_matrix(rng, 4, 2);
  Tape tape;
  Var va = tape.leaf(a);
  Var vb = tape.leaf(b);
  Var loss = sum_all(matmul(va, vb));
  tape.backward(loss);
  CHECK(va.grad().isApprox(Matrix::Ones(3, 2) * b.transpose(), 1e-12));
  CHECK(vb.grad().isApprox(a.transpose() * Matrix::Ones(3, 2), 1e-12));
}

TEST_CASE("softmax rows: constant, single column, analytic") {
  Tape tape;
  Matrix c(1, 3);
  c << 4.2, 4.2, 4.2;
  const Matrix sm = softmax_rows(tape.leaf(c)).value();
  CHECK(sm(0, 0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(sm(0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-15));

  const Matrix one = softmax_rows(tape.leaf(random_matrix(
                                      *(new Rng(5)), 4, 1)))
                         .value();
  CHECK(one.isApprox(Matrix::Ones(4, 1), 0.0));

  Matrix two(1, 2);
  two << 0.0, std::log(3.0);
  const Matrix sm2 = softmax_rows(tape.leaf(two)).value();
  CHECK(sm2(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(sm2(0, 1) == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one, entries in [0,1], masked exactly zero") {
  Rng rng(6);
  for (int trial = 0; trial < 25; ++trial) {
    const Index m = uniform_int(rng, 1, 5);
    const Index n = uniform_int(rng, 2, 7);
    BoolMask mask(m, n);
    for (Index i = 0; i < m; ++i) {
      bool any = false;
      for (Index j = 0; j < n; ++j) {
        mask(i, j) = uniform01(rng) < 0.7;
        any = any || mask(i, j);
      }
      if (!any) mask(i, uniform_int(rng, 0, n - 1)) = true;
    }
    Tape tape;
    const Matrix w =
        softmax_rows(tape.leaf(random_matrix(rng, m, n, -4, 4)), &mask)
            .value();
    for (Index i = 0; i < m; ++i) {
      CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-12);
      for (Index j = 0; j < n; ++j) {
        CHECK(w(i, j) >= 0.0);
        CHECK(w(i, j) <= 1.0);
        if (!mask(i, j)) CHECK(w(i, j) == 0.0);
      }
    }
  }
}

TEST_CASE("softmax fully masked row is a mask error") {
  Tape tape;
  BoolMask mask = BoolMask::Constant(2, 3, true);
  mask.row(1) = false;
  Var x = tape.leaf(Matrix::Zero(2, 3));
  CHECK_THROWS_AS(softmax_rows(x, &mask), MaskError);
}

TEST_CASE("layer_norm trivial rows") {
  Tape tape;
  Var gain = tape.leaf(Matrix::Ones(1, 4));
  Var bias = tape.leaf(Matrix::Zero(1, 4));
  const Matrix zeroed =
      layer_norm(tape.leaf(Matrix::Constant(2, 4, 3.7)), gain, bias).value();
  CHECK(zeroed.cwiseAbs().maxCoeff() < 1e-12);

  Var gain2 = tape.leaf(Matrix::Ones(1, 2));
  Var bias2 = tape.leaf(Matrix::Zero(1, 2));
  Matrix pm(1, 2);
  pm << -1, 1;
  const Matrix out = layer_norm(tape.leaf(pm), gain2, bias2).value();
  CHECK(out(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(out(0, 1) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("layer_norm against mean/variance oracle") {
  Rng rng(7);
  const Matrix x = random_matrix(rng, 3, 4, -2, 2);
  const Matrix g = random_matrix(rng, 1, 4);
  const Matrix b = random_matrix(rng, 1, 4);
  Tape tape;
  const Matrix out =
      layer_norm(tape.leaf(x), tape.leaf(g), tape.leaf(b)).value();
  for (Index i = 0; i < x.rows(); ++i) {
    double mean = 0.0;
    for (Index j = 0; j < x.cols(); ++j) mean += x(i, j);
    mean /= x.cols();
    double var = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
      var += (x(i, j) - mean) * (x(i, j) - mean);
    }
    var /= x.cols();
    for (Index j = 0; j < x.cols(); ++j) {
      const double expect =
          (x(i, j) - mean) / std::sqrt(var + 1e-5) * g(0, j) + b(0, j);
      CHECK(std::abs(out(i, j) - expect) < 1e-12);
    }
  }
}

TEST_CASE("conv1d_same identity, annihilator, oracle") {
  Tape tape;
  Rng rng(8);
  const Matrix x = random_matrix(rng, 5, 3);

  // k=1 identity kernel maps input to itself.
  Var out = conv1d_same(tape.leaf(x), tape.leaf(Matrix::Identity(3, 3)),
                        tape.leaf(Matrix::Zero(1, 3)), 1);
  CHECK(out.value() == x);

  // Zero kernel leaves only the bias.
  Matrix bias(1, 2);
  bias << 0.5, -1.5;
  Var flat = conv1d_same(tape.leaf(x), tape.leaf(Matrix::Zero(9, 2)),
                         tape.leaf(bias), 3);
  for (Index t = 0; t < 5; ++t) {
    CHECK(flat.value()(t, 0) == 0.5);
    CHECK(flat.value()(t, 1) == -1.5);
  }

  // T=4, k=3 random case matches the sliding-window oracle exactly.
  const Matrix x4 = random_matrix(rng, 4, 3);
  const Matrix kernel = random_matrix(rng, 9, 2);
  const Matrix b4 = random_matrix(rng, 1, 2);
  Var got = conv1d_same(tape.leaf(x4), tape.leaf(kernel), tape.leaf(b4), 3);
  CHECK(got.value() == conv_oracle(x4, kernel, b4, 3));

  // Output length always matches input length.
  for (int t_len : {1, 2, 3, 7}) {
    const Matrix xi = random_matrix(rng, t_len, 3);
    Var o = conv1d_same(tape.leaf(xi), tape.leaf(kernel), tape.leaf(b4), 3);
    CHECK(o.value().rows() == t_len);
  }
}

TEST_CASE("conv1d_same rejects even kernel width") {
  Tape tape;
  Var x = tape.leaf(Matrix::Zero(4, 2));
  Var k = tape.leaf(Matrix::Zero(4, 2));
  Var b = tape.leaf(Matrix::Zero(1, 2));
  CHECK_THROWS_AS(conv1d_same(x, k, b, 2), ConfigError);
}

TEST_CASE("dropout eval mode and zero rate are bit-identical") {
  Rng data_rng(9);
  const Matrix x = random_matrix(data_rng, 6, 6);
  Rng rng(10);
  Tape tape;
  Var vx = tape.leaf(x);
  CHECK(dropout(vx, 0.4, false, rng).value() == x);
  CHECK(dropout(vx, 0.0, true, rng).value() == x);
  CHECK_THROWS_AS(dropout(vx, 1.0, true, rng), ConfigError);
}

TEST_CASE("dropout keeps about the right fraction and the mean") {
  Rng data_rng(11);
  const Matrix x = Matrix::Constant(100, 100, 2.0);
  Rng rng(12);
  Tape tape;
  const Matrix out = dropout(tape.leaf(x), 0.5, true, rng).value();
  Index kept = 0;
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) {
      if (out(i, j) != 0.0) {
        ++kept;
        CHECK(out(i, j) == doctest::Approx(4.0));
      }
    }
  }
  const double frac = static_cast<double>(kept) / (100.0 * 100.0);
  CHECK(frac > 0.48);
  CHECK(frac < 0.52);
  // E[out] = x; 3 sigma for the mean of 1e4 Bernoulli-scaled entries.
  const double sigma = 2.0 / 100.0;  // per-entry sd 2, 1e4 entries
  CHECK(std::abs(out.mean() - 2.0) < 3.0 * sigma);
}

TEST_CASE("backward populates grads exactly once") {
  Rng rng(13);
  const Matrix x = random_matrix(rng, 3, 4);
  // root = sum(x): unit gradient everywhere.
  {
    Tape tape;
    Var vx = tape.leaf(x);
    tape.backward(sum_all(vx));
    CHECK(vx.grad() == Matrix::Ones(3, 4));
  }
  // root = sum(x .* x): gradient 2x.
  {
    Tape tape;
    Var vx = tape.leaf(x);
    tape.backward(sum_all(mul(vx, vx)));
    CHECK(vx.grad().isApprox(2.0 * x, 1e-14));
  }
  // A leaf never touched by the root keeps a zero gradient.
  {
    Tape tape;
    Var used = tape.leaf(x);
    Var unused = tape.leaf(x);
    tape.backward(sum_all(used));
    CHECK(unused.grad().isZero(0.0));
  }
}

TEST_CASE("backward rejects non-scalar roots") {
  Tape tape;
  Var vx = tape.leaf(Matrix::Zero(2, 2));
  CHECK_THROWS_AS(tape.backward(vx), ContractError);
}

TEST_CASE("finite differences validate every composite op") {
  Rng rng(14);
  const Matrix x = random_matrix(rng, 4, 6, -1.5, 1.5);

  CHECK(fd_check(x, [](Tape&, Var v) { return sum_all(v); }) < 1e-10);
  CHECK(fd_check(x, [](Tape&, Var v) { return sum_all(mul(v, v)); }) < 1e-8);

  const Matrix w = random_matrix(rng, 6, 3);
  CHECK(fd_check(x, [&](Tape& t, Var v) {
          return sum_all(mul(matmul(v, t.leaf(w)), matmul(v, t.leaf(w))));
        }) < 1e-6);

  CHECK(fd_check(x, [](Tape&, Var v) {
          Var s = softmax_rows(v);
          return sum_all(mul(s, s));
        }) < 1e-6);

  const Matrix gain = random_matrix(rng, 1, 6);
  const Matrix bias = random_matrix(rng, 1, 6);
  CHECK(fd_check(x, [&](Tape& t, Var v) {
          Var n = layer_norm(v, t.leaf(gain), t.leaf(bias));
          return sum_all(mul(n, n));
        }) < 1e-6);

  const Matrix kernel = random_matrix(rng, 18, 4);
  const Matrix cbias = random_matrix(rng, 1, 4);
  CHECK(fd_check(x, [&](Tape& t, Var v) {
          Var c = conv1d_same(v, t.leaf(kernel), t.leaf(cbias), 3);
          return sum_all(mul(c, c));
        }) < 1e-6);

  CHECK(fd_check(x, [](Tape&, Var v) {
          return sum_all(mul(relu(v), relu(v)));
        }) < 1e-6);

  const Matrix y = random_matrix(rng, 4, 6);
  CHECK(fd_check(x, [&](Tape& t, Var v) {
          return sum_all(mul(matmul_nt(v, t.leaf(y)), matmul_nt(v, t.leaf(y))));
        }) < 1e-6);

  CHECK(fd_check(x, [&](Tape& t, Var v) {
          Var d = rowwise_dot(v, t.leaf(y));
          return sum_all(mul(d, d));
        }) < 1e-6);

  const Matrix wcol = random_matrix(rng, 4, 1);
  CHECK(fd_check(x, [&](Tape& t, Var v) {
          Var s = scale_rows(v, t.leaf(wcol));
          return sum_all(mul(s, s));
        }) < 1e-6);

  CHECK(fd_check(x, [](Tape&, Var v) {
          Var a = slice_cols(v, 1, 3);
          Var b = slice_cols(v, 0, 2);
          Var c = concat_cols({a, b});
          return sum_all(mul(c, c));
        }) < 1e-6);

  CHECK(fd_check(x, [](Tape&, Var v) {
          Var r = row(v, 2);
          return sum_all(mul(r, r));
        }) < 1e-6);

  Matrix logits = random_matrix(rng, 1, 5);
  CHECK(fd_check(logits, [](Tape&, Var v) {
          return cross_entropy_loss(v, 3);
        }) < 1e-6);
}

TEST_CASE("masked softmax gradient matches finite differences") {
  Rng rng(15);
  const Matrix x = random_matrix(rng, 3, 5, -2, 2);
  BoolMask mask = BoolMask::Constant(3, 5, true);
  mask(0, 1) = false;
  mask(2, 4) = false;
  mask(2, 0) = false;
  CHECK(fd_check(x, [&](Tape&, Var v) {
          Var s = softmax_rows(v, &mask);
          return sum_all(mul(s, s));
        }) < 1e-6);
}

TEST_CASE("adam first step, zero-grad fixed point, convergence") {
  // First step with positive scalar gradient moves by about -lr.
  {
    ParameterStore store;
    Parameter& w = store.add("w", 1, 1, ParamInit::Zero);
    w.value(0, 0) = 1.0;
    w.grad(0, 0) = 0.3;
    AdamState state;
    adam_step(store, state, 1e-3);
    CHECK(w.value(0, 0) ==
          doctest::Approx(1.0 - 1e-3 * 0.3 / (0.3 + 1e-8)).epsilon(1e-9));
    CHECK(state.step_count == 1);
  }
  // Zero gradients leave parameters untouched.
  {
    ParameterStore store;
    Parameter& w = store.add("w", 2, 2, ParamInit::One);
    AdamState state;
    adam_step(store, state, 1e-3);
    CHECK(w.value == Matrix::Ones(2, 2));
  }
  // 200 steps on (w-3)^2 from w=0 converge into the basin.
  {
    ParameterStore store;
    Parameter& w = store.add("w", 1, 1, ParamInit::Zero);
    AdamState state;
    for (int i = 0; i < 200; ++i) {
      w.grad(0, 0) = 2.0 * (w.value(0, 0) - 3.0);
      adam_step(store, state, 0.1);
      w.grad.setZero();
    }
    CHECK(std::abs(w.value(0, 0) - 3.0) < 0.5);
  }
}

TEST_CASE("clip_global_norm thresholds and idempotence") {
  {
    ParameterStore store;
    Parameter& a = store.add("a", 1, 2, ParamInit::Zero);
    a.grad << 0.3, 0.4;  // norm 0.5
    clip_global_norm(store, 0.8);
    CHECK(a.grad(0, 0) == 0.3);
    CHECK(a.grad(0, 1) == 0.4);
  }
  {
    ParameterStore store;
    Parameter& a = store.add("a", 1, 1, ParamInit::Zero);
    a.grad(0, 0) = 1.6;
    clip_global_norm(store, 0.8);
    CHECK(a.grad(0, 0) == doctest::Approx(0.8).epsilon(1e-14));
  }
  Rng rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    ParameterStore store;
    Parameter& a = store.add("a", 3, 4, ParamInit::Zero);
    Parameter& b = store.add("b", 2, 2, ParamInit::Zero);
    a.grad = random_matrix(rng, 3, 4, -2, 2);
    b.grad = random_matrix(rng, 2, 2, -2, 2);
    const double pre =
        std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm());
    clip_global_norm(store, 0.8);
    const double post =
        std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm());
    CHECK(std::abs(post - std::min(pre, 0.8)) < 1e-12);
    const Matrix once_a = a.grad, once_b = b.grad;
    clip_global_norm(store, 0.8);
    CHECK((a.grad - once_a).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((b.grad - once_b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("cross entropy saturated and uniform cases") {
  Tape tape;
  Matrix sat = Matrix::Zero(1, 7);
  sat(0, 2) = 30.0;
  CHECK(cross_entropy_loss(tape.leaf(sat), 2).value()(0, 0) < 1e-12);

  const Matrix uniform = Matrix::Constant(1, 7, 1.3);
  CHECK(cross_entropy_loss(tape.leaf(uniform), 4).value()(0, 0) ==
        doctest::Approx(std::log(7.0)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy_loss(tape.leaf(uniform), 7), ContractError);
}

TEST_CASE("l1 loss values and subgradient") {
  Tape tape;
  Var p = tape.leaf(Matrix::Constant(1, 1, 2.0));
  CHECK(l1_loss(p, 2.0).value()(0, 0) == 0.0);
  CHECK(l1_loss(p, 1.5).value()(0, 0) == doctest::Approx(0.5));
  {
    Tape t2;
    Var v = t2.leaf(Matrix::Constant(1, 1, 2.0));
    Var loss = l1_loss(v, 1.0);
    t2.backward(loss);
    CHECK(v.grad()(0, 0) == 1.0);
  }
  {
    Tape t2;
    Var v = t2.leaf(Matrix::Constant(1, 1, 0.25));
    Var loss = l1_loss(v, 1.0);
    t2.backward(loss);
    CHECK(v.grad()(0, 0) == -1.0);
  }
}

TEST_CASE("finite_diff_check reference behaviors") {
  Rng rng(17);
  const Matrix x = random_matrix(rng, 3, 3);
  CHECK(finite_diff_check([](const Matrix& m) { return m.sum(); }, x,
                          Matrix::Ones(3, 3), 1e-4) < 1e-10);
  CHECK(finite_diff_check(
            [](const Matrix& m) { return m.squaredNorm(); }, x,
            2.0 * x, 1e-4) < 1e-8);
}

TEST_CASE("parameter store rejects duplicates and counts scalars") {
  ParameterStore store;
  store.add("a", 2, 3, ParamInit::Projection);
  store.add("b", 1, 4, ParamInit::Zero);
  CHECK_THROWS_AS(store.add("a", 1, 1, ParamInit::Zero), ContractError);
  CHECK(store.scalar_count() == 10);
  store.init_values(5);
  CHECK(store.at("b").value.isZero(0.0));
  const double bound = std::sqrt(6.0 / 5.0);
  CHECK(store.at("a").value.cwiseAbs().maxCoeff() <= bound);
  // Same seed, same draw.
  ParameterStore twin;
  twin.add("a", 2, 3, ParamInit::Projection);
  twin.add("b", 1, 4, ParamInit::Zero);
  twin.init_values(5);
  CHECK(twin.at("a").value == store.at("a").value);
}
