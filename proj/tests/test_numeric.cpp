#include <cmath>

#include "doctest.h"
#include "tnce/gradcheck.hpp"
#include "tnce/kernels.hpp"
#include "tnce/matrix.hpp"
#include "tnce/rng.hpp"
#include "tnce/tape.hpp"

using namespace tnce;

namespace {

Matrix random_matrix(int r, int c, RngStream& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Two-layer MLP + softmax cross-entropy, rebuilt per call; the shared test
// fixture for gradient checks.
struct MlpFixture {
  ParameterStore store;
  Matrix x;
  std::vector<int> targets;
  int w1, b1, w2, b2;

  MlpFixture(int batch, int din, int hidden, int classes, std::uint64_t seed) {
    RngStream rng(seed);
    w1 = store.add("w1", random_matrix(din, hidden, rng, 0.7));
    b1 = store.add("b1", random_matrix(1, hidden, rng, 0.1));
    w2 = store.add("w2", random_matrix(hidden, classes, rng, 0.7));
    b2 = store.add("b2", random_matrix(1, classes, rng, 0.1));
    x = random_matrix(batch, din, rng);
    for (int i = 0; i < batch; ++i)
      targets.push_back(static_cast<int>(rng.uniform_int(classes)));
  }

  double loss(bool compute_grad) {
    Tape tape(&store);
    auto xin = tape.input(x);
    auto h = tape.relu(tape.affine(xin, tape.param(w1), tape.param(b1)));
    auto logits = tape.affine(h, tape.param(w2), tape.param(b2));
    auto l = tape.softmax_cross_entropy(logits, targets);
    if (compute_grad) tape.backward(l);
    return tape.scalar(l);
  }
};

}  // namespace

TEST_CASE("affine identity and annihilator") {
  ParameterStore store;
  Tape tape(&store);
  auto x = tape.input(Matrix::from_rows({{1.0, 2.0}}));
  auto w = tape.input(Matrix::identity(2));
  auto b = tape.input(Matrix(1, 2));
  auto y = tape.affine(x, w, b);
  CHECK(tape.value(y) == Matrix::from_rows({{1.0, 2.0}}));

  auto wz = tape.input(Matrix(2, 3));
  auto bz = tape.input(Matrix(1, 3));
  auto z = tape.affine(x, wz, bz);
  CHECK(tape.value(z) == Matrix(1, 3));
}

TEST_CASE("affine hand-computed example") {
  // [1 2] * [[1 0],[2 1]] + [1 1] = [1*1+2*2+1, 1*0+2*1+1] = [6 3]
  Tape tape;
  auto y = tape.affine(tape.input(Matrix::from_rows({{1.0, 2.0}})),
                       tape.input(Matrix::from_rows({{1.0, 0.0}, {2.0, 1.0}})),
                       tape.input(Matrix::from_rows({{1.0, 1.0}})));
  CHECK(tape.value(y) == Matrix::from_rows({{6.0, 3.0}}));
}

TEST_CASE("affine shape mismatch names both shapes") {
  Tape tape;
  auto x = tape.input(Matrix(2, 3));
  auto w = tape.input(Matrix(4, 5));
  auto b = tape.input(Matrix(1, 5));
  try {
    tape.affine(x, w, b);
    FAIL("expected shape error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x5") != std::string::npos);
  }
}

TEST_CASE("relu definition and idempotence") {
  Tape tape;
  auto x = tape.input(Matrix::from_rows({{-1.0, 0.0, 2.0}}));
  auto y = tape.relu(x);
  CHECK(tape.value(y) == Matrix::from_rows({{0.0, 0.0, 2.0}}));

  auto neg = tape.relu(tape.input(Matrix::from_rows({{-3.0, -0.5}})));
  CHECK(tape.value(neg) == Matrix(1, 2));

  RngStream rng(7);
  auto r = tape.input(random_matrix(5, 9, rng));
  auto once = tape.relu(r);
  auto twice = tape.relu(once);
  CHECK(tape.value(once) == tape.value(twice));
}

TEST_CASE("normalize_rows") {
  Tape tape;
  auto unit = tape.normalize_rows(tape.input(Matrix::from_rows({{0.6, 0.8}})), 1e-12);
  CHECK(tape.value(unit).max_abs_diff(Matrix::from_rows({{0.6, 0.8}})) < 1e-15);

  auto scaled = tape.normalize_rows(tape.input(Matrix::from_rows({{3.0, 4.0}})), 1e-12);
  CHECK(tape.value(scaled).max_abs_diff(Matrix::from_rows({{0.6, 0.8}})) < 1e-15);

  auto zero = tape.normalize_rows(tape.input(Matrix(1, 4)), 1e-12);
  CHECK(tape.value(zero) == Matrix(1, 4));
}

TEST_CASE("softmax cross entropy oracle values") {
  Tape tape;
  auto uniform = tape.softmax_cross_entropy(tape.input(Matrix(3, 4)), {0, 1, 3});
  CHECK(tape.scalar(uniform) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  auto two = tape.softmax_cross_entropy(tape.input(Matrix::from_rows({{1.0, 0.0}})), {0});
  CHECK(tape.scalar(two) ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));

  auto sharp = tape.softmax_cross_entropy(
      tape.input(Matrix::from_rows({{10.0, -10.0}})), {0});
  CHECK(tape.scalar(sharp) < 1e-8);
  CHECK(tape.scalar(sharp) >= 0.0);
}

TEST_CASE("softmax rows sum to one within 1e-12") {
  RngStream rng(11);
  Matrix p = softmax_rows(random_matrix(40, 17, rng, 5.0));
  for (int i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < p.cols(); ++j) s += p(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax cross entropy rejects out-of-range target") {
  Tape tape;
  auto logits = tape.input(Matrix(2, 3));
  CHECK_THROWS_AS(tape.softmax_cross_entropy(logits, {0, 3}), Error);
}

TEST_CASE("backward on scalar products") {
  ParameterStore store;
  int xi = store.add("x", Matrix::from_rows({{2.0}}));
  int yi = store.add("y", Matrix::from_rows({{3.0}}));

  {
    Tape tape(&store);
    auto loss = tape.mul(tape.param(xi), tape.param(yi));
    tape.backward(loss);
    CHECK(store.entry(xi).grad(0, 0) == 3.0);
    CHECK(store.entry(yi).grad(0, 0) == 2.0);
  }
  {
    store.entry(xi).value(0, 0) = 3.0;
    Tape tape(&store);
    auto x = tape.param(xi);
    auto loss = tape.mul(x, x);
    tape.backward(loss);
    CHECK(store.entry(xi).grad(0, 0) == 6.0);
  }
}

TEST_CASE("backward before forward is an error") {
  ParameterStore store;
  Tape tape(&store);
  CHECK_THROWS_AS(tape.backward(0), Error);

  int xi = store.add("x", Matrix::from_rows({{1.0}}));
  Tape t2(&store);
  auto loss = t2.mul(t2.param(xi), t2.param(xi));
  t2.backward(loss);
  CHECK(t2.consumed());
  CHECK_THROWS_AS(t2.backward(loss), Error);   // consumed
  CHECK_THROWS_AS(t2.param(xi), Error);        // no recording after sweep
}

TEST_CASE("two-layer network matches finite differences") {
  MlpFixture fix(4, 3, 5, 3, 42);
  auto res = finite_difference_check(
      fix.store, [&](bool g) { return fix.loss(g); }, 1e-5);
  CHECK(res.max_rel_error < 1e-4);

  // Central differences: error shrinks as the step shrinks (O(h^2) truncation
  // until roundoff takes over).
  auto res_half = finite_difference_check(
      fix.store, [&](bool g) { return fix.loss(g); }, 5e-6);
  CHECK(res_half.max_rel_error < 10.0 * res.max_rel_error + 1e-9);
}

TEST_CASE("finite differences are near-exact for linear maps") {
  ParameterStore store;
  RngStream rng(3);
  int wi = store.add("w", random_matrix(4, 1, rng));
  Matrix x = random_matrix(1, 4, rng);
  auto loss_fn = [&](bool g) {
    Tape tape(&store);
    auto y = tape.affine(tape.input(x), tape.param(wi),
                         tape.input(Matrix(1, 1)));
    auto l = tape.sum(y);
    if (g) tape.backward(l);
    return tape.scalar(l);
  };
  auto res = finite_difference_check(store, loss_fn, 1e-5);
  CHECK(res.max_rel_error <= 1e-9);
}

TEST_CASE("finite differences on a constant function") {
  ParameterStore store;
  store.add("w", Matrix::from_rows({{1.0, -2.0}}));
  auto loss_fn = [&](bool g) {
    Tape tape(&store);
    auto c = tape.input(Matrix::from_rows({{5.0}}));
    auto l = tape.sum(c);
    if (g) tape.backward(l);
    return tape.scalar(l);
  };
  auto res = finite_difference_check(store, loss_fn, 1e-5);
  CHECK(res.max_rel_error == 0.0);
  CHECK(store.entry(0).grad == Matrix(1, 2));
}

TEST_CASE("gradients match finite differences over 100 seeds") {
  // Chains every differentiable primitive: affine, relu, normalize_rows,
  // concat, scale, contrast_scores, softmax cross-entropy.
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    RngStream rng(seed);
    ParameterStore store;
    const int din = 2 + static_cast<int>(rng.uniform_int(3));
    const int hidden = 2 + static_cast<int>(rng.uniform_int(4));
    const int dout = 2 + static_cast<int>(rng.uniform_int(3));
    int w1 = store.add("w1", random_matrix(din, hidden, rng, 0.8));
    int b1 = store.add("b1", random_matrix(1, hidden, rng, 0.2));
    int w2 = store.add("w2", random_matrix(hidden, dout, rng, 0.8));
    int b2 = store.add("b2", random_matrix(1, dout, rng, 0.2));
    Matrix xa = random_matrix(3, din, rng);
    Matrix xb = random_matrix(3, din, rng);
    std::vector<int> targets = {0, 1, 0};

    auto loss_fn = [&](bool g) {
      Tape tape(&store);
      auto enc = [&](const Matrix& x) {
        auto h = tape.relu(tape.affine(tape.input(x), tape.param(w1), tape.param(b1)));
        auto o = tape.affine(h, tape.param(w2), tape.param(b2));
        return tape.normalize_rows(o, 1e-12);
      };
      auto ea = enc(xa);
      auto eb = enc(xb);
      std::array<Tape::NodeId, 2> parts{ea, eb};
      auto all = tape.concat_cols(parts);          // 3 x 2*dout
      auto scores = tape.contrast_scores(all, {0, 1, 2},
                                         {0, 1, 1, 2, 2, 0}, 2);
      auto logits = tape.scale(scores, 1.0 / 0.3);
      auto l = tape.softmax_cross_entropy(logits, targets);
      if (g) tape.backward(l);
      return tape.scalar(l);
    };
    auto res = finite_difference_check(store, loss_fn, 1e-5);
    CAPTURE(seed);
    REQUIRE(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("repeated backward passes are bit-identical") {
  MlpFixture fix(6, 4, 8, 3, 99);
  fix.loss(true);
  std::vector<Matrix> first;
  for (int p = 0; p < fix.store.count(); ++p)
    first.push_back(fix.store.entry(p).grad);
  fix.loss(true);
  for (int p = 0; p < fix.store.count(); ++p)
    CHECK(first[p] == fix.store.entry(p).grad);
}

TEST_CASE("serial and openmp kernels agree exactly") {
  RngStream rng(2024);
  for (auto [m, k, n] : {std::array<int, 3>{3, 4, 5},
                         std::array<int, 3>{64, 33, 17},
                         std::array<int, 3>{200, 8, 40}}) {
    Matrix a = random_matrix(m, k, rng);
    Matrix b = random_matrix(k, n, rng);
    Matrix bt = random_matrix(n, k, rng);
    Matrix at = random_matrix(k, m, rng);

    Matrix s1(m, n), s2(m, n);
    kernels::serial::gemm_nn(a, b, s1, false);
    kernels::openmp::gemm_nn(a, b, s2, false);
    CHECK(s1 == s2);

    kernels::serial::gemm_nt(a, bt, s1, false);
    kernels::openmp::gemm_nt(a, bt, s2, false);
    CHECK(s1 == s2);

    kernels::serial::gemm_tn(at, b, s1, false);
    kernels::openmp::gemm_tn(at, b, s2, false);
    CHECK(s1 == s2);

    // accumulate path
    Matrix acc1 = random_matrix(m, n, rng);
    Matrix acc2 = acc1;
    kernels::serial::gemm_nn(a, b, acc1, true);
    kernels::openmp::gemm_nn(a, b, acc2, true);
    CHECK(acc1 == acc2);
  }
}

TEST_CASE("parameter snapshot round-trips through flatten/assign") {
  RngStream rng(5);
  ParameterStore store;
  store.add("a", random_matrix(3, 4, rng));
  store.add("b", random_matrix(1, 7, rng));
  auto flat = store.flatten();
  Matrix before = store.entry(0).value;
  store.entry(0).value(1, 2) = 123.0;
  store.assign(flat);
  CHECK(store.entry(0).value == before);
  CHECK_THROWS_AS(store.assign(std::vector<double>(3)), Error);
}
