#include <doctest.h>

#include "oplearn/aem.hpp"
#include "oplearn/rng.hpp"

using namespace oplearn;

namespace {

Vec randn(Index n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

LinOp random_dense(Index rows, Index cols, const VecSpace& dom,
                   const VecSpace& cod, std::uint64_t seed, double shift) {
  SplitMix64 rng(seed);
  Mat m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal() + shift;
  return dense_op(m, dom, cod);
}

}  // namespace

TEST_CASE("a perfect surrogate degenerates to the jitter floor") {
  VecSpace dom({6, 1}, 1.0), cod({9, 1}, 1.0);
  LinOp a = random_dense(9, 6, dom, cod, 31, 0.0);
  Dataset ds;
  ds.xspace = dom;
  ds.yspace = cod;
  for (Index i = 0; i < 4; ++i) {
    TrainingTriple t;
    t.id = static_cast<std::uint64_t>(i + 1);
    t.x = randn(6, 100 + static_cast<std::uint64_t>(i));
    t.y = apply(a, t.x);
    t.z = apply_adjoint(a, t.y);
    ds.triples.push_back(t);
  }
  AemModel m = aem_fit(ds, a, a);
  CHECK(m.rank() == 0);
  CHECK(m.eta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.sigma2 == doctest::Approx(1e-12).epsilon(1e-12));
  Vec v = randn(9, 77);
  Vec w = m.whiten(v);
  CHECK((w - 1e6 * v).cwiseAbs().maxCoeff() < 1e-6 * v.cwiseAbs().maxCoeff());
}

TEST_CASE("identical error samples carry no covariance, only a mean") {
  VecSpace cod({5, 1}, 1.0);
  Vec e = randn(5, 9);
  AemModel m = aem_fit({e, e}, cod);
  CHECK(m.rank() == 0);
  CHECK((m.eta - e).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fit rejects degenerate inputs") {
  VecSpace cod({5, 1}, 1.0);
  Vec e = randn(5, 1);
  CHECK_THROWS_AS(aem_fit(std::vector<Vec>{e}, cod), ConfigError);
  CHECK_THROWS_AS(aem_fit({e, e}, cod, -0.1), ConfigError);
  Vec short_e = randn(4, 2);
  CHECK_THROWS_AS(aem_fit({e, short_e}, cod), ConfigError);
}

TEST_CASE("declared measurement noise adds to the diagonal") {
  VecSpace cod({5, 1}, 1.0);
  Vec e = randn(5, 9);
  AemModel plain = aem_fit({e, e}, cod);
  AemModel noisy = aem_fit({e, e}, cod, 0.5);
  CHECK(noisy.sigma2 == doctest::Approx(plain.sigma2 + 0.5).epsilon(1e-14));
}

TEST_CASE("whitening squared inverts the dense covariance") {
  const Index dim = 50, n = 10;
  VecSpace cod({dim, 1}, 0.7);
  std::vector<Vec> errors;
  for (Index i = 0; i < n; ++i)
    errors.push_back(randn(dim, 500 + static_cast<std::uint64_t>(i)));
  AemModel m = aem_fit(errors, cod);
  CHECK(m.rank() == n - 1);  // centring removes one direction

  Vec eta = Vec::Zero(dim);
  for (const Vec& e : errors) eta += e;
  eta /= static_cast<double>(n);
  Mat gamma = m.sigma2 * Mat::Identity(dim, dim);
  for (const Vec& e : errors) {
    Vec f = (e - eta) / std::sqrt(static_cast<double>(n - 1));
    gamma += cod.cell_measure() * (f * f.transpose());
  }

  Vec v = randn(dim, 999);
  Vec direct = gamma.ldlt().solve(v);
  Vec whitened = m.whiten(m.whiten(v));
  CHECK((whitened - direct).norm() / direct.norm() < 1e-6);

  double quad_fast = cod.inner(m.whiten(v), m.whiten(v));
  double quad_dense = cod.inner(direct, v);
  CHECK(std::abs(quad_fast - quad_dense) < 1e-6 * std::abs(quad_dense));
}

TEST_CASE("the aem gradient vanishes exactly at the shifted consistency point") {
  VecSpace dom({6, 1}, 1.0), cod({9, 1}, 0.5);
  LinOp a = random_dense(9, 6, dom, cod, 31, 0.0);
  LinOp atilde = random_dense(9, 6, dom, cod, 31, 0.3);
  std::vector<Vec> errors;
  for (Index i = 0; i < 5; ++i) {
    Vec x = randn(6, 60 + static_cast<std::uint64_t>(i));
    errors.push_back(apply(a, x) - apply(atilde, x));
  }
  AemModel m = aem_fit(errors, cod);
  // y = eta and x = 0 give a residual of exactly zero
  GradOracle o = make_oracle_aem(m, atilde, m.eta);
  CHECK(o.grad(Vec::Zero(6)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(o.objective(Vec::Zero(6)) == 0.0);
}

TEST_CASE("rank-zero aem is the approx model with shifted data") {
  VecSpace dom({6, 1}, 1.0), cod({9, 1}, 1.0);
  LinOp atilde = random_dense(9, 6, dom, cod, 8, 0.2);
  Vec e = randn(9, 4);
  AemModel m = aem_fit({e, e}, cod);
  REQUIRE(m.rank() == 0);

  Vec y = randn(9, 5);
  GradOracle aem = make_oracle_aem(m, atilde, y);
  GradOracle approx = make_oracle_approx(atilde, Vec(y - m.eta));
  Vec x = randn(6, 6);
  Vec g_scaled = m.sigma2 * aem.grad(x);
  Vec g_ref = approx.grad(x);
  CHECK((g_scaled - g_ref).norm() / g_ref.norm() < 1e-10);
}
