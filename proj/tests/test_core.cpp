#include <doctest.h>

#include "oplearn/linop.hpp"
#include "oplearn/rng.hpp"

using namespace oplearn;

TEST_CASE("vecspace inner products carry the cell measure") {
  VecSpace sp({2, 2}, 0.25);
  CHECK(sp.dim() == 4);
  Vec ones = Vec::Ones(4);
  CHECK(sp.inner(ones, ones) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sp.norm(ones) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(VecSpace({2, 2}, 0.0), ConfigError);
}

TEST_CASE("grid flattening is column-major and invertible") {
  Mat g(2, 3);
  g << 1, 2, 3, 4, 5, 6;
  Vec v = from_grid(g);
  CHECK(v[0] == 1);
  CHECK(v[1] == 4);  // (r=1, c=0) at flat index 1
  CHECK(v[2] == 2);
  Mat back = to_grid(v, 2, 3);
  CHECK((back - g).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identity operator passes the adjoint test exactly") {
  VecSpace sp({3, 3}, 1.0);
  LinOp id = identity_op(sp);
  AdjointTestReport rep = adjoint_dot_test(id, 10, 1);
  CHECK(rep.finite);
  CHECK(rep.max_rel_discrepancy == 0.0);
}

TEST_CASE("adjoint test flags a single tampered transpose entry") {
  Mat m(5, 4);
  SplitMix64 rng(42);
  for (Index j = 0; j < 4; ++j)
    for (Index i = 0; i < 5; ++i) m(i, j) = rng.uniform() < 0.5 ? -1.0 : 1.0;
  Mat mt = m.transpose();
  mt(1, 1) = -mt(1, 1);  // tamper one entry of the claimed adjoint
  VecSpace dom({4, 1}, 1.0), cod({5, 1}, 1.0);
  LinOp bad;
  bad.label = "tampered";
  bad.domain = dom;
  bad.codomain = cod;
  bad.apply = [m](const Vec& x) { return Vec(m * x); };
  bad.apply_adjoint = [mt](const Vec& y) { return Vec(mt * y); };
  AdjointTestReport rep = adjoint_dot_test(bad, 20, 7);
  CHECK(rep.finite);
  CHECK(rep.max_rel_discrepancy > 0.1);

  LinOp good = dense_op(m, dom, cod);
  CHECK(adjoint_dot_test(good, 20, 7).max_rel_discrepancy < 1e-14);
}

TEST_CASE("dense_op adjoint respects unequal cell measures") {
  Mat m = Mat::Random(6, 4);
  VecSpace dom({4, 1}, 0.5), cod({6, 1}, 2.0);
  LinOp op = dense_op(m, dom, cod);
  CHECK(adjoint_dot_test(op, 20, 3).max_rel_discrepancy < 1e-12);
}

TEST_CASE("svd_pinv_solve truncates exact null directions") {
  Mat m = Mat::Zero(2, 2);
  m(0, 0) = 2.0;
  Vec rhs(2);
  rhs << 4.0, 3.0;
  Vec x = svd_pinv_solve(m, rhs);
  CHECK(x[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(std::abs(x[1]) < 1e-14);
}

TEST_CASE("svd_pinv_solve recovers consistent full-rank systems") {
  SplitMix64 rng(9);
  Mat m(6, 4);
  for (Index j = 0; j < 4; ++j)
    for (Index i = 0; i < 6; ++i) m(i, j) = rng.normal();
  Vec xt(4);
  for (Index i = 0; i < 4; ++i) xt[i] = rng.normal();
  Vec x = svd_pinv_solve(m, m * xt);
  CHECK((x - xt).norm() / xt.norm() < 1e-8);
}

TEST_CASE("svd_pinv_solve matches the normal equations when overdetermined") {
  SplitMix64 rng(11);
  Mat m(8, 5);
  for (Index j = 0; j < 5; ++j)
    for (Index i = 0; i < 8; ++i) m(i, j) = rng.normal();
  Vec rhs(8);
  for (Index i = 0; i < 8; ++i) rhs[i] = rng.normal();
  Vec x = svd_pinv_solve(m, rhs);
  Vec xn = (m.transpose() * m).ldlt().solve(m.transpose() * rhs);
  CHECK((x - xn).norm() / xn.norm() < 1e-10);
}

TEST_CASE("dense_materialize reproduces the identity and enforces its cap") {
  VecSpace sp({4, 1}, 1.0);
  LinOp id = identity_op(sp);
  Mat m = dense_materialize(id);
  CHECK((m - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
  VecSpace big({200, 200}, 1.0);
  CHECK_THROWS_AS(dense_materialize(identity_op(big), 1000), ConfigError);
}

TEST_CASE("apply rejects shape mismatches with a named message") {
  VecSpace sp({3, 1}, 1.0);
  LinOp id = identity_op(sp, "probe");
  CHECK_THROWS_WITH_AS(apply(id, Vec::Zero(2)),
                       doctest::Contains("probe"), ConfigError);
}

TEST_CASE("splitmix streams are deterministic and seed-separated") {
  SplitMix64 a(5), b(5), c(6);
  for (int i = 0; i < 4; ++i) CHECK(a.next() == b.next());
  CHECK(SplitMix64(5).next() != c.next());
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  SplitMix64 n(3);
  for (int i = 0; i < 1000; ++i) {
    double u = n.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}
