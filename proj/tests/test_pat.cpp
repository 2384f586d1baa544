#include <doctest.h>

#include <cmath>

#include "oplearn/pat.hpp"
#include "oplearn/phantom.hpp"
#include "oplearn/rng.hpp"

using namespace oplearn;

namespace {
PatConfig desk() {
  PatConfig c;
  c.n = 32;
  c.cfl = 0.4;
  c.nt = 64;
  return c;
}

Vec random_image(const VecSpace& sp, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Vec v(sp.dim());
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  return v;
}

// shift an image periodically along the transverse (column) axis
Vec shift_columns_image(const Vec& x, Index n, Index by) {
  Vec out(x.size());
  for (Index c = 0; c < n; ++c) {
    Index cs = (c + by) % n;
    out.segment(cs * n, n) = x.segment(c * n, n);
  }
  return out;
}
}  // namespace

TEST_CASE("pat configuration diagnostics") {
  PatConfig c = desk();
  CHECK(c.dt() == doctest::Approx(0.0125));
  CHECK(pat_validate(c).crossing_time_ok == false);  // T = 0.8 < 1/c
  c.nt = 96;
  CHECK(pat_validate(c).crossing_time_ok == true);
  c.cfl = 1.5;
  CHECK_THROWS_AS(pat_validate(c), ConfigError);
  c.cfl = 0.4;
  c.angular_threshold = 0.0;
  CHECK_THROWS_AS(pat_build_approx(c), ConfigError);
}

TEST_CASE("pat forward of zero is zero and the map is linear") {
  PatConfig c = desk();
  for (LinOp op : {pat_build_accurate(c), pat_build_approx(c)}) {
    CHECK(apply(op, Vec::Zero(op.domain.dim())).cwiseAbs().maxCoeff() == 0.0);
    Vec u = random_image(op.domain, 21), v = random_image(op.domain, 22);
    Vec lhs = apply(op, 3.0 * u + v);
    Vec rhs = 3.0 * apply(op, u) + apply(op, v);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("pat adjoints pass the dot test at desk scale") {
  PatConfig c = desk();
  SUBCASE("accurate, k-space corrected") {
    CHECK(adjoint_dot_test(pat_build_accurate(c), 10, 31).max_rel_discrepancy <
          1e-10);
  }
  SUBCASE("accurate, plain leapfrog") {
    PatConfig raw = c;
    raw.kspace_correction = false;
    CHECK(adjoint_dot_test(pat_build_accurate(raw), 10, 32)
              .max_rel_discrepancy < 1e-10);
  }
  SUBCASE("approximate") {
    CHECK(adjoint_dot_test(pat_build_approx(c), 10, 33).max_rel_discrepancy <
          1e-10);
  }
}

TEST_CASE("point source data is mirror-symmetric about the source column") {
  PatConfig c = desk();
  const Index n = c.n, nt = c.time_samples();
  const Index r0 = 20, c0 = 13;
  Vec x = Vec::Zero(n * n);
  x[r0 + c0 * n] = 1.0;
  for (LinOp op : {pat_build_accurate(c), pat_build_approx(c)}) {
    Vec y = apply(op, x);
    double worst = 0.0;
    for (Index k = 0; k < nt; ++k)
      for (Index d = 1; d < n / 2; ++d) {
        Index cl = ((c0 - d) % n + n) % n, cr = (c0 + d) % n;
        worst = std::max(worst,
                         std::abs(y[cl + k * n] - y[cr + k * n]));
      }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("first arrival at the sensor above the source is at depth / c") {
  PatConfig c = desk();
  c.nt = 96;
  const Index n = c.n, r0 = 16, c0 = 13;
  Vec x = Vec::Zero(n * n);
  x[r0 + c0 * n] = 1.0;
  Vec y = apply(pat_build_accurate(c), x);
  double expected = static_cast<double>(r0) * c.h() / (c.c * c.dt());
  // scan only before the periodic wrap images arrive: the nearest column
  // image sits at sqrt(r0^2 + n^2) pixels and its two copies add up to a
  // larger late peak than the direct arrival
  Index wrap = static_cast<Index>(
      std::sqrt(static_cast<double>(r0 * r0 + n * n)) / c.cfl);
  Index kmax = std::min(c.time_samples(), wrap - 4);
  Index peak = 0;
  double best = -1.0;
  for (Index k = 1; k < kmax; ++k) {
    double v = std::abs(y[c0 + k * n]);
    if (v > best) {
      best = v;
      peak = k;
    }
  }
  CHECK(std::abs(static_cast<double>(peak) - expected) <= 2.0);
}

TEST_CASE("both models commute with periodic transverse shifts") {
  PatConfig c = desk();
  const Index n = c.n, nt = c.time_samples(), by = 7;
  Vec x = sample_disc(99, n);
  for (LinOp op : {pat_build_accurate(c), pat_build_approx(c)}) {
    Vec y = apply(op, x);
    Vec ys = apply(op, shift_columns_image(x, n, by));
    double worst = 0.0;
    for (Index k = 0; k < nt; ++k)
      for (Index j = 0; j < n; ++j)
        worst = std::max(worst, std::abs(ys[(j + by) % n + k * n] -
                                         y[j + k * n]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("normal operator image of a disc keeps the mirror symmetry") {
  PatConfig c = desk();
  c.nt = 96;
  const Index n = c.n;
  DiscSpec spec;
  spec.cx = 0.5;
  spec.cy = 0.5;  // transverse centre: column axis symmetric about c=15.5
  spec.r = 0.2;
  Vec x = render_disc(spec, n);
  LinOp op = pat_build_accurate(c);
  Vec z = apply_adjoint(op, apply(op, x));
  double worst = 0.0;
  for (Index r = 0; r < n; ++r)
    for (Index cc = 0; cc < n / 2; ++cc)
      worst = std::max(worst, std::abs(z[r + cc * n] - z[r + (n - 1 - cc) * n]));
  CHECK(worst < 1e-9);
}

TEST_CASE("closed form equals the corrected leapfrog run literally") {
  PatConfig c = desk();
  Vec x = sample_disc(7, c.n);
  Vec closed = apply(pat_build_accurate(c), x);
  Vec stepped = pat_forward_timestepped(c, x);
  CHECK((closed - stepped).cwiseAbs().maxCoeff() /
            stepped.cwiseAbs().maxCoeff() <
        1e-9);
}

TEST_CASE("dispersion correction changes the plain leapfrog answer") {
  PatConfig c = desk();
  PatConfig raw = c;
  raw.kspace_correction = false;
  Vec x = sample_disc(7, c.n);
  Vec corrected = apply(pat_build_accurate(c), x);
  Vec uncorrected = apply(pat_build_accurate(raw), x);
  double rel = (corrected - uncorrected).norm() / corrected.norm();
  CHECK(rel > 1e-4);  // the multiplier differs at high wavenumbers
}

TEST_CASE("fast model is a genuine approximation, not a reimplementation") {
  PatConfig c = desk();
  c.nt = 96;
  LinOp a = pat_build_accurate(c);
  LinOp at = pat_build_approx(c);
  Vec x = sample_disc(55, c.n);
  Vec ya = apply(a, x);
  double rel = (apply(at, x) - ya).norm() / ya.norm();
  // regression band around the value measured on this fixed geometry and
  // seed (0.515): the binning damps late-time content, so the discrepancy
  // is substantial without being total
  CHECK(rel > 0.35);
  CHECK(rel < 0.70);

  Vec za = apply_adjoint(a, ya);
  Vec zt = apply_adjoint(at, apply(at, x));
  CHECK((zt - za).norm() / za.norm() > 0.05);
}

TEST_CASE("fast model discrepancy at production scale stays in its band") {
  PatConfig c;
  c.n = 64;
  LinOp a = pat_build_accurate(c);
  LinOp at = pat_build_approx(c);
  Vec x = sample_disc(0, c.n);
  Vec ya = apply(a, x);
  double rel = (apply(at, x) - ya).norm() / ya.norm();
  // measured 0.441 on the seed-0 disc at 64x64
  CHECK(rel > 0.30);
  CHECK(rel < 0.60);

  // the two normal operators disagree as well: the wrong model carries
  // wrong information even after backprojection (measured 0.345)
  Vec za = apply_adjoint(a, ya);
  Vec zt = apply_adjoint(at, apply(at, x));
  CHECK((zt - za).norm() / za.norm() > 0.05);
}

TEST_CASE("angular threshold trims transverse modes") {
  PatConfig c = desk();
  PatConfig cut = c;
  cut.angular_threshold = 0.3;
  Vec x = sample_disc(70, c.n);
  Vec full = apply(pat_build_approx(c), x);
  Vec trimmed = apply(pat_build_approx(cut), x);
  CHECK((full - trimmed).norm() / full.norm() > 1e-3);
}
