#include "oplearn/radon.hpp"

#include <cmath>

#include "oplearn/rng.hpp"

namespace oplearn {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kSqrt2 = 1.41421356237309504880;
}  // namespace

Index RadonConfig::det() const {
  if (detectors > 0) return detectors;
  return static_cast<Index>(std::ceil(1.5 * static_cast<double>(n)));
}

double RadonConfig::ds() const { return kSqrt2 / static_cast<double>(det()); }

std::uint64_t RadonConfig::fingerprint() const {
  std::string s = "radon|n=" + std::to_string(n) +
                  "|angles=" + std::to_string(angles) +
                  "|det=" + std::to_string(det());
  return fnv1a64(s.data(), s.size());
}

VecSpace radon_image_space(const RadonConfig& cfg) {
  return VecSpace({cfg.n, cfg.n}, cfg.h() * cfg.h());
}

VecSpace radon_sino_space(const RadonConfig& cfg) {
  return VecSpace({cfg.angles, cfg.det()}, cfg.dtheta() * cfg.ds());
}

namespace {

struct RadonGeom {
  Index n, angles, det;
  double h, ds;
  std::vector<double> cs, sn;
};

RadonGeom make_geom(const RadonConfig& cfg) {
  RadonGeom g;
  g.n = cfg.n;
  g.angles = cfg.angles;
  g.det = cfg.det();
  g.h = cfg.h();
  g.ds = cfg.ds();
  g.cs.resize(g.angles);
  g.sn.resize(g.angles);
  for (Index a = 0; a < g.angles; ++a) {
    double th = kPi * static_cast<double>(a) / static_cast<double>(g.angles);
    g.cs[a] = std::cos(th);
    g.sn[a] = std::sin(th);
  }
  return g;
}

// Enumerates Joseph interpolation weights for ray (a, d) and hands each
// (flat pixel index, weight) to fn.  Forward and adjoint share this walk so
// the adjoint is the exact transpose.
template <class Fn>
inline void walk_ray(const RadonGeom& g, Index a, Index d, Fn&& fn) {
  const double c = g.cs[a], s = g.sn[a];
  const double off =
      (static_cast<double>(d) + 0.5 - 0.5 * static_cast<double>(g.det)) * g.ds;
  const Index n = g.n;
  const double nd = static_cast<double>(n);
  if (std::abs(s) >= std::abs(c)) {
    // ray mostly along the first axis: step i, interpolate along j
    const double w = g.h / std::abs(s);
    for (Index i = 0; i < n; ++i) {
      double x = (static_cast<double>(i) + 0.5) * g.h - 0.5;
      double yf = ((off - x * c) / s + 0.5) / g.h - 0.5;
      if (yf <= -1.0 || yf >= nd) continue;
      double fl = std::floor(yf);
      Index j0 = static_cast<Index>(fl);
      double w1 = yf - fl;
      if (j0 >= 0 && j0 < n && w1 < 1.0) fn(i + j0 * n, (1.0 - w1) * w);
      if (j0 + 1 >= 0 && j0 + 1 < n && w1 > 0.0) fn(i + (j0 + 1) * n, w1 * w);
    }
  } else {
    const double w = g.h / std::abs(c);
    for (Index j = 0; j < n; ++j) {
      double y = (static_cast<double>(j) + 0.5) * g.h - 0.5;
      double xf = ((off - y * s) / c + 0.5) / g.h - 0.5;
      if (xf <= -1.0 || xf >= nd) continue;
      double fl = std::floor(xf);
      Index i0 = static_cast<Index>(fl);
      double w1 = xf - fl;
      if (i0 >= 0 && i0 < n && w1 < 1.0) fn(i0 + j * n, (1.0 - w1) * w);
      if (i0 + 1 >= 0 && i0 + 1 < n && w1 > 0.0) fn(i0 + 1 + j * n, w1 * w);
    }
  }
}

}  // namespace

LinOp radon_build(const RadonConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("radon: n must be >= 1");
  if (cfg.angles < 1) throw ConfigError("radon: angles must be >= 1");
  if (cfg.det() < cfg.n)
    throw ConfigError("radon: detectors (" + std::to_string(cfg.det()) +
                      ") must be >= n (" + std::to_string(cfg.n) + ")");
  RadonGeom geom = make_geom(cfg);
  VecSpace dom = radon_image_space(cfg);
  VecSpace cod = radon_sino_space(cfg);
  // adjoint weights are forward weights scattered back, rescaled by the
  // measure ratio so <A x, y>_sino == <x, A* y>_image
  const double ratio =
      cod.cell_measure() / dom.cell_measure();

  LinOp op;
  op.label = "radon";
  op.domain = dom;
  op.codomain = cod;
  op.config_fingerprint = cfg.fingerprint();
  op.apply = [geom](const Vec& x) -> Vec {
    Vec y = Vec::Zero(geom.angles * geom.det);
    for (Index a = 0; a < geom.angles; ++a)
      for (Index d = 0; d < geom.det; ++d) {
        double acc = 0.0;
        walk_ray(geom, a, d,
                 [&](Index px, double w) { acc += w * x[px]; });
        y[a + d * geom.angles] = acc;
      }
    return y;
  };
  op.apply_adjoint = [geom, ratio](const Vec& y) -> Vec {
    Vec x = Vec::Zero(geom.n * geom.n);
    for (Index a = 0; a < geom.angles; ++a)
      for (Index d = 0; d < geom.det; ++d) {
        double v = y[a + d * geom.angles] * ratio;
        if (v == 0.0) continue;
        walk_ray(geom, a, d, [&](Index px, double w) { x[px] += w * v; });
      }
    return x;
  };
  return op;
}

}  // namespace oplearn
