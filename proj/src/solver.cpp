#include "oplearn/solver.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "oplearn/rng.hpp"

namespace oplearn {

namespace {
const double kNaN = std::numeric_limits<double>::quiet_NaN();
}

double default_step(const GradOracle& oracle, int iters, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Vec v(oracle.space.dim());
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  double nv = oracle.space.norm(v);
  if (nv == 0.0) return 1.0;
  v /= nv;
  Vec g0 = oracle.grad(Vec::Zero(v.size()));
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vec w = oracle.grad(v) - g0;  // curvature action on v
    lambda = oracle.space.norm(w);
    if (!(lambda > 1e-300)) return 1.0;
    v = w / lambda;
  }
  return 1.0 / lambda;
}

GdResult gd_solve(const GradOracle& oracle, const TvRegulariser& tv,
                  const GdConfig& cfg, const Vec& y) {
  const VecSpace& sp = oracle.space;
  GdResult res;
  res.x = cfg.x0.size() ? cfg.x0 : Vec(Vec::Zero(sp.dim()));
  if (res.x.size() != sp.dim())
    throw ConfigError("gd_solve: x0 length " + std::to_string(cfg.x0.size()) +
                      " does not match space dim " + std::to_string(sp.dim()));
  if (cfg.alpha != 0.0 && tv.n * tv.n != sp.dim())
    throw ConfigError("gd_solve: TV grid does not match the image space");
  res.tau0 = cfg.tau0 > 0.0 ? cfg.tau0 : default_step(oracle);

  double ynorm = 0.0;
  if (cfg.trace_op) ynorm = cfg.trace_op->codomain.norm(y);
  auto misfit = [&](const Vec& x) -> double {
    if (!cfg.trace_op) return kNaN;
    double m = cfg.trace_op->codomain.norm(apply(*cfg.trace_op, x) - y);
    return ynorm > 0.0 ? m / ynorm : m;
  };
  auto objective = [&](const Vec& x) -> double {
    if (!oracle.objective) return kNaN;
    double f = oracle.objective(x);
    if (cfg.alpha != 0.0) f += cfg.alpha * tv.value(x);
    return f;
  };

  Index last_recorded = -1;
  auto record = [&](Index it, double relch) {
    res.trace.push_back({it, misfit(res.x), objective(res.x), relch});
    last_recorded = it;
  };
  record(0, kNaN);

  const double tiny = 1e-300;
  for (Index k = 0; k < cfg.iters; ++k) {
    Vec g = oracle.grad(res.x);
    if (cfg.alpha != 0.0) g += cfg.alpha * tv.grad(res.x);
    double tau = cfg.k_half > 0.0
                     ? res.tau0 / (1.0 + static_cast<double>(k) / cfg.k_half)
                     : res.tau0;
    Vec xn = res.x - tau * g;
    if (cfg.projector) xn = cfg.projector(xn);
    if (!xn.allFinite()) {
      res.aborted = true;
      res.diagnostic = "non-finite iterate at step " + std::to_string(k + 1) +
                       "; keeping the last finite iterate";
      break;
    }
    double relch = sp.norm(xn - res.x) / std::max(sp.norm(res.x), tiny);
    res.x = std::move(xn);
    res.iterations_run = k + 1;
    if (cfg.snapshot_every > 0 && (k + 1) % cfg.snapshot_every == 0)
      res.snapshots.push_back(res.x);
    if ((k + 1) % std::max<Index>(cfg.record_every, 1) == 0 ||
        k + 1 == cfg.iters)
      record(k + 1, relch);
    if (relch < cfg.rel_change_floor) {
      if (last_recorded != k + 1) record(k + 1, relch);
      res.diagnostic = "relative change below floor at step " +
                       std::to_string(k + 1);
      break;
    }
  }
  if (last_recorded != res.iterations_run) record(res.iterations_run, kNaN);
  return res;
}

GradOracle make_oracle_exact(const LinOp& a, const Vec& y) {
  GradOracle o;
  o.label = "exact";
  o.space = a.domain;
  LinOp op = a;
  o.grad = [op, y](const Vec& x) {
    return apply_adjoint(op, apply(op, x) - y);
  };
  o.objective = [op, y](const Vec& x) {
    Vec r = apply(op, x) - y;
    return 0.5 * op.codomain.inner(r, r);
  };
  return o;
}

GradOracle make_oracle_projected(const OrthoSystem& img, const Vec& y) {
  auto s = std::make_shared<OrthoSystem>(img);
  GradOracle o;
  o.label = "projected";
  o.space = img.xspace;
  o.grad = [s, y](const Vec& x) {
    Vec r = apply_learned_forward(*s, x) - y;
    return apply_learned_forward_adjoint(*s, r);
  };
  o.objective = [s, y](const Vec& x) {
    Vec r = apply_learned_forward(*s, x) - y;
    return 0.5 * s->yspace.inner(r, r);
  };
  return o;
}

GradOracle make_oracle_normal(const OrthoSystem& img, const OrthoSystem& meas,
                              const Vec& y) {
  auto s = std::make_shared<OrthoSystem>(img);
  Vec b = apply_learned_normal_data(meas, y);
  GradOracle o;
  o.label = "normal";
  o.space = img.xspace;
  o.grad = [s, b](const Vec& x) -> Vec {
    return apply_learned_normal(*s, x) - b;
  };
  return o;
}

GradOracle make_oracle_combined_forward(const OrthoSystem& img,
                                        const LinOp& atilde, const Vec& y) {
  auto s = std::make_shared<OrthoSystem>(img);
  LinOp at = atilde;
  // complement part of the data backprojection, (I - P_Xn) Atilde* y
  Vec v = apply_adjoint(at, y);
  Vec bc = v - project_primary(*s, v);
  GradOracle o;
  o.label = "combined-forward";
  o.space = img.xspace;
  o.grad = [s, at, y, bc](const Vec& x) {
    Vec r = apply_learned_forward(*s, x) - y;
    Vec g = apply_learned_forward_adjoint(*s, r);
    Vec u = x - project_primary(*s, x);
    Vec w = apply_adjoint(at, apply(at, u));
    g += w - project_primary(*s, w);
    g -= bc;
    return g;
  };
  o.objective = [s, at, y](const Vec& x) {
    Vec u = x - project_primary(*s, x);
    Vec r = apply_learned_forward(*s, x) + apply(at, u) - y;
    return 0.5 * s->yspace.inner(r, r);
  };
  return o;
}

GradOracle make_oracle_combined_normal(const OrthoSystem& img,
                                       const OrthoSystem& meas,
                                       const LinOp& atilde, const Vec& y) {
  auto si = std::make_shared<OrthoSystem>(img);
  auto sm = std::make_shared<OrthoSystem>(meas);
  LinOp at = atilde;
  Vec b = apply_learned_normal_data(*sm, y) +
          apply_adjoint(at, y - project_primary(*sm, y));
  GradOracle o;
  o.label = "combined-normal";
  o.space = img.xspace;
  o.grad = [si, at, b](const Vec& x) {
    Vec g = apply_learned_normal(*si, x);
    Vec u = x - project_primary(*si, x);
    g += apply_adjoint(at, apply(at, u));
    g -= b;
    return g;
  };
  return o;
}

GradOracle make_oracle_approx(const LinOp& atilde, const Vec& y) {
  GradOracle o = make_oracle_exact(atilde, y);
  o.label = "approx";
  return o;
}

}  // namespace oplearn
