#include "oplearn/correction.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace oplearn {

namespace {

Mat as_grid(const VecSpace& sp, const Vec& v) {
  return to_grid(v, sp.shape()[0], sp.shape()[1]);
}

}  // namespace

GradOracle corrected_oracle_forward(const ConvCorrection& f,
                                    const LinOp& atilde, const Vec& y) {
  auto fm = std::make_shared<ConvCorrection>(f);
  LinOp at = atilde;
  GradOracle o;
  o.label = "corrected-forward";
  o.space = atilde.domain;
  o.grad = [fm, at, y](const Vec& x) {
    Mat u = as_grid(at.codomain, apply(at, x));
    Mat r = fm->value(u) - as_grid(at.codomain, y);
    return apply_adjoint(at, from_grid(fm->input_vjp(u, r)));
  };
  o.objective = [fm, at, y](const Vec& x) {
    Mat u = as_grid(at.codomain, apply(at, x));
    Vec r = from_grid(fm->value(u)) - y;
    return 0.5 * at.codomain.inner(r, r);
  };
  return o;
}

GradOracle corrected_oracle_forward_adjoint(const ConvCorrection& f,
                                            const ConvCorrection& g,
                                            const LinOp& atilde,
                                            const Vec& y) {
  auto fm = std::make_shared<ConvCorrection>(f);
  auto gm = std::make_shared<ConvCorrection>(g);
  LinOp at = atilde;
  GradOracle o;
  o.label = "corrected-forward-adjoint";
  o.space = atilde.domain;
  o.grad = [fm, gm, at, y](const Vec& x) {
    Mat u = as_grid(at.codomain, apply(at, x));
    Vec r = from_grid(fm->value(u)) - y;
    Vec b = apply_adjoint(at, r);
    return from_grid(gm->value(as_grid(at.domain, b)));
  };
  o.objective = [fm, at, y](const Vec& x) {
    Mat u = as_grid(at.codomain, apply(at, x));
    Vec r = from_grid(fm->value(u)) - y;
    return 0.5 * at.codomain.inner(r, r);
  };
  return o;
}

GradOracle corrected_oracle_normal(const ConvCorrection& n,
                                   const LinOp& atilde, const Vec& y,
                                   const ConvCorrection* g) {
  auto nm = std::make_shared<ConvCorrection>(n);
  LinOp at = atilde;
  Vec aty = apply_adjoint(at, y);
  Vec b = g ? from_grid(g->value(as_grid(at.domain, aty))) : aty;
  GradOracle o;
  o.label = "corrected-normal";
  o.space = atilde.domain;
  o.grad = [nm, at, b](const Vec& x) -> Vec {
    Vec z = apply_adjoint(at, apply(at, x));
    return from_grid(nm->value(as_grid(at.domain, z))) - b;
  };
  return o;
}

double alignment(const VecSpace& sp, const Vec& g_exact,
                 const Vec& g_corrected) {
  double denom = sp.inner(g_exact, g_exact);
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sp.inner(g_exact, g_corrected) / denom;
}

double margin_forward(const LinOp& a, const ConvCorrection& f,
                      const LinOp& atilde, const Vec& x) {
  Vec ax = apply(a, x);
  Vec fx = from_grid(f.value(as_grid(atilde.codomain, apply(atilde, x))));
  return a.codomain.norm(ax - fx);
}

double margin_adjoint(const LinOp& a, const ConvCorrection& f,
                      const ConvCorrection& g, const LinOp& atilde,
                      const Vec& x, const Vec& y) {
  Vec r = from_grid(f.value(as_grid(atilde.codomain, apply(atilde, x)))) - y;
  Vec exact = apply_adjoint(a, r);
  Vec corr =
      from_grid(g.value(as_grid(atilde.domain, apply_adjoint(atilde, r))));
  return a.domain.norm(exact - corr);
}

Vec manifold_project(const OrthoSystem& img, const Vec& x) {
  if (img.mode != OrthoMode::image_primary)
    throw ConfigError("manifold_project needs an image-primary system");
  return project_primary(img, x);
}

GdResult gd_solve_on_manifold(const GradOracle& oracle,
                              const TvRegulariser& tv, GdConfig cfg,
                              const Vec& y, const OrthoSystem& img) {
  auto sys = std::make_shared<OrthoSystem>(img);
  cfg.projector = [sys](const Vec& x) { return manifold_project(*sys, x); };
  if (cfg.x0.size()) cfg.x0 = manifold_project(*sys, cfg.x0);
  return gd_solve(oracle, tv, cfg, y);
}

SequentialResult sequential_correct(const LinOp& a, const LinOp& atilde,
                                    const Vec& y, const TvRegulariser& tv,
                                    const GdConfig& inner, Index outer_k) {
  if (outer_k < 1) throw ConfigError("sequential_correct: outer_k >= 1");
  SequentialResult res;
  res.x = inner.x0.size() ? inner.x0 : Vec(Vec::Zero(a.domain.dim()));
  double ynorm = a.codomain.norm(y);
  double yden = ynorm > 0.0 ? ynorm : 1.0;
  for (Index k = 0; k < outer_k; ++k) {
    Vec ax = apply(a, res.x);  // the single true-model evaluation this step
    ++res.a_calls;
    res.outer_residual.push_back(a.codomain.norm(ax - y) / yden);
    Vec eps = ax - apply(atilde, res.x);
    Vec yk = y - eps;
    GradOracle oracle = make_oracle_approx(atilde, yk);
    GdResult r = gd_solve(oracle, tv, inner, yk);
    res.x = r.x;
    res.inner_iterations += r.iterations_run;
  }
  Vec ax = apply(a, res.x);  // final diagnostic evaluation
  ++res.a_calls;
  res.outer_residual.push_back(a.codomain.norm(ax - y) / yden);
  return res;
}

}  // namespace oplearn
