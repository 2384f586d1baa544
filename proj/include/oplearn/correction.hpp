#pragma once

#include "oplearn/convnet.hpp"
#include "oplearn/solver.hpp"

namespace oplearn {

// Fidelity gradient of 0.5 || F(Atilde x) - y ||_Y^2 with a learned forward
// correction F: Atilde* J_F(Atilde x)* (F(Atilde x) - y).  The range is
// limited by range(Atilde*).
GradOracle corrected_oracle_forward(const ConvCorrection& f,
                                    const LinOp& atilde, const Vec& y);

// Declared forward/adjoint pair: gradient G(Atilde*(F(Atilde x) - y)).
GradOracle corrected_oracle_forward_adjoint(const ConvCorrection& f,
                                            const ConvCorrection& g,
                                            const LinOp& atilde, const Vec& y);

// Single-network normal correction N(Atilde* Atilde x) - b with
// b = G(Atilde* y) when an adjoint correction is declared as the pairing,
// else b = Atilde* y.
GradOracle corrected_oracle_normal(const ConvCorrection& n,
                                   const LinOp& atilde, const Vec& y,
                                   const ConvCorrection* g = nullptr);

// <g_exact, g_corrected>_X / ||g_exact||_X^2: positive iff the corrected
// direction descends the exact fidelity.  Deliberately unnormalised in the
// second argument, so values above 1 (overshoot) are visible; NaN when the
// exact gradient vanishes.
double alignment(const VecSpace& sp, const Vec& g_exact,
                 const Vec& g_corrected);

// Diagnostic distances to the convergence assumptions; reported, never
// thresholded.
double margin_forward(const LinOp& a, const ConvCorrection& f,
                      const LinOp& atilde, const Vec& x);
double margin_adjoint(const LinOp& a, const ConvCorrection& f,
                      const ConvCorrection& g, const LinOp& atilde,
                      const Vec& x, const Vec& y);

// Linear-span surrogate of the data manifold: projection onto the learned
// image subspace (image-primary system).
Vec manifold_project(const OrthoSystem& img, const Vec& x);

// Descent restricted to the manifold surrogate: the projector runs after
// every step.
GdResult gd_solve_on_manifold(const GradOracle& oracle,
                              const TvRegulariser& tv, GdConfig cfg,
                              const Vec& y, const OrthoSystem& img);

struct SequentialResult {
  Vec x;
  std::vector<double> outer_residual;  // ||A x_k - y|| / ||y||, k = 0..K
  Index a_calls = 0;                   // exactly one per outer step + final
  Index inner_iterations = 0;
};

// Outer loop freezing the model error: eps_k = A x_k - Atilde x_k, then an
// approximate-model solve against the shifted data y - eps_k.  Inner solves
// start from the configured x0 each time (the shifted problem does not
// depend on the previous iterate except through eps_k).
SequentialResult sequential_correct(const LinOp& a, const LinOp& atilde,
                                    const Vec& y, const TvRegulariser& tv,
                                    const GdConfig& inner, Index outer_k);

}  // namespace oplearn
