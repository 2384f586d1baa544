#pragma once

#include <functional>
#include <string>
#include <vector>

#include "oplearn/learned.hpp"
#include "oplearn/tv.hpp"

namespace oplearn {

// Gradient of one half the squared data-fidelity in the image space; label
// names the modelling of the forward map.  objective is the fidelity value
// when the fidelity has a natural primal form, NaN otherwise (the two
// normal-equation variants).
struct GradOracle {
  std::string label;
  VecSpace space;
  std::function<Vec(const Vec&)> grad;
  std::function<double(const Vec&)> objective;
};

struct GdConfig {
  double tau0 = 0.0;       // 0 -> 1 / L-hat from power iterations
  double k_half = 0.0;     // >0 -> tau_k = tau0 / (1 + k / k_half)
  Index iters = 500;
  double alpha = 0.0;      // TV weight
  Vec x0;                  // empty -> zero start
  Index record_every = 10;
  double rel_change_floor = 1e-8;
  Index snapshot_every = 0;  // >0 -> keep iterate copies for harvesting
  std::function<Vec(const Vec&)> projector;  // applied after every step
  // optional misfit tracing against a reference operator and data
  const LinOp* trace_op = nullptr;
};

struct TraceRow {
  Index iteration = 0;
  double misfit = 0.0;      // ||A x - y|| / ||y|| under trace_op, else NaN
  double objective = 0.0;   // fidelity + alpha * TV, NaN without fidelity
  double rel_change = 0.0;
};

struct GdResult {
  Vec x;
  std::vector<TraceRow> trace;
  std::vector<Vec> snapshots;
  Index iterations_run = 0;
  bool aborted = false;        // non-finite iterate encountered
  std::string diagnostic;
  double tau0 = 0.0;           // step actually used
};

// Largest-curvature estimate of the oracle's quadratic part by power
// iterations on v -> grad(v) - grad(0); returns 1/L-hat as the default step.
double default_step(const GradOracle& oracle, int iters = 20,
                    std::uint64_t seed = 0x5eed);

// Plain (sub)gradient descent x <- x - tau_k (grad(x) + alpha grad_TV(x)),
// optional projector after each step; stops early when the relative change
// drops below the floor; aborts (keeping the last finite iterate) if the
// iterate leaves the finite range.
GdResult gd_solve(const GradOracle& oracle, const TvRegulariser& tv,
                  const GdConfig& cfg, const Vec& y);

// The six fidelity models.  Every factory captures its data vector; `y` in
// gd_solve is used for tracing only.
GradOracle make_oracle_exact(const LinOp& a, const Vec& y);
GradOracle make_oracle_projected(const OrthoSystem& img, const Vec& y);
GradOracle make_oracle_normal(const OrthoSystem& img, const OrthoSystem& meas,
                              const Vec& y);
// learned on the span, approximate model on its complement; the true
// operator never appears
GradOracle make_oracle_combined_forward(const OrthoSystem& img,
                                        const LinOp& atilde, const Vec& y);
GradOracle make_oracle_combined_normal(const OrthoSystem& img,
                                       const OrthoSystem& meas,
                                       const LinOp& atilde, const Vec& y);
GradOracle make_oracle_approx(const LinOp& atilde, const Vec& y);

}  // namespace oplearn
