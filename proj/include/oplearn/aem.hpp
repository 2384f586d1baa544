#pragma once

#include "oplearn/solver.hpp"

namespace oplearn {

// Gaussian model of the operator mismatch eps = A x - Atilde x, fitted from
// samples: mean eta, covariance in factor form Gamma = F F* + sigma2 I with
// F's columns the centred samples / sqrt(N-1).  sigma2 is a small jitter
// (plus any declared measurement noise variance), so the whitener
// Gamma^{-1/2} is always defined; it is evaluated through the N x N Gram
// eigensystem of F, never a dense covariance.
struct AemModel {
  VecSpace yspace;
  Vec eta;
  Mat psi;      // orthonormal (in Y) eigenvectors of F F*, columns
  Vec wcoef;    // 1/sqrt(d_k + sigma2) - 1/sqrt(sigma2) per eigenvector
  double sigma2 = 0.0;
  Index rank() const { return psi.cols(); }

  // Gamma^{-1/2} v; applying it twice gives Gamma^{-1} v.
  Vec whiten(const Vec& v) const;
};

// noise_var adds a known measurement noise variance on top of the jitter
// (error folding: Gamma_total = Gamma_eps + noise_var I).
AemModel aem_fit(const std::vector<Vec>& errors, const VecSpace& yspace,
                 double noise_var = 0.0);

// Convenience: errors from running both models over the dataset's phantoms.
AemModel aem_fit(const Dataset& ds, const LinOp& a, const LinOp& atilde,
                 double noise_var = 0.0);

// Fidelity gradient of 0.5 || Gamma^{-1/2}(Atilde x - y + eta) ||_Y^2:
//   Atilde* Gamma^{-1}(Atilde x - y + eta).
GradOracle make_oracle_aem(const AemModel& m, const LinOp& atilde,
                           const Vec& y);

}  // namespace oplearn
