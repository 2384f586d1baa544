#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "oplearn/types.hpp"

namespace oplearn {

// Matrix-free linear operator between two inner-product spaces.
// apply/apply_adjoint must satisfy <A u, w>_codomain == <u, A* w>_domain,
// with both inner products carrying their cell measures.
struct LinOp {
  std::string label;
  VecSpace domain;
  VecSpace codomain;
  std::function<Vec(const Vec&)> apply;
  std::function<Vec(const Vec&)> apply_adjoint;
  // hash of the serialized generating configuration; 0 for ad-hoc operators
  std::uint64_t config_fingerprint = 0;
};

// Shape-checked application (throws ConfigError on dimension mismatch,
// naming the operator and both shapes).
Vec apply(const LinOp& op, const Vec& x);
Vec apply_adjoint(const LinOp& op, const Vec& y);

struct AdjointTestReport {
  double max_rel_discrepancy = 0.0;  // +inf when a non-finite value appeared
  int worst_trial = -1;
  bool finite = true;
};

// Randomized adjoint consistency probe: draws i.i.d. standard normal u, w
// and reports max over trials of
//   |<A u, w> - <u, A* w>| / (||A u|| ||w|| + tiny).
// Non-finite operator output marks the report non-finite (treated as failure).
AdjointTestReport adjoint_dot_test(const LinOp& op, int trials,
                                   std::uint64_t seed);

// Column-by-column densification, A e_j; refuses matrices above max_entries.
Mat dense_materialize(const LinOp& op,
                      std::size_t max_entries = std::size_t{1} << 26);

// Minimum-norm least-squares solution via SVD with relative singular value
// cutoff rcond (values <= rcond * sigma_max are truncated).
Vec svd_pinv_solve(const Mat& m, const Vec& rhs, double rcond = 1e-12);

LinOp identity_op(const VecSpace& sp, std::string label = "identity");

// Wraps a plain matrix; the adjoint accounts for the two cell measures:
// A* = (mu_codomain / mu_domain) * M^T.
LinOp dense_op(Mat m, VecSpace domain, VecSpace codomain,
               std::string label = "dense");

}  // namespace oplearn
