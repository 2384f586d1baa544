#pragma once

#include "oplearn/types.hpp"

namespace oplearn {

// Smoothed isotropic total variation on an N x N grid:
//   J(x) = mu * sum_p sqrt(d1(p)^2 + d2(p)^2 + eps^2),
// forward differences divided by the grid spacing, replicated edges (the
// one-sided difference at the last row/column is zero), mu the cell measure.
// The gradient returned is the weighted-space gradient, i.e. the vector g
// with J(x + t d) - J(x) = t <g, d>_X + o(t); the cell measure cancels
// against the inner product so g is the plain euclidean gradient of the sum.
struct TvRegulariser {
  Index n = 0;
  double eps = 1e-3;
  double cell_measure = 1.0;

  double value(const Vec& x) const;
  Vec grad(const Vec& x) const;
};

}  // namespace oplearn
