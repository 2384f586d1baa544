#include "oplearn/tv.hpp"

#include <cmath>

namespace oplearn {

double TvRegulariser::value(const Vec& x) const {
  const Index n = this->n;
  if (x.size() != n * n)
    throw ConfigError("tv: expected " + std::to_string(n * n) +
                      " entries, got " + std::to_string(x.size()));
  const double inv_h = static_cast<double>(n);
  double acc = 0.0;
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < n; ++r) {
      double v = x[r + c * n];
      double d1 = (r + 1 < n) ? (x[r + 1 + c * n] - v) * inv_h : 0.0;
      double d2 = (c + 1 < n) ? (x[r + (c + 1) * n] - v) * inv_h : 0.0;
      acc += std::sqrt(d1 * d1 + d2 * d2 + eps * eps);
    }
  return cell_measure * acc;
}

Vec TvRegulariser::grad(const Vec& x) const {
  const Index n = this->n;
  if (x.size() != n * n)
    throw ConfigError("tv: expected " + std::to_string(n * n) +
                      " entries, got " + std::to_string(x.size()));
  const double inv_h = static_cast<double>(n);
  Vec g = Vec::Zero(n * n);
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < n; ++r) {
      double v = x[r + c * n];
      double d1 = (r + 1 < n) ? (x[r + 1 + c * n] - v) * inv_h : 0.0;
      double d2 = (c + 1 < n) ? (x[r + (c + 1) * n] - v) * inv_h : 0.0;
      double denom = std::sqrt(d1 * d1 + d2 * d2 + eps * eps);
      double f1 = d1 / denom * inv_h;
      double f2 = d2 / denom * inv_h;
      g[r + c * n] -= f1 + f2;
      if (r + 1 < n) g[r + 1 + c * n] += f1;
      if (c + 1 < n) g[r + (c + 1) * n] += f2;
    }
  return g;
}

}  // namespace oplearn
