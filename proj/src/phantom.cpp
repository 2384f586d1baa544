#include "oplearn/phantom.hpp"

#include <cmath>

#include "oplearn/rng.hpp"

namespace oplearn {

DiscSpec sample_disc_spec(std::uint64_t seed) {
  SplitMix64 rng(seed);
  DiscSpec s;
  s.cx = rng.uniform(0.25, 0.75);
  s.cy = rng.uniform(0.25, 0.75);
  s.r = rng.uniform(0.1, 0.2);
  s.amplitude = rng.uniform(0.5, 1.0);
  return s;
}

Vec render_disc(const DiscSpec& spec, Index n) {
  Vec x = Vec::Zero(n * n);
  const double h = 1.0 / static_cast<double>(n);
  const double r2 = spec.r * spec.r;
  for (Index c = 0; c < n; ++c) {
    double pc = (static_cast<double>(c) + 0.5) * h - spec.cy;
    for (Index r = 0; r < n; ++r) {
      double pr = (static_cast<double>(r) + 0.5) * h - spec.cx;
      if (pr * pr + pc * pc <= r2) x[r + c * n] = spec.amplitude;
    }
  }
  return x;
}

Vec sample_disc(std::uint64_t seed, Index n) {
  return render_disc(sample_disc_spec(seed), n);
}

Vec sample_discs(std::uint64_t seed, Index n, int k) {
  if (k < 1) throw ConfigError("sample_discs: count must be >= 1");
  if (k == 1) return sample_disc(seed, n);
  Vec x = Vec::Zero(n * n);
  for (int i = 0; i < k; ++i) {
    Vec d = sample_disc(derive_seed(seed, 0x9000 + static_cast<std::uint64_t>(i)), n);
    x = x.cwiseMax(d);
  }
  return x;
}

Vec sample_blobs(std::uint64_t seed, Index n) {
  SplitMix64 rng(seed);
  int count = 3 + static_cast<int>(rng.uniform() * 4.0);
  if (count > 6) count = 6;
  struct Blob {
    double cx, cy, sigma, w;
  };
  std::vector<Blob> blobs(count);
  for (Blob& b : blobs) {
    b.cx = rng.uniform(0.1, 0.9);
    b.cy = rng.uniform(0.1, 0.9);
    b.sigma = rng.uniform(0.05, 0.15);
    b.w = rng.uniform(0.5, 1.0);
  }
  Vec x = Vec::Zero(n * n);
  const double h = 1.0 / static_cast<double>(n);
  for (Index c = 0; c < n; ++c) {
    double pc = (static_cast<double>(c) + 0.5) * h;
    for (Index r = 0; r < n; ++r) {
      double pr = (static_cast<double>(r) + 0.5) * h;
      double v = 0.0;
      for (const Blob& b : blobs) {
        double du = pr - b.cx, dv = pc - b.cy;
        v += b.w * std::exp(-(du * du + dv * dv) / (2.0 * b.sigma * b.sigma));
      }
      x[r + c * n] = v;
    }
  }
  double peak = x.maxCoeff();
  if (peak > 0.0) x /= peak;
  return x;
}

NoiseResult add_noise(const VecSpace& sp, const Vec& y, double level,
                      std::uint64_t seed) {
  if (level < 0.0) throw ConfigError("add_noise: level must be >= 0");
  if (level == 0.0) return {y, 0.0};
  double ynorm = sp.norm(y);
  if (ynorm == 0.0)
    throw ConfigError(
        "add_noise: relative level on an exactly zero signal is undefined");
  SplitMix64 rng(seed);
  Vec e(y.size());
  for (Index i = 0; i < e.size(); ++i) e[i] = rng.normal();
  double enorm = sp.norm(e);
  if (enorm == 0.0)
    throw NumericalError("add_noise: degenerate zero noise draw");
  double scale = level * ynorm / enorm;
  NoiseResult out;
  out.y = y + scale * e;
  out.delta = level * ynorm;
  return out;
}

}  // namespace oplearn
