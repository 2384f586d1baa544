#pragma once

#include "oplearn/linop.hpp"

namespace oplearn {

// 2D photoacoustic forward problem on an N x N grid over [0,1]^2 with
// periodic boundaries.  The initial pressure is the unknown image; the line
// of sensors is grid row 0 (one sensor per pixel column); the measurement is
// the pressure time series at every sensor, Nt samples at spacing dt.
// Grid entry (r, c): r = depth away from the sensor line, c = transverse.
struct PatConfig {
  Index n = 64;
  double c = 1.0;
  double cfl = 0.3;  // dt = cfl * h / c
  Index nt = 0;      // 0 -> 2 n
  bool kspace_correction = true;
  // keep only modes with |k1| <= threshold * |omega| / c in the fast model;
  // 1 coincides with the evanescent cutoff, i.e. no extra restriction
  double angular_threshold = 1.0;

  double h() const { return 1.0 / static_cast<double>(n); }
  double dt() const { return cfl * h() / c; }
  Index time_samples() const { return nt > 0 ? nt : 2 * n; }
  double t_total() const { return static_cast<double>(time_samples()) * dt(); }
  std::uint64_t fingerprint(bool approx) const;
};

struct PatValidation {
  bool crossing_time_ok = true;  // Nt*dt >= 1/c: wave can cross the domain
  double t_total = 0.0;
  std::string note;
};

PatValidation pat_validate(const PatConfig& cfg);

VecSpace pat_image_space(const PatConfig& cfg);
VecSpace pat_data_space(const PatConfig& cfg);

// Full-wave solver.  With the k-space correction on, the corrected leapfrog
// is algebraically the exact per-mode solution p_hat(k,t) = cos(c|k|t) x_hat(k)
// (Chebyshev identity), so that closed form is evaluated directly; with the
// correction off, the literal second-order-in-time leapfrog runs instead.
LinOp pat_build_accurate(const PatConfig& cfg);

// Reference time-stepped forward (always the literal leapfrog, with the
// configured dispersion multiplier); exists to cross-check the closed form.
Vec pat_forward_timestepped(const PatConfig& cfg, const Vec& x);

// Fast approximate model: one FFT2, a dispersion-relation resampling from
// (k1, k2) modes onto (k1, omega) bins with Jacobian weight
// B(k1,omega) = omega / sqrt((omega/c)^2 - k1^2), a cosine synthesis in time,
// and an inverse FFT across sensors.  Evanescent modes are dropped.
LinOp pat_build_approx(const PatConfig& cfg);

}  // namespace oplearn
