#pragma once

#include "oplearn/linop.hpp"

namespace oplearn {

// Discrete Radon transform on an N x N image over [0,1]^2.
// Angles theta_a = pi * a / angles; detectors span the image diagonal
// (extent sqrt(2), centred), spacing sqrt(2)/detectors.
struct RadonConfig {
  Index n = 16;
  Index angles = 60;
  Index detectors = 0;  // 0 -> ceil(1.5 * n)

  Index det() const;
  double h() const { return 1.0 / static_cast<double>(n); }
  double dtheta() const { return 3.14159265358979323846 / static_cast<double>(angles); }
  double ds() const;
  std::uint64_t fingerprint() const;
};

VecSpace radon_image_space(const RadonConfig& cfg);
VecSpace radon_sino_space(const RadonConfig& cfg);

// Joseph line integrals: each ray steps along its dominant axis and linearly
// interpolates across the other; the adjoint scatters the identical weights,
// scaled by the cell-measure ratio.
LinOp radon_build(const RadonConfig& cfg);

}  // namespace oplearn
