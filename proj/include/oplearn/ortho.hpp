#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oplearn/dataset.hpp"

namespace oplearn {

// Which of the three companion families is orthonormalised; the other two
// receive the identical triangular combinations.
//   image_primary:          x-hat orthonormal in X, y-hat = A x-hat
//   measurement_primary:    y-bar orthonormal in Y, A x-bar = y-bar
//   backprojection_primary: z-check orthonormal in X (spans the A*A range)
enum class OrthoMode { image_primary, measurement_primary, backprojection_primary };

std::string ortho_mode_name(OrthoMode m);

struct OrthoSystem {
  OrthoMode mode = OrthoMode::image_primary;
  VecSpace xspace, yspace;
  // families as columns, input (id) order preserved for kept members
  Mat xfam, yfam, zfam;
  std::vector<std::uint64_t> kept_ids;
  std::vector<std::uint64_t> dropped_ids;
  // coefficient record: primary input j (kept or dropped) decomposes over the
  // kept orthonormal prefix with column j of r (rows beyond n_eff unused)
  Mat r;
  std::uint64_t fingerprint = 0;

  Index n_eff() const { return xfam.cols(); }
  const Mat& primary() const;
  const VecSpace& primary_space() const;
};

// Joint modified Gram-Schmidt with one full reorthogonalisation pass.
// Inputs are first scaled by 1/||x^i||_X (all three components); a candidate
// whose primary residual drops below drop_tol times its pre-orthogonalisation
// norm is discarded and logged.  Throws NumericalError if everything drops.
OrthoSystem orthonormalise(const Dataset& ds, OrthoMode mode,
                           double drop_tol = 1e-10);

// Prefix sub-system: keeps members originating from the first n_in inputs
// (ids <= n_in).  MGS is order-preserving, so this equals orthonormalising
// the prefix dataset directly.
OrthoSystem truncate_system(const OrthoSystem& sys, Index n_in);

void write_ortho(const std::string& path, const OrthoSystem& sys);
OrthoSystem read_ortho(const std::string& path, std::uint64_t expect_fingerprint);

}  // namespace oplearn
