#pragma once

#include <cstdint>

#include "oplearn/types.hpp"

namespace oplearn {

// Random disc: centre uniform in [0.25, 0.75]^2, radius in [0.1, 0.2],
// amplitude in [0.5, 1.0]; support therefore stays inside [0.05, 0.95]^2.
struct DiscSpec {
  double cx = 0.5, cy = 0.5, r = 0.15, amplitude = 1.0;
};

DiscSpec sample_disc_spec(std::uint64_t seed);

// Hard indicator on pixel centres, flattened per to_grid convention.
Vec render_disc(const DiscSpec& spec, Index n);
Vec sample_disc(std::uint64_t seed, Index n);
// Union (pointwise max) of k discs; k = 1 reduces to sample_disc.
Vec sample_discs(std::uint64_t seed, Index n, int k);

// Smooth phantom: 3-6 Gaussian bumps, centres in [0.1, 0.9]^2, widths in
// [0.05, 0.15], weights in [0.5, 1], peak-normalised to 1.  Unlike discs
// these excite every pixel, so large families reach full numerical rank.
Vec sample_blobs(std::uint64_t seed, Index n);

struct NoiseResult {
  Vec y;
  double delta;  // realized absolute noise norm ||e||
};

// Gaussian noise rescaled so ||e|| / ||y|| equals level exactly (norms in
// sp).  level 0 returns y unchanged; a zero signal with level > 0 is an
// error because relative noise is undefined there.
NoiseResult add_noise(const VecSpace& sp, const Vec& y, double level,
                      std::uint64_t seed);

}  // namespace oplearn
