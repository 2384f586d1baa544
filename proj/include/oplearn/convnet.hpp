#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oplearn/types.hpp"

namespace oplearn {

// Residual convolutional correction u -> u + C(u):
//   C = conv5x5(1->16) -> leaky-relu(0.1) -> conv5x5(16->16) -> leaky-relu
//       -> conv5x5(16->1), zero-padded SAME, linear last layer.
// Shape-agnostic: works on any H x W field (image- or data-space).  All
// derivatives are hand-rolled reverse mode; the pairing for both VJPs is the
// plain euclidean inner product (callers fold in cell measures).
class ConvCorrection {
public:
  ConvCorrection() = default;
  // Weights i.i.d. N(0, 2/fan_in) per layer, final layer scaled by 1e-2 so
  // the map starts near the identity; biases start at zero.
  ConvCorrection(Index hidden, double slope, std::uint64_t seed);

  Mat value(const Mat& u) const;
  // d/du <value(u), w>  (the residual pass-through contributes w itself)
  Mat input_vjp(const Mat& u, const Mat& w) const;
  // d/dtheta <value(u), w>, flattened like params()
  Vec param_grad(const Mat& u, const Mat& w) const;

  Vec params() const;
  void set_params(const Vec& p);
  Index num_params() const;
  std::string descriptor() const;

private:
  struct Layer {
    Mat w;  // (25 * c_in, c_out)
    Vec b;  // (c_out)
  };
  std::vector<Layer> layers_;
  Index hidden_ = 16;
  double slope_ = 0.1;

  std::vector<std::vector<Mat>> forward_pass(const Mat& u) const;
  friend struct ConvBackward;
};

ConvCorrection model_build(std::uint64_t seed, Index hidden = 16,
                           double slope = 0.1);

void save_model(const std::string& path, const ConvCorrection& m,
                std::uint64_t fingerprint);
ConvCorrection load_model(const std::string& path,
                          std::uint64_t expect_fingerprint);

}  // namespace oplearn
