#pragma once

#include <complex>

#include "oplearn/types.hpp"

namespace oplearn {

using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

// Unnormalized forward DFT; inverse carries the 1/N factor.
CVec fft1(const CVec& in);
CVec ifft1(const CVec& in);

// 2D transforms, separable over columns then rows.
CMat fft2(const CMat& in);
CMat ifft2(const CMat& in);

// Integer mode number for FFT bin i of an N-point transform: 0..N/2, then
// negative frequencies.
inline Index fft_mode(Index i, Index n) { return (2 * i <= n) ? i : i - n; }

}  // namespace oplearn
