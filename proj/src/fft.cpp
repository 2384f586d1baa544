#include "oplearn/fft.hpp"

#include <unsupported/Eigen/FFT>

namespace oplearn {

namespace {
Eigen::FFT<double>& engine() {
  static thread_local Eigen::FFT<double> fft;
  return fft;
}
}  // namespace

CVec fft1(const CVec& in) {
  CVec out(in.size());
  engine().fwd(out, in);
  return out;
}

CVec ifft1(const CVec& in) {
  CVec out(in.size());
  engine().inv(out, in);
  return out;
}

CMat fft2(const CMat& in) {
  CMat tmp(in.rows(), in.cols());
  CVec buf;
  for (Index c = 0; c < in.cols(); ++c) {
    engine().fwd(buf, CVec(in.col(c)));
    tmp.col(c) = buf;
  }
  CMat out(in.rows(), in.cols());
  for (Index r = 0; r < in.rows(); ++r) {
    engine().fwd(buf, CVec(tmp.row(r).transpose()));
    out.row(r) = buf.transpose();
  }
  return out;
}

CMat ifft2(const CMat& in) {
  CMat tmp(in.rows(), in.cols());
  CVec buf;
  for (Index c = 0; c < in.cols(); ++c) {
    engine().inv(buf, CVec(in.col(c)));
    tmp.col(c) = buf;
  }
  CMat out(in.rows(), in.cols());
  for (Index r = 0; r < in.rows(); ++r) {
    engine().inv(buf, CVec(tmp.row(r).transpose()));
    out.row(r) = buf.transpose();
  }
  return out;
}

}  // namespace oplearn
