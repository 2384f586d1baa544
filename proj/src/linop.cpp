#include "oplearn/linop.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <memory>

#include "oplearn/rng.hpp"

namespace oplearn {

VecSpace::VecSpace(std::vector<Index> shape, double cell_measure)
    : shape_(std::move(shape)), cell_measure_(cell_measure) {
  if (cell_measure_ <= 0.0)
    throw ConfigError("VecSpace: cell measure must be positive, got " +
                      std::to_string(cell_measure_));
  dim_ = 1;
  for (Index s : shape_) {
    if (s <= 0)
      throw ConfigError("VecSpace: shape entries must be positive, got " +
                        shape_string(shape_));
    dim_ *= s;
  }
}

double VecSpace::inner(const Vec& u, const Vec& v) const {
  if (u.size() != dim_ || v.size() != dim_)
    throw ConfigError("VecSpace::inner: length mismatch, space dim " +
                      std::to_string(dim_) + " vs " + std::to_string(u.size()) +
                      " and " + std::to_string(v.size()));
  return cell_measure_ * u.dot(v);
}

double VecSpace::norm(const Vec& u) const { return std::sqrt(inner(u, u)); }

bool VecSpace::same_as(const VecSpace& o) const {
  return shape_ == o.shape_ && cell_measure_ == o.cell_measure_;
}

Mat to_grid(const Vec& v, Index rows, Index cols) {
  if (v.size() != rows * cols)
    throw ConfigError("to_grid: length " + std::to_string(v.size()) +
                      " does not match " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

Vec from_grid(const Mat& g) {
  return Eigen::Map<const Vec>(g.data(), g.size());
}

std::string shape_string(const std::vector<Index>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Vec apply(const LinOp& op, const Vec& x) {
  if (x.size() != op.domain.dim())
    throw ConfigError(op.label + ": apply expects domain shape " +
                      shape_string(op.domain.shape()) + " (length " +
                      std::to_string(op.domain.dim()) + "), got length " +
                      std::to_string(x.size()));
  return op.apply(x);
}

Vec apply_adjoint(const LinOp& op, const Vec& y) {
  if (y.size() != op.codomain.dim())
    throw ConfigError(op.label + ": apply_adjoint expects codomain shape " +
                      shape_string(op.codomain.shape()) + " (length " +
                      std::to_string(op.codomain.dim()) + "), got length " +
                      std::to_string(y.size()));
  return op.apply_adjoint(y);
}

AdjointTestReport adjoint_dot_test(const LinOp& op, int trials,
                                   std::uint64_t seed) {
  AdjointTestReport rep;
  SplitMix64 rng(seed);
  const double tiny = 1e-30;
  for (int t = 0; t < trials; ++t) {
    Vec u(op.domain.dim()), w(op.codomain.dim());
    for (Index i = 0; i < u.size(); ++i) u[i] = rng.normal();
    for (Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
    Vec au = apply(op, u);
    Vec aw = apply_adjoint(op, w);
    if (!au.allFinite() || !aw.allFinite()) {
      rep.finite = false;
      rep.worst_trial = t;
      rep.max_rel_discrepancy = std::numeric_limits<double>::infinity();
      return rep;
    }
    double lhs = op.codomain.inner(au, w);
    double rhs = op.domain.inner(u, aw);
    double rel = std::abs(lhs - rhs) /
                 (op.codomain.norm(au) * op.codomain.norm(w) + tiny);
    if (rel > rep.max_rel_discrepancy) {
      rep.max_rel_discrepancy = rel;
      rep.worst_trial = t;
    }
  }
  return rep;
}

Mat dense_materialize(const LinOp& op, std::size_t max_entries) {
  std::size_t entries = static_cast<std::size_t>(op.domain.dim()) *
                        static_cast<std::size_t>(op.codomain.dim());
  if (entries > max_entries)
    throw ConfigError(op.label + ": dense_materialize would need " +
                      std::to_string(entries) + " entries, cap is " +
                      std::to_string(max_entries));
  Mat m(op.codomain.dim(), op.domain.dim());
  Vec e = Vec::Zero(op.domain.dim());
  for (Index j = 0; j < op.domain.dim(); ++j) {
    e[j] = 1.0;
    m.col(j) = apply(op, e);
    e[j] = 0.0;
  }
  return m;
}

Vec svd_pinv_solve(const Mat& m, const Vec& rhs, double rcond) {
  if (rhs.size() != m.rows())
    throw ConfigError("svd_pinv_solve: rhs length " +
                      std::to_string(rhs.size()) + " vs matrix rows " +
                      std::to_string(m.rows()));
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericalError("svd_pinv_solve: SVD failed to converge on " +
                         std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " matrix");
  const Vec& s = svd.singularValues();
  double smax = s.size() ? s[0] : 0.0;
  Vec c = svd.matrixU().transpose() * rhs;
  for (Index i = 0; i < s.size(); ++i)
    c[i] = (s[i] > rcond * smax && s[i] > 0.0) ? c[i] / s[i] : 0.0;
  return svd.matrixV() * c;
}

LinOp identity_op(const VecSpace& sp, std::string label) {
  LinOp op;
  op.label = std::move(label);
  op.domain = sp;
  op.codomain = sp;
  op.apply = [](const Vec& x) { return x; };
  op.apply_adjoint = [](const Vec& y) { return y; };
  return op;
}

LinOp dense_op(Mat m, VecSpace domain, VecSpace codomain, std::string label) {
  if (m.cols() != domain.dim() || m.rows() != codomain.dim())
    throw ConfigError(label + ": matrix is " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", spaces need " +
                      std::to_string(codomain.dim()) + "x" +
                      std::to_string(domain.dim()));
  double ratio = codomain.cell_measure() / domain.cell_measure();
  auto mp = std::make_shared<Mat>(std::move(m));
  LinOp op;
  op.label = std::move(label);
  op.domain = std::move(domain);
  op.codomain = std::move(codomain);
  op.apply = [mp](const Vec& x) -> Vec { return (*mp) * x; };
  op.apply_adjoint = [mp, ratio](const Vec& y) -> Vec {
    return ratio * (mp->transpose() * y);
  };
  return op;
}

}  // namespace oplearn
