#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace oplearn {

using Scalar = double;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

// Finite-dimensional Hilbert space of real grid functions.  The inner product
// carries the grid cell measure, <u,v> = measure * sum(u.*v), so discrete
// adjoints stay consistent with their continuous counterparts across
// resolutions.
class VecSpace {
public:
  VecSpace() = default;
  VecSpace(std::vector<Index> shape, double cell_measure);

  Index dim() const { return dim_; }
  const std::vector<Index>& shape() const { return shape_; }
  double cell_measure() const { return cell_measure_; }

  double inner(const Vec& u, const Vec& v) const;
  double norm(const Vec& u) const;

  bool same_as(const VecSpace& o) const;

private:
  std::vector<Index> shape_;
  double cell_measure_ = 1.0;
  Index dim_ = 0;
};

// 2D fields are flattened column-major: entry (r, c) of an R x C grid sits at
// flat index r + c*R.
Mat to_grid(const Vec& v, Index rows, Index cols);
Vec from_grid(const Mat& g);

std::string shape_string(const std::vector<Index>& shape);

// Thrown on invalid user-supplied configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Thrown when a computation loses numerical validity (CLI exit code 3).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Thrown on file-format or I/O failures (CLI exit code 4).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace oplearn
