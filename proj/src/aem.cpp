#include "oplearn/aem.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <memory>

namespace oplearn {

Vec AemModel::whiten(const Vec& v) const {
  if (v.size() != yspace.dim())
    throw ConfigError("aem whiten: length mismatch");
  double s = 1.0 / std::sqrt(sigma2);
  Vec out = s * v;
  if (psi.cols() > 0) {
    // <psi_k, v>_Y coefficients, then the spectral correction on the range
    Vec c = yspace.cell_measure() * (psi.transpose() * v);
    out += psi * (wcoef.cwiseProduct(c));
  }
  return out;
}

AemModel aem_fit(const std::vector<Vec>& errors, const VecSpace& yspace,
                 double noise_var) {
  const Index n = static_cast<Index>(errors.size());
  if (n < 2)
    throw ConfigError("aem_fit: need at least 2 error samples, got " +
                      std::to_string(n));
  if (noise_var < 0.0) throw ConfigError("aem_fit: noise_var must be >= 0");
  const Index dim = yspace.dim();
  AemModel m;
  m.yspace = yspace;
  m.eta = Vec::Zero(dim);
  for (const Vec& e : errors) {
    if (e.size() != dim) throw ConfigError("aem_fit: sample length mismatch");
    m.eta += e;
  }
  m.eta /= static_cast<double>(n);

  Mat f(dim, n);  // centred factor: Gamma_eps = F F* in the Y geometry
  double energy = 0.0;
  for (Index i = 0; i < n; ++i) {
    f.col(i) = (errors[static_cast<std::size_t>(i)] - m.eta) /
               std::sqrt(static_cast<double>(n - 1));
    energy += yspace.inner(errors[static_cast<std::size_t>(i)],
                           errors[static_cast<std::size_t>(i)]);
  }
  energy /= static_cast<double>(n);
  // relative jitter keeps Gamma invertible; absolute floor covers the exact
  // Atilde == A case where every sample is zero
  double jitter =
      std::max(1e-6 * energy / static_cast<double>(dim), 1e-12);
  m.sigma2 = jitter + noise_var;

  // Gram matrix K_ij = <f_i, f_j>_Y; eigenpairs of K give the eigensystem of
  // F F*: psi_k = F u_k / sqrt(d_k)
  Mat k = yspace.cell_measure() * (f.transpose() * f);
  Eigen::SelfAdjointEigenSolver<Mat> eig(k);
  if (eig.info() != Eigen::Success)
    throw NumericalError("aem_fit: Gram eigendecomposition failed");
  double dmax = eig.eigenvalues().maxCoeff();
  double cut = std::max(dmax * 1e-14, 0.0);
  std::vector<Index> keep;
  for (Index i = 0; i < n; ++i)
    if (eig.eigenvalues()[i] > cut && eig.eigenvalues()[i] > 0.0)
      keep.push_back(i);
  m.psi.resize(dim, static_cast<Index>(keep.size()));
  m.wcoef.resize(static_cast<Index>(keep.size()));
  double inv_sqrt_sigma = 1.0 / std::sqrt(m.sigma2);
  for (std::size_t j = 0; j < keep.size(); ++j) {
    double d = eig.eigenvalues()[keep[j]];
    m.psi.col(static_cast<Index>(j)) =
        f * eig.eigenvectors().col(keep[j]) / std::sqrt(d);
    // whitener acts as (d + sigma2)^{-1/2} on psi_k, sigma^{-1} elsewhere
    m.wcoef[static_cast<Index>(j)] = 1.0 / std::sqrt(d + m.sigma2) -
                                     inv_sqrt_sigma;
  }
  return m;
}

AemModel aem_fit(const Dataset& ds, const LinOp& a, const LinOp& atilde,
                 double noise_var) {
  std::vector<Vec> errors;
  errors.reserve(ds.triples.size());
  for (const TrainingTriple& t : ds.triples)
    errors.push_back(t.y - apply(atilde, t.x));  // t.y = A x
  return aem_fit(errors, ds.yspace, noise_var);
}

GradOracle make_oracle_aem(const AemModel& m, const LinOp& atilde,
                           const Vec& y) {
  auto mp = std::make_shared<AemModel>(m);
  LinOp at = atilde;
  GradOracle o;
  o.label = "aem";
  o.space = atilde.domain;
  o.grad = [mp, at, y](const Vec& x) {
    Vec r = apply(at, x) - y + mp->eta;
    return apply_adjoint(at, mp->whiten(mp->whiten(r)));
  };
  o.objective = [mp, at, y](const Vec& x) {
    Vec r = mp->whiten(apply(at, x) - y + mp->eta);
    return 0.5 * mp->yspace.inner(r, r);
  };
  return o;
}

}  // namespace oplearn
