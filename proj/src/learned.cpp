#include "oplearn/learned.hpp"

#include <cmath>
#include <memory>

namespace oplearn {

namespace {

void need_mode(const OrthoSystem& sys, OrthoMode m, const char* who) {
  if (sys.mode != m)
    throw ConfigError(std::string(who) + " needs a " +
                      ortho_mode_name(m) + "-primary system, got " +
                      ortho_mode_name(sys.mode) + "-primary");
}

// coefficient vector <v, fam_i> in the given space
Vec coeffs(const VecSpace& sp, const Mat& fam, const Vec& v) {
  if (v.size() != fam.rows())
    throw ConfigError("learned apply: length " + std::to_string(v.size()) +
                      " does not match family dimension " +
                      std::to_string(fam.rows()));
  return sp.cell_measure() * (fam.transpose() * v);
}

}  // namespace

Vec apply_learned_forward(const OrthoSystem& sys, const Vec& x) {
  need_mode(sys, OrthoMode::image_primary, "apply_learned_forward");
  return sys.yfam * coeffs(sys.xspace, sys.xfam, x);
}

Vec apply_learned_forward_adjoint(const OrthoSystem& sys, const Vec& y) {
  need_mode(sys, OrthoMode::image_primary, "apply_learned_forward_adjoint");
  return sys.xfam * coeffs(sys.yspace, sys.yfam, y);
}

Vec apply_learned_normal(const OrthoSystem& sys, const Vec& x) {
  need_mode(sys, OrthoMode::image_primary, "apply_learned_normal");
  return sys.zfam * coeffs(sys.xspace, sys.xfam, x);
}

Vec apply_learned_normal_data(const OrthoSystem& sys, const Vec& y) {
  need_mode(sys, OrthoMode::measurement_primary, "apply_learned_normal_data");
  return sys.zfam * coeffs(sys.yspace, sys.yfam, y);
}

Vec project_primary(const OrthoSystem& sys, const Vec& v) {
  const Mat& p = sys.primary();
  return p * coeffs(sys.primary_space(), p, v);
}

LinOp learned_forward_op(const OrthoSystem& sys) {
  need_mode(sys, OrthoMode::image_primary, "learned_forward_op");
  auto s = std::make_shared<OrthoSystem>(sys);
  LinOp op;
  op.label = "learned-forward";
  op.domain = sys.xspace;
  op.codomain = sys.yspace;
  op.config_fingerprint = sys.fingerprint;
  op.apply = [s](const Vec& x) { return apply_learned_forward(*s, x); };
  op.apply_adjoint =
      [s](const Vec& y) { return apply_learned_forward_adjoint(*s, y); };
  return op;
}

Vec reconstruct_projection(const OrthoSystem& sys, const Vec& y) {
  need_mode(sys, OrthoMode::measurement_primary, "reconstruct_projection");
  return sys.xfam * coeffs(sys.yspace, sys.yfam, y);
}

Vec reconstruct_dls(const OrthoSystem& meas, const OrthoSystem& back,
                    const Vec& y) {
  need_mode(meas, OrthoMode::measurement_primary, "reconstruct_dls");
  need_mode(back, OrthoMode::backprojection_primary, "reconstruct_dls");
  return project_primary(back, reconstruct_projection(meas, y));
}

std::vector<double> l1_partial_sums(const OrthoSystem& sys, const Vec& x) {
  need_mode(sys, OrthoMode::image_primary, "l1_partial_sums");
  Vec c = coeffs(sys.xspace, sys.xfam, x);
  std::vector<double> sums(static_cast<std::size_t>(c.size()));
  double acc = 0.0;
  for (Index i = 0; i < c.size(); ++i) {
    acc += std::abs(c[i]);
    sums[static_cast<std::size_t>(i)] = acc;
  }
  return sums;
}

}  // namespace oplearn
