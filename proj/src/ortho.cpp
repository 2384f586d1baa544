#include "oplearn/ortho.hpp"

#include <fstream>

#include "oplearn/binio.hpp"
#include "oplearn/rng.hpp"

namespace oplearn {

std::string ortho_mode_name(OrthoMode m) {
  switch (m) {
    case OrthoMode::image_primary: return "image";
    case OrthoMode::measurement_primary: return "measurement";
    case OrthoMode::backprojection_primary: return "backprojection";
  }
  return "?";
}

const Mat& OrthoSystem::primary() const {
  switch (mode) {
    case OrthoMode::image_primary: return xfam;
    case OrthoMode::measurement_primary: return yfam;
    case OrthoMode::backprojection_primary: return zfam;
  }
  return xfam;
}

const VecSpace& OrthoSystem::primary_space() const {
  return mode == OrthoMode::measurement_primary ? yspace : xspace;
}

OrthoSystem orthonormalise(const Dataset& ds, OrthoMode mode,
                           double drop_tol) {
  const Index n = static_cast<Index>(ds.triples.size());
  if (n == 0) throw ConfigError("orthonormalise: empty dataset");
  if (drop_tol <= 0.0) throw ConfigError("orthonormalise: drop_tol must be > 0");
  const Index dx = ds.xspace.dim(), dy = ds.yspace.dim();

  OrthoSystem sys;
  sys.mode = mode;
  sys.xspace = ds.xspace;
  sys.yspace = ds.yspace;
  sys.xfam.resize(dx, n);
  sys.yfam.resize(dy, n);
  sys.zfam.resize(dx, n);
  sys.r = Mat::Zero(n, n);
  {
    std::string s = "ortho|ds=" + std::to_string(ds.fingerprint) +
                    "|mode=" + ortho_mode_name(mode);
    sys.fingerprint = fnv1a64(s.data(), s.size());
  }

  const VecSpace& pspace = sys.primary_space();
  // compacted kept columns live in the leading part of the family matrices
  Index kept = 0;
  for (Index i = 0; i < n; ++i) {
    const TrainingTriple& t = ds.triples[static_cast<std::size_t>(i)];
    double scale = ds.xspace.norm(t.x);
    if (scale == 0.0) {
      sys.dropped_ids.push_back(t.id);
      continue;
    }
    Vec vx = t.x / scale, vy = t.y / scale, vz = t.z / scale;
    Vec* prim = mode == OrthoMode::image_primary
                    ? &vx
                    : (mode == OrthoMode::measurement_primary ? &vy : &vz);
    double orig = pspace.norm(*prim);
    if (orig == 0.0) {
      sys.dropped_ids.push_back(t.id);
      continue;
    }
    // modified Gram-Schmidt, then one full reorthogonalisation pass; the
    // same coefficients transform all three companion families
    const Mat& pfam = mode == OrthoMode::image_primary
                          ? sys.xfam
                          : (mode == OrthoMode::measurement_primary ? sys.yfam
                                                                    : sys.zfam);
    const double mu = pspace.cell_measure();
    for (int pass = 0; pass < 2; ++pass) {
      for (Index j = 0; j < kept; ++j) {
        double c = mu * pfam.col(j).dot(*prim);
        vx -= c * sys.xfam.col(j);
        vy -= c * sys.yfam.col(j);
        vz -= c * sys.zfam.col(j);
        sys.r(j, i) += c;
      }
    }
    double rnorm = pspace.norm(*prim);
    if (rnorm < drop_tol * orig) {
      sys.dropped_ids.push_back(t.id);
      continue;
    }
    sys.xfam.col(kept) = vx / rnorm;
    sys.yfam.col(kept) = vy / rnorm;
    sys.zfam.col(kept) = vz / rnorm;
    sys.r(kept, i) = rnorm;
    sys.kept_ids.push_back(t.id);
    ++kept;
  }
  if (kept == 0)
    throw NumericalError(
        "orthonormalise: every input was dropped as numerically dependent");
  sys.xfam.conservativeResize(Eigen::NoChange, kept);
  sys.yfam.conservativeResize(Eigen::NoChange, kept);
  sys.zfam.conservativeResize(Eigen::NoChange, kept);
  sys.r.conservativeResize(kept, n);
  return sys;
}

OrthoSystem truncate_system(const OrthoSystem& sys, Index n_in) {
  if (n_in < 1) throw ConfigError("truncate_system: need n >= 1");
  Index keep = 0;
  while (keep < sys.n_eff() &&
         sys.kept_ids[static_cast<std::size_t>(keep)] <=
             static_cast<std::uint64_t>(n_in))
    ++keep;
  if (keep == 0)
    throw NumericalError("truncate_system: no members within prefix " +
                         std::to_string(n_in));
  OrthoSystem out;
  out.mode = sys.mode;
  out.xspace = sys.xspace;
  out.yspace = sys.yspace;
  out.xfam = sys.xfam.leftCols(keep);
  out.yfam = sys.yfam.leftCols(keep);
  out.zfam = sys.zfam.leftCols(keep);
  out.kept_ids.assign(sys.kept_ids.begin(), sys.kept_ids.begin() + keep);
  for (std::uint64_t id : sys.dropped_ids)
    if (id <= static_cast<std::uint64_t>(n_in)) out.dropped_ids.push_back(id);
  Index cols = std::min<Index>(n_in, sys.r.cols());
  out.r = sys.r.topLeftCorner(keep, cols);
  out.fingerprint = splitmix_mix(sys.fingerprint ^
                                 static_cast<std::uint64_t>(n_in));
  return out;
}

namespace {
constexpr char kMagic[4] = {'O', 'P', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

void write_ortho(const std::string& path, const OrthoSystem& sys) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  put_bytes(os, kMagic, 4);
  put_u16(os, kVersion);
  put_u64(os, sys.fingerprint);
  put_u64(os, static_cast<std::uint64_t>(sys.n_eff()));
  const auto& xs = sys.xspace.shape();
  const auto& ys = sys.yspace.shape();
  for (Index j = 0; j < sys.n_eff(); ++j) {
    put_u64(os, sys.kept_ids[static_cast<std::size_t>(j)]);
    put_block2(os, sys.xfam.col(j), xs[0], xs[1]);
    put_block2(os, sys.yfam.col(j), ys[0], ys[1]);
    put_block2(os, sys.zfam.col(j), xs[0], xs[1]);
  }
  // trailer: mode, the two cell measures, drop log, coefficient record
  put_u16(os, static_cast<std::uint16_t>(sys.mode));
  put_f64(os, sys.xspace.cell_measure());
  put_f64(os, sys.yspace.cell_measure());
  put_u64(os, static_cast<std::uint64_t>(sys.dropped_ids.size()));
  for (std::uint64_t id : sys.dropped_ids) put_u64(os, id);
  put_block2(os, Eigen::Map<const Vec>(sys.r.data(), sys.r.size()),
             sys.r.rows(), sys.r.cols());
  if (!os) throw IoError("write failed: " + path);
}

OrthoSystem read_ortho(const std::string& path,
                       std::uint64_t expect_fingerprint) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  get_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError(path + ": bad magic, not a triple store");
  if (get_u16(is, "version") != kVersion)
    throw IoError(path + ": unsupported version");
  OrthoSystem sys;
  sys.fingerprint = get_u64(is, "fingerprint");
  if (sys.fingerprint != expect_fingerprint)
    throw IoError(path + ": fingerprint mismatch, file " +
                  std::to_string(sys.fingerprint) + " vs expected " +
                  std::to_string(expect_fingerprint));
  std::uint64_t count = get_u64(is, "count");
  std::vector<Index> xshape, yshape;
  for (std::uint64_t j = 0; j < count; ++j) {
    sys.kept_ids.push_back(get_u64(is, "member id"));
    Index xr, xc, yr, yc, zr, zc;
    Vec x = get_block2(is, xr, xc, "x block");
    Vec y = get_block2(is, yr, yc, "y block");
    Vec z = get_block2(is, zr, zc, "z block");
    if (j == 0) {
      xshape = {xr, xc};
      yshape = {yr, yc};
      sys.xfam.resize(xr * xc, static_cast<Index>(count));
      sys.yfam.resize(yr * yc, static_cast<Index>(count));
      sys.zfam.resize(xr * xc, static_cast<Index>(count));
    }
    if (std::vector<Index>{xr, xc} != xshape ||
        std::vector<Index>{yr, yc} != yshape || zr != xr || zc != xc)
      throw IoError(path + ": inconsistent member shapes");
    sys.xfam.col(static_cast<Index>(j)) = x;
    sys.yfam.col(static_cast<Index>(j)) = y;
    sys.zfam.col(static_cast<Index>(j)) = z;
  }
  if (count == 0) throw IoError(path + ": empty system");
  sys.mode = static_cast<OrthoMode>(get_u16(is, "mode"));
  double mux = get_f64(is, "x measure");
  double muy = get_f64(is, "y measure");
  sys.xspace = VecSpace(xshape, mux);
  sys.yspace = VecSpace(yshape, muy);
  std::uint64_t ndrop = get_u64(is, "drop count");
  for (std::uint64_t i = 0; i < ndrop; ++i)
    sys.dropped_ids.push_back(get_u64(is, "dropped id"));
  Index rr, rc;
  Vec rflat = get_block2(is, rr, rc, "coefficient record");
  sys.r = Eigen::Map<const Mat>(rflat.data(), rr, rc);
  return sys;
}

}  // namespace oplearn
