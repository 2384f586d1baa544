#include "oplearn/pat.hpp"

#include <charconv>
#include <cmath>
#include <memory>

#include "oplearn/fft.hpp"
#include "oplearn/rng.hpp"

namespace oplearn {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string num_str(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void check(const PatConfig& cfg) {
  if (cfg.n < 2) throw ConfigError("pat: n must be >= 2");
  if (cfg.c <= 0.0) throw ConfigError("pat: sound speed must be positive");
  if (!(cfg.cfl > 0.0 && cfg.cfl < 1.0))
    throw ConfigError("pat: cfl must lie in (0,1), got " + num_str(cfg.cfl));
  if (cfg.time_samples() < 1) throw ConfigError("pat: nt must be >= 1");
  if (!(cfg.angular_threshold > 0.0 && cfg.angular_threshold <= 1.0))
    throw ConfigError("pat: angular_threshold must lie in (0,1], got " +
                      num_str(cfg.angular_threshold));
}

// omega(b,a) = c * 2 pi sqrt(mb^2 + ma^2) for mode numbers of an N-grid on
// the unit square
Mat omega_table(const PatConfig& cfg) {
  const Index n = cfg.n;
  Mat w(n, n);
  for (Index a = 0; a < n; ++a) {
    double ka = 2.0 * kPi * static_cast<double>(fft_mode(a, n));
    for (Index b = 0; b < n; ++b) {
      double kb = 2.0 * kPi * static_cast<double>(fft_mode(b, n));
      w(b, a) = cfg.c * std::sqrt(ka * ka + kb * kb);
    }
  }
  return w;
}

}  // namespace

std::uint64_t PatConfig::fingerprint(bool approx) const {
  std::string s = std::string(approx ? "pat-approx" : "pat") +
                  "|n=" + std::to_string(n) + "|c=" + num_str(c) +
                  "|cfl=" + num_str(cfl) +
                  "|nt=" + std::to_string(time_samples()) +
                  "|kappa=" + (kspace_correction ? "1" : "0") +
                  "|thr=" + num_str(angular_threshold);
  return fnv1a64(s.data(), s.size());
}

PatValidation pat_validate(const PatConfig& cfg) {
  check(cfg);
  PatValidation v;
  v.t_total = cfg.t_total();
  v.crossing_time_ok = v.t_total * cfg.c >= 1.0;
  if (!v.crossing_time_ok)
    v.note = "recording window " + num_str(v.t_total) +
             " is shorter than the domain crossing time " + num_str(1.0 / cfg.c);
  else if (v.t_total * cfg.c > 2.4)
    v.note = "recording window exceeds 2.4/c; periodic wrap-around can reach "
             "the sensors for centred sources";
  return v;
}

VecSpace pat_image_space(const PatConfig& cfg) {
  return VecSpace({cfg.n, cfg.n}, cfg.h() * cfg.h());
}

VecSpace pat_data_space(const PatConfig& cfg) {
  return VecSpace({cfg.n, cfg.time_samples()}, cfg.h() * cfg.dt());
}

// ---------------------------------------------------------------------------
// accurate model
// ---------------------------------------------------------------------------

namespace {

struct AccCtx {
  Index n, nt;
  double dt, ratio;  // ratio = mu_Y / mu_X applied in the adjoint
  Mat omega;
  bool kappa;
  double cdt2;  // (c dt)^2
  Mat lap_mult; // multiplier for the leapfrog Laplacian: -|k|^2 (kappa off)
};

std::shared_ptr<AccCtx> make_acc_ctx(const PatConfig& cfg) {
  auto cx = std::make_shared<AccCtx>();
  cx->n = cfg.n;
  cx->nt = cfg.time_samples();
  cx->dt = cfg.dt();
  cx->ratio = cfg.dt() / cfg.h();
  cx->omega = omega_table(cfg);
  cx->kappa = cfg.kspace_correction;
  cx->cdt2 = (cfg.c * cfg.dt()) * (cfg.c * cfg.dt());
  const Index n = cfg.n;
  cx->lap_mult.resize(n, n);
  for (Index a = 0; a < n; ++a) {
    double ka = 2.0 * kPi * static_cast<double>(fft_mode(a, n));
    for (Index b = 0; b < n; ++b) {
      double kb = 2.0 * kPi * static_cast<double>(fft_mode(b, n));
      double k2 = ka * ka + kb * kb;
      double mult = -k2;
      if (cfg.kspace_correction && k2 > 0.0) {
        double half = 0.5 * cfg.c * std::sqrt(k2) * cfg.dt();
        double sinc = std::sin(half) / half;
        mult *= sinc * sinc;
      }
      cx->lap_mult(b, a) = mult;
    }
  }
  return cx;
}

// spectral closed form: y(c,k) = row-0 trace of ifft2(cos(omega t_k) .* fft2 x)
Vec acc_forward_spectral(const AccCtx& cx, const Vec& x) {
  const Index n = cx.n, nt = cx.nt;
  CMat X = fft2(to_grid(x, n, n).cast<std::complex<double>>());
  Mat y(n, nt);
  CVec s(n);
  for (Index k = 0; k < nt; ++k) {
    double t = static_cast<double>(k) * cx.dt;
    Mat ck = (cx.omega.array() * t).cos().matrix();
    for (Index a = 0; a < n; ++a)
      s[a] = X.col(a).cwiseProduct(ck.col(a).cast<std::complex<double>>()).sum();
    y.col(k) = ifft1(s).real() / static_cast<double>(n);
  }
  return from_grid(y);
}

Vec acc_adjoint_spectral(const AccCtx& cx, const Vec& yv) {
  const Index n = cx.n, nt = cx.nt;
  Mat y = to_grid(yv, n, nt);
  CMat d = CMat::Zero(n, n);
  for (Index k = 0; k < nt; ++k) {
    double t = static_cast<double>(k) * cx.dt;
    CVec f = fft1(y.col(k).cast<std::complex<double>>());
    Mat ck = (cx.omega.array() * t).cos().matrix();
    for (Index a = 0; a < n; ++a)
      d.col(a) += f[a] * ck.col(a).cast<std::complex<double>>();
  }
  Mat xb = ifft2(d).real();
  return cx.ratio * from_grid(xb);
}

// one application of L = (c dt)^2 * Lambda (spectral Laplacian, optionally
// dispersion-corrected)
Mat apply_L(const AccCtx& cx, const Mat& v) {
  CMat vh = fft2(v.cast<std::complex<double>>());
  vh.array() *= cx.lap_mult.array().cast<std::complex<double>>();
  return cx.cdt2 * ifft2(vh).real();
}

Vec acc_forward_leapfrog(const AccCtx& cx, const Vec& x) {
  const Index n = cx.n, nt = cx.nt;
  Mat p_prev = to_grid(x, n, n);
  Mat p_cur = p_prev + 0.5 * apply_L(cx, p_prev);
  Mat y(n, nt);
  y.col(0) = p_prev.row(0).transpose();
  if (nt > 1) y.col(1) = p_cur.row(0).transpose();
  for (Index k = 2; k < nt; ++k) {
    Mat p_next = 2.0 * p_cur - p_prev + apply_L(cx, p_cur);
    y.col(k) = p_next.row(0).transpose();
    p_prev.swap(p_cur);
    p_cur.swap(p_next);
  }
  return from_grid(y);
}

// Clenshaw evaluation of sum_k T_k(I + L/2) inject(y_k); exact transpose of
// the leapfrog because the propagators are Chebyshev polynomials of I + L/2
Vec acc_adjoint_leapfrog(const AccCtx& cx, const Vec& yv) {
  const Index n = cx.n, nt = cx.nt;
  Mat y = to_grid(yv, n, nt);
  auto inject = [&](Index k) {
    Mat q = Mat::Zero(n, n);
    q.row(0) = y.col(k).transpose();
    return q;
  };
  Mat b1 = Mat::Zero(n, n), b2 = Mat::Zero(n, n);
  for (Index k = nt - 1; k >= 1; --k) {
    Mat bk = inject(k) + 2.0 * b1 + apply_L(cx, b1) - b2;
    b2.swap(b1);
    b1.swap(bk);
  }
  Mat x = inject(0) + b1 + 0.5 * apply_L(cx, b1) - b2;
  return cx.ratio * from_grid(x);
}

}  // namespace

Vec pat_forward_timestepped(const PatConfig& cfg, const Vec& x) {
  check(cfg);
  auto cx = make_acc_ctx(cfg);
  return acc_forward_leapfrog(*cx, x);
}

LinOp pat_build_accurate(const PatConfig& cfg) {
  check(cfg);
  auto cx = make_acc_ctx(cfg);
  LinOp op;
  op.label = "pat";
  op.domain = pat_image_space(cfg);
  op.codomain = pat_data_space(cfg);
  op.config_fingerprint = cfg.fingerprint(false);
  if (cfg.kspace_correction) {
    op.apply = [cx](const Vec& x) { return acc_forward_spectral(*cx, x); };
    op.apply_adjoint =
        [cx](const Vec& y) { return acc_adjoint_spectral(*cx, y); };
  } else {
    op.apply = [cx](const Vec& x) { return acc_forward_leapfrog(*cx, x); };
    op.apply_adjoint =
        [cx](const Vec& y) { return acc_adjoint_leapfrog(*cx, y); };
  }
  return op;
}

// ---------------------------------------------------------------------------
// fast approximate model
// ---------------------------------------------------------------------------

namespace {

struct GatherEntry {
  Index a, j;       // transverse mode index, frequency bin
  Index bp, bm;     // +-k2 source mode rows (equal when the pair degenerates)
  double w;
};

// frequency bins are twice as fine as the cosine resolution pi/T of the
// trace so the quantisation omega_b -> omega_j stays mild
constexpr Index kFreqOversample = 2;

struct ApxCtx {
  Index n, nt, nj;
  double ratio;
  std::vector<GatherEntry> gather;
  Mat ct;  // ct(j, m) = cos(pi j m / (kFreqOversample nt))
};

std::shared_ptr<ApxCtx> make_apx_ctx(const PatConfig& cfg) {
  auto cx = std::make_shared<ApxCtx>();
  const Index n = cfg.n, nt = cfg.time_samples();
  const Index nj = kFreqOversample * nt;
  cx->n = n;
  cx->nt = nt;
  cx->nj = nj;
  cx->ratio = cfg.dt() / cfg.h();
  const double dom = kPi / (static_cast<double>(kFreqOversample) *
                            cfg.t_total());  // frequency bin width
  const double dk2 = 2.0 * kPi;              // k2 mode spacing on [0,1]
  const double c = cfg.c;
  for (Index a = 0; a < n; ++a) {
    double k1 = 2.0 * kPi * static_cast<double>(fft_mode(a, n));
    for (Index j = 0; j < nj; ++j) {
      double om = static_cast<double>(j) * dom;
      if (std::abs(k1) > cfg.angular_threshold * om / c) continue;
      // Integrate the dispersion relation over the bin [om - dom/2, om + dom/2]:
      // the k2 interval length over the mode spacing counts the modes the bin
      // stands in for, and stays finite at grazing incidence where the
      // pointwise Jacobian om/(c^2 k2) diverges.
      double lo = std::max(om - 0.5 * dom, std::abs(k1) * c);
      double hi = om + 0.5 * dom;
      if (hi <= lo) continue;
      double k2lo = std::sqrt(std::max((lo / c) * (lo / c) - k1 * k1, 0.0));
      double k2hi = std::sqrt((hi / c) * (hi / c) - k1 * k1);
      if (k2hi <= k2lo) continue;
      // apportion the interval over the mode cells [(m-1/2), (m+1/2)) dk2 it
      // overlaps, so every propagating mode ends up with unit total weight
      Index m0 = static_cast<Index>(std::llround(std::floor(k2lo / dk2 + 0.5)));
      Index m1 = static_cast<Index>(std::llround(std::floor(k2hi / dk2 + 0.5)));
      for (Index m = std::max<Index>(m0, 0); m <= m1; ++m) {
        if (2 * m > n) break;
        double cl = (static_cast<double>(m) - 0.5) * dk2;
        double ch = (static_cast<double>(m) + 0.5) * dk2;
        double ov = std::min(k2hi, ch) - std::max(k2lo, cl);
        if (ov <= 0.0) continue;
        GatherEntry e;
        e.a = a;
        e.j = j;
        e.bp = m;
        e.bm = (n - m) % n;
        e.w = ov / dk2;
        cx->gather.push_back(e);
      }
    }
  }
  cx->ct.resize(nj, nt);
  for (Index j = 0; j < nj; ++j)
    for (Index m = 0; m < nt; ++m)
      cx->ct(j, m) =
          std::cos(kPi * static_cast<double>(j) * static_cast<double>(m) /
                   static_cast<double>(nj));
  return cx;
}

Vec apx_forward(const ApxCtx& cx, const Vec& x) {
  const Index n = cx.n, nt = cx.nt;
  CMat X = fft2(to_grid(x, n, n).cast<std::complex<double>>());
  CMat g = CMat::Zero(n, cx.nj);
  for (const GatherEntry& e : cx.gather) {
    std::complex<double> v = X(e.bp, e.a);
    if (e.bm != e.bp) v += X(e.bm, e.a);
    g(e.a, e.j) += e.w * v;
  }
  CMat s = g * cx.ct;  // (n x nt): s(a, m) = sum_j g(a,j) ct(j, m)
  Mat y(n, nt);
  for (Index m = 0; m < nt; ++m)
    y.col(m) = ifft1(s.col(m)).real() / static_cast<double>(n);
  return from_grid(y);
}

Vec apx_adjoint(const ApxCtx& cx, const Vec& yv) {
  const Index n = cx.n, nt = cx.nt;
  Mat y = to_grid(yv, n, nt);
  CMat sb(n, nt);
  for (Index m = 0; m < nt; ++m)
    sb.col(m) = fft1(y.col(m).cast<std::complex<double>>());
  CMat gb = sb * cx.ct.transpose();  // gb(a, j) = sum_m sb(a,m) ct(j,m)
  CMat xb = CMat::Zero(n, n);
  for (const GatherEntry& e : cx.gather) {
    std::complex<double> v = e.w * gb(e.a, e.j);
    xb(e.bp, e.a) += v;
    if (e.bm != e.bp) xb(e.bm, e.a) += v;
  }
  Mat x = ifft2(xb).real();
  return cx.ratio * from_grid(x);
}

}  // namespace

LinOp pat_build_approx(const PatConfig& cfg) {
  check(cfg);
  auto cx = make_apx_ctx(cfg);
  LinOp op;
  op.label = "pat-approx";
  op.domain = pat_image_space(cfg);
  op.codomain = pat_data_space(cfg);
  op.config_fingerprint = cfg.fingerprint(true);
  op.apply = [cx](const Vec& x) { return apx_forward(*cx, x); };
  op.apply_adjoint = [cx](const Vec& y) { return apx_adjoint(*cx, y); };
  return op;
}

}  // namespace oplearn
