// Acceptance harness: one pass/fail line per shipping criterion.
//
//   acceptance [criterion numbers...]     (default: all of 1..13)
//
// Pass/fail lines go to stdout, progress notes to stderr.  The exit code is
// the number of failed criteria, so a green run exits 0.  Criteria that need
// a preset run execute the preset in-process (twice where determinism is
// checked); outputs land under ./acceptance-out.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oplearn/aem.hpp"
#include "oplearn/convnet.hpp"
#include "oplearn/dataset.hpp"
#include "oplearn/harness.hpp"
#include "oplearn/io.hpp"
#include "oplearn/learned.hpp"
#include "oplearn/linop.hpp"
#include "oplearn/ortho.hpp"
#include "oplearn/pat.hpp"
#include "oplearn/phantom.hpp"
#include "oplearn/radon.hpp"
#include "oplearn/rng.hpp"
#include "oplearn/solver.hpp"
#include "oplearn/tv.hpp"

namespace fs = std::filesystem;
using namespace oplearn;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return std::string(buf);
}

Vec randn(Index n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

Mat randm(Index rows, Index cols, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Mat m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ------------------------------------------------------- driving the CLI

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.push_back("oplearn");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& s : full) argv.push_back(s.data());
  // the preset runners narrate to stdout; keep that off the pass/fail stream
  std::ostringstream sink;
  std::streambuf* old = std::cout.rdbuf(sink.rdbuf());
  int rc = cli_main(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  std::cerr << sink.str();
  return rc;
}

struct PresetRun {
  std::string dir_a, dir_b;
  int rc_a = -1, rc_b = -1;
  double wall_a = 0.0, wall_b = 0.0;
  bool has_a = false, has_b = false;
  bool ok_a() const { return has_a && rc_a == 0; }
  bool ok_b() const { return has_b && rc_b == 0; }
};

int run_preset_into(const std::string& name, const std::string& dir,
                    double& wall) {
  std::error_code ec;
  fs::remove_all(dir, ec);
  std::cerr << "[run] preset " << name << " -> " << dir << "\n";
  Timer t;
  int rc = run_cli({"run-experiment", "preset=" + name,
                    "preset_dir=" OPLEARN_PRESET_DIR, "out=" + dir});
  wall = t.seconds();
  std::cerr << "[run] preset " << name << " rc=" << rc << " wall="
            << fmt(wall) << "s\n";
  return rc;
}

PresetRun& preset(const std::string& name) {
  static std::map<std::string, PresetRun> cache;
  PresetRun& p = cache[name];
  if (!p.has_a) {
    p.dir_a = (fs::path("acceptance-out") / (name + "-a")).string();
    p.dir_b = (fs::path("acceptance-out") / (name + "-b")).string();
    p.rc_a = run_preset_into(name, p.dir_a, p.wall_a);
    p.has_a = true;
  }
  return p;
}

PresetRun& preset_twice(const std::string& name) {
  PresetRun& p = preset(name);
  if (!p.has_b) {
    p.rc_b = run_preset_into(name, p.dir_b, p.wall_b);
    p.has_b = true;
  }
  return p;
}

// ----------------------------------------------------------- CSV reading

double csv_value(const std::string& path, const std::string& method,
                 size_t col) {
  auto rows = read_csv(path);
  for (size_t i = 1; i < rows.size(); ++i)
    if (rows[i].size() > col && rows[i][0] == method)
      return std::stod(rows[i][col]);
  throw IoError("no '" + method + "' row in " + path);
}

double metric_rel_error(const std::string& dir, const std::string& method) {
  return csv_value(dir + "/metrics.csv", method, 3);
}

// --------------------------------------------- shared 16x16 Radon instance

struct Rad16 {
  LinOp a;
  Mat ad;
  Dataset ds;
  OrthoSystem img, meas, back;
};

const Rad16& rad16() {
  static const Rad16* inst = [] {
    auto* s = new Rad16;
    RadonConfig rc;
    rc.n = 16;
    rc.angles = 60;
    s->a = radon_build(rc);
    s->ad = dense_materialize(s->a);
    s->ds = build_dataset(s->a, 40, 2025, PhantomKind::blob, 1);
    s->img = orthonormalise(s->ds, OrthoMode::image_primary);
    s->meas = orthonormalise(s->ds, OrthoMode::measurement_primary);
    s->back = orthonormalise(s->ds, OrthoMode::backprojection_primary);
    return s;
  }();
  return *inst;
}

// ---------------------------------------------------------------- criteria

bool c1_adjoints(std::string& d) {
  Timer t;
  RadonConfig rc;
  rc.n = 64;
  rc.angles = 60;
  AdjointTestReport r1 = adjoint_dot_test(radon_build(rc), 5, 0x51);
  PatConfig pc;
  pc.n = 64;
  pc.nt = 128;
  AdjointTestReport r2 = adjoint_dot_test(pat_build_accurate(pc), 5, 0x52);
  AdjointTestReport r3 = adjoint_dot_test(pat_build_approx(pc), 5, 0x53);
  double wall = t.seconds();
  double worst = std::max({r1.max_rel_discrepancy, r2.max_rel_discrepancy,
                           r3.max_rel_discrepancy});
  d = "radon64=" + fmt(r1.max_rel_discrepancy) +
      " pat64=" + fmt(r2.max_rel_discrepancy) +
      " pat-approx64=" + fmt(r3.max_rel_discrepancy) + " (<=1e-10), wall=" +
      fmt(wall) + "s (<30)";
  return r1.finite && r2.finite && r3.finite && worst <= 1e-10 && wall < 30.0;
}

bool c2_projection_oracle(std::string& d) {
  const Rad16& r = rad16();
  if (r.img.n_eff() != 40 || r.meas.n_eff() != 40) {
    d = "expected 40 kept members, got img=" + std::to_string(r.img.n_eff()) +
        " meas=" + std::to_string(r.meas.n_eff());
    return false;
  }
  Mat px = r.img.xfam * (r.a.domain.cell_measure() * r.img.xfam.transpose());
  Mat ap = r.ad * px;
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Vec y = randn(r.a.codomain.dim(), derive_seed(5150, trial));
    Vec xs = reconstruct_projection(r.meas, y);
    Vec xd = svd_pinv_solve(ap, y, 1e-10);
    worst = std::max(worst, (xs - xd).norm() / xd.norm());
  }
  d = "max rel diff vs dense pinv of A P_Xn = " + fmt(worst) +
      " over 5 rhs (<=1e-6)";
  return worst <= 1e-6;
}

bool c3_dls_oracle(std::string& d) {
  const Rad16& r = rad16();
  if (r.meas.n_eff() != 40 || r.back.n_eff() != 40) {
    d = "expected 40 kept members, got meas=" + std::to_string(r.meas.n_eff()) +
        " back=" + std::to_string(r.back.n_eff());
    return false;
  }
  double worst_mn = 0.0, worst_id = 0.0;
  for (Index n : {Index{10}, Index{25}, Index{40}}) {
    OrthoSystem tm = n < 40 ? truncate_system(r.meas, n) : r.meas;
    OrthoSystem tb = n < 40 ? truncate_system(r.back, n) : r.back;
    Mat py = tm.yfam * (r.a.codomain.cell_measure() * tm.yfam.transpose());
    Mat pz = tb.zfam * (r.a.domain.cell_measure() * tb.zfam.transpose());
    Mat pya = py * r.ad;
    for (int trial = 0; trial < 3; ++trial) {
      Vec y = randn(r.a.codomain.dim(),
                    derive_seed(777000 + static_cast<std::uint64_t>(n), trial));
      Vec xd = reconstruct_dls(tm, tb, y);
      Vec mn = svd_pinv_solve(pya, Vec(py * y), 1e-10);
      worst_mn = std::max(worst_mn, (xd - mn).norm() / mn.norm());
      Vec xi = pz * reconstruct_projection(tm, y);
      worst_id = std::max(worst_id, (xd - xi).norm() / xi.norm());
    }
  }
  d = "max rel diff vs dense min-norm of P_Yn A = " + fmt(worst_mn) +
      " (<=1e-6); x^Y_n vs P_Zn x^X_n = " + fmt(worst_id) +
      " (<=1e-10) at n in {10,25,40}";
  return worst_mn <= 1e-6 && worst_id <= 1e-10;
}

bool c4_saturation(std::string& d) {
  RadonConfig rc;
  rc.n = 16;
  rc.angles = 60;
  LinOp a = radon_build(rc);
  Dataset big = build_dataset(a, 300, 4097, PhantomKind::blob, 1);
  OrthoSystem meas = orthonormalise(big, OrthoMode::measurement_primary);
  OrthoSystem back = orthonormalise(big, OrthoMode::backprojection_primary);
  Vec truth = sample_blobs(909, 16);
  Vec y = apply(a, truth);
  Vec x = reconstruct_dls(meas, back, y);
  double re = a.domain.norm(x - truth) / a.domain.norm(truth);
  d = "noise-free dls rel_error=" + fmt(re) + " (<=1e-5) at n_eff=" +
      std::to_string(meas.n_eff()) + " of 256";
  return re <= 1e-5;
}

bool c5_semiconvergence(std::string& d) {
  std::string dir = "acceptance-out/semiconv";
  std::error_code ec;
  fs::remove_all(dir, ec);
  // sweep right up to the numerical rank (256 pixels): the learned system's
  // conditioning decays there, which is what makes the noise term grow
  int rc = run_cli({"sweep-n", "op=radon", "grid=16", "angles=60",
                    "phantom=blob", "train_n=250", "n_step=10", "noise=0.01",
                    "seed=11", "test_seed=99", "noise_seed=5", "out=" + dir});
  if (rc != 0) {
    d = "sweep-n run failed, rc=" + std::to_string(rc);
    return false;
  }
  auto rows = read_csv(dir + "/sweep.csv");
  if (rows.size() < 3) {
    d = "sweep.csv too short";
    return false;
  }
  size_t ip = 1, id = 1;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (std::stod(rows[i][2]) < std::stod(rows[ip][2])) ip = i;
    if (std::stod(rows[i][3]) < std::stod(rows[id][3])) id = i;
  }
  double np = std::stod(rows[ip][0]), nd = std::stod(rows[id][0]);
  const double nmax = std::stod(rows.back()[0]);
  bool interior = np > 0.10 * nmax && np < 0.95 * nmax;
  bool ordered = nd >= np;
  d = "1% noise: argmin_n projection=" + fmt(np) + " (interior window (" +
      fmt(0.10 * nmax) + "," + fmt(0.95 * nmax) + ")), argmin_n dls=" +
      fmt(nd) + " (>= projection)";
  return interior && ordered;
}

bool c6_projected_variational(std::string& d) {
  PresetRun& p = preset("proj-var");
  if (!p.ok_a()) {
    d = "proj-var preset failed, rc=" + std::to_string(p.rc_a);
    return false;
  }
  double ee = metric_rel_error(p.dir_a, "var-exact");
  double ep = metric_rel_error(p.dir_a, "var-projected");
  double en = metric_rel_error(p.dir_a, "var-normal");
  double cf = metric_rel_error(p.dir_a, "var-combined-fwd");
  double cn = metric_rel_error(p.dir_a, "var-combined-normal");
  d = "var-exact=" + fmt(ee) + " (<=0.10), var-projected=" + fmt(ep) +
      ", var-normal=" + fmt(en) + " (<=0.40); combined-fwd=" + fmt(cf) +
      ", combined-normal=" + fmt(cn) + " (reported, not asserted)";
  return ee <= 0.10 && ep <= 0.40 && en <= 0.40;
}

bool c7_robustness(std::string& d) {
  PresetRun& p = preset("sweep-n");
  if (!p.ok_a()) {
    d = "sweep-n preset failed, rc=" + std::to_string(p.rc_a);
    return false;
  }
  std::string curve = p.dir_a + "/curve.csv";
  auto rel = [&](const std::string& n) { return csv_value(curve, n, 2); };
  double e100 = rel("100"), e500 = rel("500"), efull = rel("1000");
  double ov2 = csv_value(curve, "2", 4);
  d = "rel_error n=100: " + fmt(e100) + " >= n=500: " + fmt(e500) +
      " >= n=1000: " + fmt(efull) + "; disjoint-pair support overlap=" +
      fmt(ov2) + " (<0.2)";
  return e100 >= e500 && e500 >= efull && ov2 < 0.2;
}

bool c8_aem_benefit(std::string& d) {
  PresetRun& p = preset("correction-bench");
  if (!p.ok_a()) {
    d = "correction-bench preset failed, rc=" + std::to_string(p.rc_a);
    return false;
  }
  double ea = metric_rel_error(p.dir_a, "aem");
  double eu = metric_rel_error(p.dir_a, "var-approx");
  auto samples = read_csv(p.dir_a + "/samples.csv");
  long held = 0;
  for (size_t i = 1; i < samples.size(); ++i)
    if (samples[i][0] == "var-approx") ++held;
  bool time_ok = p.wall_a < 600.0;
  std::string time_note = "whole preset " + fmt(p.wall_a) + "s";
  if (!time_ok) {
    // isolate the AEM pipeline: fit cost at bench scale plus the two
    // full-test-set reconstruction loops from timings.csv
    Timer t;
    PatConfig pc;  // mirrors presets/correction-bench.cfg
    pc.n = 32;
    pc.cfl = 0.4;
    pc.nt = 96;
    LinOp a = pat_build_accurate(pc), atilde = pat_build_approx(pc);
    Dataset ds = build_dataset(a, 64, 501, PhantomKind::disc, 1);
    aem_fit(ds, a, atilde);
    double t_fit = t.seconds();
    double t_rec = csv_value(p.dir_a + "/timings.csv", "aem", 1) +
                   csv_value(p.dir_a + "/timings.csv", "var-approx", 1);
    time_ok = t_fit + t_rec < 600.0;
    time_note = "aem pipeline " + fmt(t_fit + t_rec) + "s";
  }
  d = "aem=" + fmt(ea) + " vs uncorrected=" + fmt(eu) + " (need < 0.8x), " +
      std::to_string(held) + " held-out samples (>=32), " + time_note +
      " (<600s)";
  return ea < 0.8 * eu && held >= 32 && time_ok;
}

bool c9_correction_ordering(std::string& d) {
  PresetRun& p = preset("correction-bench");
  if (!p.ok_a()) {
    d = "correction-bench preset failed, rc=" + std::to_string(p.rc_a);
    return false;
  }
  double ee = metric_rel_error(p.dir_a, "var-exact");
  double et = metric_rel_error(p.dir_a, "corrected-trajectory");
  double em = metric_rel_error(p.dir_a, "corrected-manifold");
  d = "exact=" + fmt(ee) + " <= trajectory=" + fmt(et) + " <= manifold=" +
      fmt(em) + ", gaps " + fmt(et - ee) + " (<=0.10) and " + fmt(em - et) +
      " (>0)";
  return ee <= et && et <= em && et - ee <= 0.10 && em - et > 0.0;
}

bool c10_alignment(std::string& d) {
  PresetRun& p = preset("correction-bench");
  if (!p.ok_a()) {
    d = "correction-bench preset failed, rc=" + std::to_string(p.rc_a);
    return false;
  }
  auto rows = read_csv(p.dir_a + "/alignment.csv");
  long n_corr = 0, n_unc = 0;
  double min_corr = 1e300;
  bool unc_negative = false;
  double mis_corr = std::numeric_limits<double>::quiet_NaN();
  double mis_unc = std::numeric_limits<double>::quiet_NaN();
  for (size_t i = 1; i < rows.size(); ++i) {
    double al = std::stod(rows[i][2]), mis = std::stod(rows[i][3]);
    if (rows[i][0] == "corrected-trajectory") {
      ++n_corr;
      min_corr = std::min(min_corr, al);
      mis_corr = mis;
    } else if (rows[i][0] == "var-approx") {
      ++n_unc;
      unc_negative = unc_negative || al < 0.0;
      mis_unc = mis;
    }
  }
  if (n_corr < 1 || n_unc < 1) {
    d = "alignment.csv lacks rows for one of the models";
    return false;
  }
  bool corr_pos = min_corr > 0.0;
  bool diverged = unc_negative || mis_unc >= 2.0 * mis_corr;
  d = "corrected alignment min=" + fmt(min_corr) + " over " +
      std::to_string(n_corr) + " iterates (>0); uncorrected " +
      (unc_negative ? "goes negative" : "stays positive") +
      ", final misfits " + fmt(mis_unc) + " vs " + fmt(mis_corr) +
      (unc_negative ? "" : " (need >=2x)");
  return corr_pos && diverged;
}

bool c11_manifold_poc(std::string& d) {
  PresetRun& p = preset("manifold-poc");
  if (!p.ok_a()) {
    d = "manifold-poc preset failed, rc=" + std::to_string(p.rc_a);
    return false;
  }
  double efree = metric_rel_error(p.dir_a, "corrected-free");
  double eman = metric_rel_error(p.dir_a, "corrected-manifold");
  d = "manifold-restricted=" + fmt(eman) + " < free-space=" + fmt(efree);
  return eman < efree;
}

bool c12_gradient_hygiene(std::string& d) {
  // TV gradient against central differences
  double worst_tv = 0.0;
  TvRegulariser tv;
  tv.n = 16;
  tv.eps = 1e-3;
  tv.cell_measure = 1.0 / 256.0;
  for (int probe = 0; probe < 5; ++probe) {
    Vec x = randn(256, derive_seed(0x70, probe));
    Vec dir = randn(256, derive_seed(0x71, probe));
    const double h = 1e-6;
    double fd = (tv.value(x + h * dir) - tv.value(x - h * dir)) / (2.0 * h);
    double an = tv.cell_measure * tv.grad(x).dot(dir);
    worst_tv = std::max(worst_tv, std::abs(fd - an) / std::abs(fd));
  }
  // correction net: input VJP and parameter gradient
  ConvCorrection net = model_build(77);
  double worst_in = 0.0, worst_par = 0.0;
  for (int probe = 0; probe < 5; ++probe) {
    Mat u = randm(12, 12, derive_seed(0x72, probe));
    Mat w = randm(12, 12, derive_seed(0x73, probe));
    Mat dir = randm(12, 12, derive_seed(0x74, probe));
    const double h = 1e-5;
    double fd = ((net.value(u + h * dir) - net.value(u - h * dir)).array() *
                 w.array()).sum() / (2.0 * h);
    double an = (net.input_vjp(u, w).array() * dir.array()).sum();
    worst_in = std::max(worst_in, std::abs(fd - an) / std::abs(fd));

    Vec dp = randn(net.num_params(), derive_seed(0x75, probe));
    ConvCorrection np = net, nm = net;
    np.set_params(net.params() + h * dp);
    nm.set_params(net.params() - h * dp);
    double fdp = ((np.value(u) - nm.value(u)).array() * w.array()).sum() /
                 (2.0 * h);
    double anp = net.param_grad(u, w).dot(dp);
    worst_par = std::max(worst_par, std::abs(fdp - anp) / std::abs(fdp));
  }
  d = "central-difference rel err over 5 probes: tv=" + fmt(worst_tv) +
      " input-vjp=" + fmt(worst_in) + " param-grad=" + fmt(worst_par) +
      " (<=1e-4)";
  return worst_tv <= 1e-4 && worst_in <= 1e-4 && worst_par <= 1e-4;
}

bool c13_determinism(std::string& d) {
  const char* names[] = {"proj-var", "sweep-n", "correction-bench",
                         "manifold-poc"};
  d.clear();
  bool all = true;
  for (const char* name : names) {
    PresetRun& p = preset_twice(name);
    std::string verdict;
    if (!p.ok_a() || !p.ok_b()) {
      verdict = "run failed";
      all = false;
    } else {
      std::string a = slurp(p.dir_a + "/metrics.csv");
      std::string b = slurp(p.dir_b + "/metrics.csv");
      bool same = !a.empty() && a == b;
      verdict = same ? "identical" : "MISMATCH";
      all = all && same;
    }
    d += std::string(name) + "=" + verdict + " ";
  }
  d += "(metrics.csv byte-compared across two runs)";
  return all;
}

struct Criterion {
  int id;
  const char* label;
  bool (*run)(std::string&);
};

const Criterion kCriteria[] = {
    {1, "adjoint consistency", c1_adjoints},
    {2, "projection equals dense pseudoinverse", c2_projection_oracle},
    {3, "dual least squares equals dense minimum-norm", c3_dls_oracle},
    {4, "noise-free saturation", c4_saturation},
    {5, "semi-convergence in n", c5_semiconvergence},
    {6, "projected variational reconstruction", c6_projected_variational},
    {7, "robustness to training-set size", c7_robustness},
    {8, "approximation error model benefit", c8_aem_benefit},
    {9, "correction quality ordering", c9_correction_ordering},
    {10, "corrected-gradient alignment", c10_alignment},
    {11, "manifold-restricted descent", c11_manifold_poc},
    {12, "gradient hygiene", c12_gradient_hygiene},
    {13, "preset determinism", c13_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) {
    int id = std::atoi(argv[i]);
    if (id < 1 || id > 13) {
      std::cerr << "unknown criterion '" << argv[i] << "' (want 1..13)\n";
      return 64;
    }
    wanted.push_back(id);
  }
  if (wanted.empty())
    for (const Criterion& c : kCriteria) wanted.push_back(c.id);

  int failed = 0;
  for (int id : wanted) {
    const Criterion& c = kCriteria[id - 1];
    std::string detail;
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
      pass = false;
    }
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " C" << c.id << " "
              << c.label << ": " << detail << "\n"
              << std::flush;
    if (!pass) ++failed;
  }
  std::cout << (static_cast<int>(wanted.size()) - failed) << "/"
            << wanted.size() << " criteria passed\n";
  return failed;
}
