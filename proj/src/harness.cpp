#include "oplearn/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "oplearn/aem.hpp"
#include "oplearn/io.hpp"
#include "oplearn/phantom.hpp"
#include "oplearn/rng.hpp"
#include "oplearn/train.hpp"

namespace oplearn {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- KvConfig

static std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void KvConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw ConfigError("empty config key");
  values_[key] = value;
}

void KvConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    set(key, val);
  }
}

void KvConfig::apply_args(const std::vector<std::string>& args) {
  for (size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) == 0) {
      std::string key = a.substr(2);
      size_t eq = key.find('=');
      if (eq != std::string::npos) {
        set(trim(key.substr(0, eq)), trim(key.substr(eq + 1)));
      } else {
        if (i + 1 >= args.size())
          throw ConfigError("flag --" + key + " is missing its value");
        set(trim(key), trim(args[++i]));
      }
    } else {
      size_t eq = a.find('=');
      if (eq == std::string::npos)
        throw ConfigError("cannot parse argument '" + a +
                          "' (expected key=value or --key value)");
      set(trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
    }
  }
}

bool KvConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string KvConfig::get_str(const std::string& key) const {
  seen_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError("missing required config key '" + key + "'");
  return it->second;
}

std::string KvConfig::get_str(const std::string& key,
                              const std::string& fallback) const {
  seen_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

static double parse_num(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("config key '" + key + "': cannot parse number '" + s +
                      "'");
  return v;
}

double KvConfig::get_num(const std::string& key, double fallback) const {
  seen_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_num(key, it->second);
}

double KvConfig::require_num(const std::string& key) const {
  return parse_num(key, get_str(key));
}

Index KvConfig::get_int(const std::string& key, Index fallback) const {
  seen_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  long long v = 0;
  const std::string& s = it->second;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("config key '" + key + "': cannot parse integer '" + s +
                      "'");
  return static_cast<Index>(v);
}

bool KvConfig::get_flag(const std::string& key, bool fallback) const {
  seen_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "': cannot parse boolean '" + s +
                    "'");
}

std::vector<Index> KvConfig::get_int_list(const std::string& key) const {
  std::string s = get_str(key);
  std::vector<Index> out;
  std::string cur;
  auto flush = [&] {
    cur = trim(cur);
    if (cur.empty()) return;
    long long v = 0;
    auto res = std::from_chars(cur.data(), cur.data() + cur.size(), v);
    if (res.ec != std::errc() || res.ptr != cur.data() + cur.size())
      throw ConfigError("config key '" + key + "': bad list entry '" + cur +
                        "'");
    out.push_back(static_cast<Index>(v));
    cur.clear();
  };
  for (char c : s) {
    if (c == ',') {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  if (out.empty())
    throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::vector<std::string> KvConfig::unconsumed() const {
  std::vector<std::string> out;
  for (const auto& kv : values_)
    if (!seen_.count(kv.first)) out.push_back(kv.first);
  return out;
}

void KvConfig::check_consumed() const {
  auto left = unconsumed();
  if (left.empty()) return;
  std::string msg = "unknown config keys:";
  for (const auto& k : left) msg += " " + k;
  throw ConfigError(msg);
}

std::string KvConfig::echo() const {
  std::string out;
  for (const auto& kv : values_) out += kv.first + "=" + kv.second + "\n";
  return out;
}

// ------------------------------------------------------------------- paths

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

std::string join_path(const std::string& a, const std::string& b) {
  return (fs::path(a) / b).string();
}

CliPaths resolve_paths(const KvConfig& cfg, const std::string& default_leaf) {
  CliPaths p;
  p.preset_dir = cfg.get_str("preset_dir", "presets");
  p.out_dir = cfg.get_str("out", "");
  if (p.out_dir.empty()) {
    const char* root = std::getenv("OPLEARN_OUT");
    p.out_dir = join_path(root ? root : "out", default_leaf);
  }
  ensure_dir(p.out_dir);
  return p;
}

static std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// --------------------------------------------------------------- operators

OpBundle build_operators(const KvConfig& cfg) {
  OpBundle b;
  std::string op = cfg.get_str("op", "pat");
  if (op == "radon") {
    RadonConfig rc;
    rc.n = cfg.get_int("grid", 16);
    rc.angles = cfg.get_int("angles", 60);
    rc.detectors = cfg.get_int("detectors", 0);
    b.a = radon_build(rc);
    b.has_atilde = false;
    b.note = "radon grid=" + std::to_string(rc.n) +
             " angles=" + std::to_string(rc.angles) +
             " detectors=" + std::to_string(rc.det());
  } else if (op == "pat") {
    PatConfig pc;
    pc.n = cfg.get_int("grid", 64);
    pc.c = cfg.get_num("c", 1.0);
    pc.cfl = cfg.get_num("cfl", 0.3);
    pc.nt = cfg.get_int("nt", 0);
    pc.kspace_correction = cfg.get_flag("kspace", true);
    pc.angular_threshold = cfg.get_num("threshold", 1.0);
    PatValidation v = pat_validate(pc);
    b.a = pat_build_accurate(pc);
    b.atilde = pat_build_approx(pc);
    b.has_atilde = true;
    b.note = "pat grid=" + std::to_string(pc.n) +
             " nt=" + std::to_string(pc.time_samples()) + " " + v.note;
  } else {
    throw ConfigError("unknown op '" + op + "' (expected radon or pat)");
  }
  return b;
}

static PhantomKind phantom_kind(const KvConfig& cfg) {
  std::string p = cfg.get_str("phantom", "disc");
  if (p == "disc") return PhantomKind::disc;
  if (p == "blob") return PhantomKind::blob;
  throw ConfigError("unknown phantom '" + p + "' (expected disc or blob)");
}

static OrthoMode parse_mode(const std::string& m) {
  if (m == "image" || m == "image_primary") return OrthoMode::image_primary;
  if (m == "measurement" || m == "measurement_primary")
    return OrthoMode::measurement_primary;
  if (m == "backprojection" || m == "backprojection_primary")
    return OrthoMode::backprojection_primary;
  throw ConfigError("unknown mode '" + m +
                    "' (expected image, measurement or backprojection)");
}

// --------------------------------------------------------------- method set

const char* const kMethodNames[] = {
    "projection",       "dls",
    "var-exact",        "var-projected",
    "var-normal",       "var-combined-fwd",
    "var-combined-normal", "var-approx",
    "aem",              "sequential",
    "corrected-fwd",    "corrected-fwd-adj",
    "corrected-normal"};
const int kMethodCount = static_cast<int>(sizeof(kMethodNames) / sizeof(kMethodNames[0]));

bool is_known_method(const std::string& name) {
  for (int i = 0; i < kMethodCount; ++i)
    if (name == kMethodNames[i]) return true;
  return false;
}

static void require_known_method(const std::string& m) {
  if (is_known_method(m)) return;
  std::string msg = "unknown method '" + m + "' (expected one of:";
  for (int i = 0; i < kMethodCount; ++i) msg += std::string(" ") + kMethodNames[i];
  throw ConfigError(msg + ")");
}

// ------------------------------------------------------------ shared pieces

namespace {

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

struct GdKeys {
  GdConfig gd;
  double tv_eps = 1e-3;
  double alpha = 0.0;
};

GdKeys read_gd_keys(const KvConfig& cfg, double default_alpha) {
  GdKeys k;
  k.alpha = cfg.get_num("alpha", default_alpha);
  k.gd.alpha = k.alpha;
  k.gd.tau0 = cfg.get_num("tau", 0.0);
  k.gd.k_half = cfg.get_num("k_half", 0.0);
  k.gd.iters = cfg.get_int("iters", 500);
  k.gd.record_every = cfg.get_int("record_every", 10);
  k.gd.rel_change_floor = cfg.get_num("rel_change_floor", 1e-8);
  k.tv_eps = cfg.get_num("tv_eps", 1e-3);
  return k;
}

TvRegulariser make_tv(const VecSpace& xspace, double eps) {
  TvRegulariser tv;
  tv.n = xspace.shape()[0];
  tv.eps = eps;
  tv.cell_measure = xspace.cell_measure();
  return tv;
}

double rel_error(const VecSpace& sp, const Vec& x, const Vec& truth) {
  double tn = sp.norm(truth);
  if (tn == 0.0) return sp.norm(x);
  return sp.norm(x - truth) / tn;
}

double data_misfit(const LinOp& a, const Vec& x, const Vec& y) {
  double yn = a.codomain.norm(y);
  if (yn == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return a.codomain.norm(apply(a, x) - y) / yn;
}

// fraction of the reconstruction's energy inside the true support
double support_overlap(const Vec& x, const Vec& truth) {
  double inside = 0.0, total = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    double e = x[i] * x[i];
    total += e;
    if (truth[i] > 0.0) inside += e;
  }
  return total > 0.0 ? inside / total : 0.0;
}

void append_trace(std::vector<std::vector<std::string>>& rows,
                  const std::string& method, const std::vector<TraceRow>& tr) {
  for (const TraceRow& r : tr)
    rows.push_back({method, std::to_string(r.iteration), format_num(r.misfit),
                    format_num(r.objective), format_num(r.rel_change)});
}

void write_traces(const std::string& dir,
                  const std::vector<std::vector<std::string>>& rows) {
  write_csv(join_path(dir, "traces.csv"),
            "method,iteration,misfit,objective,rel_change", rows);
}

void save_grid_pgm(const std::string& dir, const std::string& name,
                   const VecSpace& sp, const Vec& v) {
  const auto& sh = sp.shape();
  write_pgm(join_path(dir, name), to_grid(v, sh[0], sh[1]));
}

struct Manifest {
  std::vector<std::pair<std::string, std::string>> run;
  void add(const std::string& k, const std::string& v) { run.push_back({k, v}); }
  void add(const std::string& k, std::uint64_t fp) { run.push_back({k, hex64(fp)}); }
  void write(const std::string& dir, const KvConfig& cfg) const {
    std::ofstream f(join_path(dir, "manifest.txt"), std::ios::binary);
    if (!f) throw IoError("cannot write manifest in " + dir);
    std::string echo = cfg.echo();
    f << "[run]\n";
    f << "config_fingerprint=" << hex64(fnv1a64(echo.data(), echo.size()))
      << "\n";
    for (const auto& kv : run) f << kv.first << "=" << kv.second << "\n";
    f << "[config]\n" << echo;
    if (!f) throw IoError("short write on manifest in " + dir);
  }
};

GdResult run_variational(const GradOracle& oracle, const TvRegulariser& tv,
                         GdConfig gd, const LinOp& trace_against,
                         const Vec& y) {
  gd.trace_op = &trace_against;
  return gd_solve(oracle, tv, gd, y);
}

}  // namespace

// ----------------------------------------------------------------- gen-data

int run_gen_data(KvConfig& cfg) {
  OpBundle ops = build_operators(cfg);
  PhantomKind kind = phantom_kind(cfg);
  int discs = static_cast<int>(cfg.get_int("discs", 1));
  Index count = cfg.get_int("count", 0);
  if (count < 1) throw ConfigError("gen-data: count must be >= 1");
  std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  std::string out = cfg.get_str("data");
  cfg.check_consumed();

  Dataset ds = build_dataset(ops.a, count, seed, kind, discs);
  fs::path parent = fs::path(out).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  write_dataset(out, ds);
  std::cout << "wrote " << out << " count=" << ds.triples.size()
            << " fingerprint=" << hex64(ds.fingerprint) << "\n";
  return 0;
}

// ----------------------------------------------------------- orthonormalize

int run_orthonormalize(KvConfig& cfg) {
  OpBundle ops = build_operators(cfg);
  PhantomKind kind = phantom_kind(cfg);
  int discs = static_cast<int>(cfg.get_int("discs", 1));
  std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  std::string data = cfg.get_str("data");
  OrthoMode mode = parse_mode(cfg.get_str("mode", "image"));
  double drop_tol = cfg.get_num("drop_tol", 1e-10);
  std::string out = cfg.get_str("system");
  cfg.check_consumed();

  std::uint64_t expect = dataset_fingerprint(ops.a, kind, discs, seed);
  Dataset ds = adopt_dataset(read_dataset(data), ops.a, expect);
  OrthoSystem sys = orthonormalise(ds, mode, drop_tol);
  fs::path parent = fs::path(out).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  write_ortho(out, sys);
  std::cout << "wrote " << out << " mode=" << ortho_mode_name(sys.mode)
            << " kept=" << sys.n_eff() << " dropped=" << sys.dropped_ids.size()
            << " fingerprint=" << hex64(sys.fingerprint) << "\n";
  return 0;
}

// -------------------------------------------------------------- reconstruct

namespace {

// builds (or loads) the dataset the learned systems come from
Dataset reconstruct_dataset(const KvConfig& cfg, const OpBundle& ops,
                            PhantomKind kind, int discs, Index train_n,
                            std::uint64_t seed) {
  std::string data = cfg.get_str("data", "");
  if (!data.empty()) {
    std::uint64_t expect = dataset_fingerprint(ops.a, kind, discs, seed);
    Dataset ds = adopt_dataset(read_dataset(data), ops.a, expect);
    if (static_cast<Index>(ds.triples.size()) < train_n)
      throw ConfigError("dataset " + data + " holds " +
                        std::to_string(ds.triples.size()) +
                        " triples, train_n wants " + std::to_string(train_n));
    return ds;
  }
  return build_dataset(ops.a, train_n, seed, kind, discs);
}

OrthoSystem prefix_system(const Dataset& ds, OrthoMode mode, Index n,
                          Index train_n) {
  OrthoSystem sys = orthonormalise(ds, mode);
  if (n > 0 && n < train_n) return truncate_system(sys, n);
  return sys;
}

}  // namespace

int run_reconstruct(KvConfig& cfg) {
  CliPaths paths = resolve_paths(cfg, "reconstruct");
  OpBundle ops = build_operators(cfg);
  std::string method = cfg.get_str("method");
  require_known_method(method);

  const bool needs_subspace =
      method == "projection" || method == "dls" || method == "var-projected" ||
      method == "var-normal" || method == "var-combined-fwd" ||
      method == "var-combined-normal";
  const bool needs_atilde =
      method == "var-combined-fwd" || method == "var-combined-normal" ||
      method == "var-approx" || method == "aem" || method == "sequential" ||
      method == "corrected-fwd" || method == "corrected-fwd-adj" ||
      method == "corrected-normal";
  if (needs_atilde && !ops.has_atilde)
    throw ConfigError("method " + method +
                      " needs the approximate model (op=pat)");

  // held-out test sample and data
  std::uint64_t test_seed = static_cast<std::uint64_t>(cfg.get_int("test_seed", 777));
  double noise = cfg.get_num("noise", 0.0);
  std::uint64_t noise_seed = static_cast<std::uint64_t>(cfg.get_int("noise_seed", 55));
  PhantomKind tkind = phantom_kind(cfg);
  Index grid = ops.a.domain.shape()[0];
  Vec truth = tkind == PhantomKind::disc ? sample_disc(test_seed, grid)
                                         : sample_blobs(test_seed, grid);
  Vec y = apply(ops.a, truth);
  NoiseResult nr = add_noise(ops.a.codomain, y, noise, noise_seed);
  const Vec& yd = nr.y;

  GdKeys keys = read_gd_keys(cfg, 2e-2);
  TvRegulariser tv = make_tv(ops.a.domain, keys.tv_eps);

  Index train_n = cfg.get_int("train_n", 100);
  Index n_sub = cfg.get_int("n", train_n);
  std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  int discs = static_cast<int>(cfg.get_int("discs", 1));
  if (needs_subspace && n_sub < 1)
    throw ConfigError("method " + method +
                      " needs a positive subspace size (n >= 1)");

  Vec xhat;
  Index n_used = 0;
  std::vector<std::vector<std::string>> trace_rows;
  Stopwatch clock;

  auto learned_sets = [&](OrthoMode mode) {
    Dataset ds = reconstruct_dataset(cfg, ops, tkind, discs, train_n, seed);
    return prefix_system(ds, mode, n_sub, train_n);
  };

  if (method == "projection") {
    OrthoSystem meas = learned_sets(OrthoMode::measurement_primary);
    n_used = meas.n_eff();
    xhat = reconstruct_projection(meas, yd);
  } else if (method == "dls") {
    Dataset ds = reconstruct_dataset(cfg, ops, tkind, discs, train_n, seed);
    OrthoSystem meas = prefix_system(ds, OrthoMode::measurement_primary, n_sub, train_n);
    OrthoSystem back = prefix_system(ds, OrthoMode::backprojection_primary, n_sub, train_n);
    n_used = meas.n_eff();
    xhat = reconstruct_dls(meas, back, yd);
  } else if (method == "var-exact") {
    GradOracle oracle = make_oracle_exact(ops.a, yd);
    GdResult r = run_variational(oracle, tv, keys.gd, ops.a, yd);
    append_trace(trace_rows, method, r.trace);
    xhat = r.x;
  } else if (method == "var-projected") {
    OrthoSystem img = learned_sets(OrthoMode::image_primary);
    n_used = img.n_eff();
    GradOracle oracle = make_oracle_projected(img, yd);
    GdResult r = run_variational(oracle, tv, keys.gd, ops.a, yd);
    append_trace(trace_rows, method, r.trace);
    xhat = r.x;
  } else if (method == "var-normal") {
    Dataset ds = reconstruct_dataset(cfg, ops, tkind, discs, train_n, seed);
    OrthoSystem img = prefix_system(ds, OrthoMode::image_primary, n_sub, train_n);
    OrthoSystem meas = prefix_system(ds, OrthoMode::measurement_primary, n_sub, train_n);
    n_used = img.n_eff();
    GradOracle oracle = make_oracle_normal(img, meas, yd);
    GdResult r = run_variational(oracle, tv, keys.gd, ops.a, yd);
    append_trace(trace_rows, method, r.trace);
    xhat = r.x;
  } else if (method == "var-combined-fwd") {
    OrthoSystem img = learned_sets(OrthoMode::image_primary);
    n_used = img.n_eff();
    GradOracle oracle = make_oracle_combined_forward(img, ops.atilde, yd);
    GdResult r = run_variational(oracle, tv, keys.gd, ops.a, yd);
    append_trace(trace_rows, method, r.trace);
    xhat = r.x;
  } else if (method == "var-combined-normal") {
    Dataset ds = reconstruct_dataset(cfg, ops, tkind, discs, train_n, seed);
    OrthoSystem img = prefix_system(ds, OrthoMode::image_primary, n_sub, train_n);
    OrthoSystem meas = prefix_system(ds, OrthoMode::measurement_primary, n_sub, train_n);
    n_used = img.n_eff();
    GradOracle oracle = make_oracle_combined_normal(img, meas, ops.atilde, yd);
    GdResult r = run_variational(oracle, tv, keys.gd, ops.a, yd);
    append_trace(trace_rows, method, r.trace);
    xhat = r.x;
  } else if (method == "var-approx") {
    GradOracle oracle = make_oracle_approx(ops.atilde, yd);
    GdResult r = run_variational(oracle, tv, keys.gd, ops.a, yd);
    append_trace(trace_rows, method, r.trace);
    xhat = r.x;
  } else if (method == "aem") {
    Index aem_n = cfg.get_int("aem_n", 64);
    std::uint64_t aem_seed = static_cast<std::uint64_t>(cfg.get_int("aem_seed", 501));
    double noise_var = cfg.get_num("aem_noise_var", 0.0);
    Dataset ds = build_dataset(ops.a, aem_n, aem_seed, tkind, discs);
    AemModel model = aem_fit(ds, ops.a, ops.atilde, noise_var);
    GradOracle oracle = make_oracle_aem(model, ops.atilde, yd);
    GdResult r = run_variational(oracle, tv, keys.gd, ops.a, yd);
    append_trace(trace_rows, method, r.trace);
    n_used = aem_n;
    xhat = r.x;
  } else if (method == "sequential") {
    Index outer_k = cfg.get_int("outer_k", 5);
    SequentialResult r = sequential_correct(ops.a, ops.atilde, yd, tv, keys.gd, outer_k);
    for (size_t k = 0; k < r.outer_residual.size(); ++k)
      trace_rows.push_back({method, std::to_string(k),
                            format_num(r.outer_residual[k]), "nan", "nan"});
    xhat = r.x;
  } else {
    // corrected-* methods load checkpoints stamped with the fast model's
    // configuration fingerprint
    std::uint64_t fp = ops.atilde.config_fingerprint;
    if (method == "corrected-fwd") {
      ConvCorrection f = load_model(cfg.get_str("ckpt_f"), fp);
      GradOracle oracle = corrected_oracle_forward(f, ops.atilde, yd);
      GdResult r = run_variational(oracle, tv, keys.gd, ops.a, yd);
      append_trace(trace_rows, method, r.trace);
      xhat = r.x;
    } else if (method == "corrected-fwd-adj") {
      ConvCorrection f = load_model(cfg.get_str("ckpt_f"), fp);
      ConvCorrection g = load_model(cfg.get_str("ckpt_g"), fp);
      GradOracle oracle = corrected_oracle_forward_adjoint(f, g, ops.atilde, yd);
      GdResult r = run_variational(oracle, tv, keys.gd, ops.a, yd);
      append_trace(trace_rows, method, r.trace);
      xhat = r.x;
    } else {  // corrected-normal
      ConvCorrection n = load_model(cfg.get_str("ckpt_n"), fp);
      std::string gpath = cfg.get_str("ckpt_g", "");
      GradOracle oracle;
      if (gpath.empty()) {
        oracle = corrected_oracle_normal(n, ops.atilde, yd);
      } else {
        ConvCorrection g = load_model(gpath, fp);
        oracle = corrected_oracle_normal(n, ops.atilde, yd, &g);
      }
      GdResult r = run_variational(oracle, tv, keys.gd, ops.a, yd);
      append_trace(trace_rows, method, r.trace);
      xhat = r.x;
    }
  }
  cfg.check_consumed();

  MetricsRow row;
  row.method = method;
  row.n = n_used;
  row.noise = noise;
  row.rel_error = rel_error(ops.a.domain, xhat, truth);
  row.data_misfit = data_misfit(ops.a, xhat, yd);
  row.wall_s = clock.seconds();

  save_grid_pgm(paths.out_dir, "truth.pgm", ops.a.domain, truth);
  save_grid_pgm(paths.out_dir, "recon-" + method + ".pgm", ops.a.domain, xhat);
  write_metrics_csv(join_path(paths.out_dir, "metrics.csv"), {row});
  write_timings_csv(join_path(paths.out_dir, "timings.csv"), {row});
  write_traces(paths.out_dir, trace_rows);
  Manifest man;
  man.add("operator", ops.note);
  man.add("operator_fingerprint", ops.a.config_fingerprint);
  man.add("noise_delta", format_num(nr.delta));
  man.write(paths.out_dir, cfg);

  std::cout << "method=" << method << " n=" << n_used
            << " rel_error=" << format_num(row.rel_error)
            << " misfit=" << format_num(row.data_misfit) << "\n";
  return 0;
}

// ------------------------------------------------------------------ sweep-n

int run_sweep_n(KvConfig& cfg) {
  CliPaths paths = resolve_paths(cfg, "sweep-n");
  OpBundle ops = build_operators(cfg);
  PhantomKind kind = phantom_kind(cfg);
  int discs = static_cast<int>(cfg.get_int("discs", 1));
  Index train_n = cfg.get_int("train_n", 150);
  std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 11));
  std::uint64_t test_seed = static_cast<std::uint64_t>(cfg.get_int("test_seed", 99));
  double noise = cfg.get_num("noise", 0.0);
  std::uint64_t noise_seed = static_cast<std::uint64_t>(cfg.get_int("noise_seed", 5));
  std::string flag_method = cfg.get_str("method", "projection");
  if (flag_method != "projection" && flag_method != "dls")
    throw ConfigError("sweep-n: method must be projection or dls");

  std::vector<Index> ns;
  if (cfg.has("n_list")) {
    ns = cfg.get_int_list("n_list");
  } else {
    Index step = cfg.get_int("n_step", 5);
    if (step < 1) throw ConfigError("sweep-n: n_step must be >= 1");
    for (Index n = step; n <= train_n; n += step) ns.push_back(n);
    if (ns.empty() || ns.back() != train_n) ns.push_back(train_n);
  }
  for (Index n : ns)
    if (n < 1 || n > train_n)
      throw ConfigError("sweep-n: n values must lie in [1, train_n]");
  cfg.check_consumed();

  Dataset ds = build_dataset(ops.a, train_n, seed, kind, discs);
  OrthoSystem meas = orthonormalise(ds, OrthoMode::measurement_primary);
  OrthoSystem back = orthonormalise(ds, OrthoMode::backprojection_primary);

  Index grid = ops.a.domain.shape()[0];
  Vec truth = kind == PhantomKind::disc ? sample_disc(test_seed, grid)
                                        : sample_blobs(test_seed, grid);
  Vec y = apply(ops.a, truth);
  NoiseResult nr = add_noise(ops.a.codomain, y, noise, noise_seed);

  std::vector<std::vector<std::string>> rows;
  std::vector<double> err_proj, err_dls;
  Stopwatch clock;
  for (Index n : ns) {
    OrthoSystem tm = n < train_n ? truncate_system(meas, n) : meas;
    OrthoSystem tb = n < train_n ? truncate_system(back, n) : back;
    Vec xp = reconstruct_projection(tm, nr.y);
    Vec xd = reconstruct_dls(tm, tb, nr.y);
    double ep = rel_error(ops.a.domain, xp, truth);
    double ed = rel_error(ops.a.domain, xd, truth);
    err_proj.push_back(ep);
    err_dls.push_back(ed);
    rows.push_back({std::to_string(n), std::to_string(tm.n_eff()),
                    format_num(ep), format_num(ed)});
  }
  write_csv(join_path(paths.out_dir, "sweep.csv"),
            "n,n_eff,rel_error_projection,rel_error_dls", rows);

  auto argmin = [&](const std::vector<double>& e) {
    return static_cast<size_t>(std::min_element(e.begin(), e.end()) - e.begin());
  };
  size_t ip = argmin(err_proj), id = argmin(err_dls);
  double span = static_cast<double>(ns.back() - ns.front());
  auto position = [&](size_t i) {
    return span > 0.0 ? static_cast<double>(ns[i] - ns.front()) / span : 0.0;
  };
  auto interior = [&](size_t i) {
    return i > 0 && i + 1 < ns.size() && position(i) > 0.10 && position(i) < 0.95;
  };
  size_t iflag = flag_method == "projection" ? ip : id;

  std::vector<std::vector<std::string>> sum;
  sum.push_back({"argmin_n_projection", std::to_string(ns[ip])});
  sum.push_back({"min_error_projection", format_num(err_proj[ip])});
  sum.push_back({"argmin_n_dls", std::to_string(ns[id])});
  sum.push_back({"min_error_dls", format_num(err_dls[id])});
  sum.push_back({"interior_minimum", interior(iflag) ? "1" : "0"});
  sum.push_back({"minimum_position", format_num(position(iflag))});
  write_csv(join_path(paths.out_dir, "summary.csv"), "key,value", sum);

  MetricsRow rp{"projection", ns[ip], noise, err_proj[ip], 0.0, 0.0};
  {
    OrthoSystem tm = ns[ip] < train_n ? truncate_system(meas, ns[ip]) : meas;
    rp.data_misfit = data_misfit(ops.a, reconstruct_projection(tm, nr.y), nr.y);
  }
  MetricsRow rd{"dls", ns[id], noise, err_dls[id], 0.0, 0.0};
  {
    OrthoSystem tm = ns[id] < train_n ? truncate_system(meas, ns[id]) : meas;
    OrthoSystem tb = ns[id] < train_n ? truncate_system(back, ns[id]) : back;
    rd.data_misfit = data_misfit(ops.a, reconstruct_dls(tm, tb, nr.y), nr.y);
  }
  rp.wall_s = rd.wall_s = clock.seconds() / 2.0;
  write_metrics_csv(join_path(paths.out_dir, "metrics.csv"), {rp, rd});
  write_timings_csv(join_path(paths.out_dir, "timings.csv"), {rp, rd});

  Manifest man;
  man.add("operator", ops.note);
  man.add("operator_fingerprint", ops.a.config_fingerprint);
  man.add("dataset_fingerprint", ds.fingerprint);
  man.add("meas_fingerprint", meas.fingerprint);
  man.add("back_fingerprint", back.fingerprint);
  man.add("noise_delta", format_num(nr.delta));
  man.add("interior_minimum", interior(iflag) ? "1" : "0");
  man.write(paths.out_dir, cfg);

  std::cout << "sweep points=" << ns.size()
            << " argmin_projection=" << ns[ip] << " argmin_dls=" << ns[id]
            << " interior_minimum=" << (interior(iflag) ? 1 : 0) << "\n";
  return 0;
}

// --------------------------------------------------------- train-correction

namespace {

struct CorrectionSetup {
  Dataset ds;
  CorrectionPools pools;
  ConvCorrection f, g;
  TrainOpt opt;
  Index refresh_every = 20;
};

CorrectionSetup correction_setup(const KvConfig& cfg, const OpBundle& ops,
                                 PhantomKind kind, int discs) {
  CorrectionSetup s;
  Index corr_n = cfg.get_int("corr_train_n", 12);
  std::uint64_t corr_seed = static_cast<std::uint64_t>(cfg.get_int("corr_seed", 301));
  s.ds = build_dataset(ops.a, corr_n, corr_seed, kind, discs);
  // scaled copies plus a zero anchor: descent iterates climb from zero, so
  // the corrections have to be valid at small amplitudes too
  s.pools = build_manifold_pools(s.ds, ops.atilde, {1.0, 0.25}, true);
  s.opt.lr = cfg.get_num("lr", 1e-3);
  s.opt.batch = cfg.get_int("batch", 8);
  s.opt.epochs = cfg.get_int("epochs", 30);
  s.opt.seed = static_cast<std::uint64_t>(cfg.get_int("train_seed", 7));
  s.refresh_every = cfg.get_int("refresh_every", 15);
  s.f = model_build(derive_seed(s.opt.seed, 0xf));
  s.g = model_build(derive_seed(s.opt.seed, 0xa));
  return s;
}

void write_training_csv(const std::string& dir,
                        const std::vector<double>& fwd,
                        const std::vector<double>& adj) {
  std::vector<std::vector<std::string>> rows;
  size_t n = std::max(fwd.size(), adj.size());
  for (size_t i = 0; i < n; ++i)
    rows.push_back({std::to_string(i),
                    i < fwd.size() ? format_num(fwd[i]) : "nan",
                    i < adj.size() ? format_num(adj[i]) : "nan"});
  write_csv(join_path(dir, "training.csv"), "epoch,fwd_loss,adj_loss", rows);
}

}  // namespace

int run_train_correction(KvConfig& cfg) {
  CliPaths paths = resolve_paths(cfg, "train-correction");
  OpBundle ops = build_operators(cfg);
  if (!ops.has_atilde)
    throw ConfigError("train-correction needs the approximate model (op=pat)");
  PhantomKind kind = phantom_kind(cfg);
  int discs = static_cast<int>(cfg.get_int("discs", 1));
  CorrectionSetup s = correction_setup(cfg, ops, kind, discs);
  Index rounds = cfg.get_int("rounds", 0);

  TrajectoryResult tres;
  if (rounds > 0) {
    TrajectoryOpt topt;
    topt.rounds = rounds;
    topt.stride = cfg.get_int("stride", 50);
    GdKeys keys = read_gd_keys(cfg, 2e-3);
    topt.gd = keys.gd;
    topt.gd.iters = cfg.get_int("traj_iters", keys.gd.iters);
    topt.gd.rel_change_floor = 0.0;  // full-length runs keep pool sizes exact
    topt.tv = make_tv(ops.a.domain, keys.tv_eps);
    topt.train = s.opt;
    topt.refresh_every = s.refresh_every;
    cfg.check_consumed();
    tres = trajectory_train(s.f, s.g, s.pools, s.ds, ops.a, ops.atilde, topt);
  } else {
    cfg.check_consumed();
    FwdAdjResult r = train_forward_adjoint(s.f, s.g, s.pools, ops.a,
                                           ops.atilde, s.opt, s.refresh_every);
    tres.fwd_loss = r.fwd_loss;
    tres.adj_loss = r.adj_loss;
    tres.a_calls = r.a_calls;
    tres.astar_calls = r.astar_calls;
    tres.diverged = r.diverged;
    tres.pool_sizes.push_back(s.pools.fwd.size());
  }
  if (tres.diverged)
    throw NumericalError("train-correction: training loss diverged");

  std::uint64_t fp = ops.atilde.config_fingerprint;
  save_model(join_path(paths.out_dir, "f.ckpt"), s.f, fp);
  save_model(join_path(paths.out_dir, "g.ckpt"), s.g, fp);
  write_training_csv(paths.out_dir, tres.fwd_loss, tres.adj_loss);

  Manifest man;
  man.add("operator", ops.note);
  man.add("operator_fingerprint", fp);
  man.add("dataset_fingerprint", s.ds.fingerprint);
  std::string sizes;
  for (Index p : tres.pool_sizes) sizes += (sizes.empty() ? "" : ",") + std::to_string(p);
  man.add("pool_sizes", sizes);
  man.add("a_calls", std::to_string(tres.a_calls));
  man.add("astar_calls", std::to_string(tres.astar_calls));
  if (!tres.fwd_loss.empty()) {
    man.add("fwd_loss_first", format_num(tres.fwd_loss.front()));
    man.add("fwd_loss_last", format_num(tres.fwd_loss.back()));
  }
  man.write(paths.out_dir, cfg);

  std::cout << "trained f,g pool=" << s.pools.fwd.size()
            << " a_calls=" << tres.a_calls
            << " fwd_loss_last="
            << (tres.fwd_loss.empty() ? "nan" : format_num(tres.fwd_loss.back()))
            << "\n";
  return 0;
}

// -------------------------------------------------------------- run-experiment

namespace {

int run_proj_var(KvConfig& cfg, const CliPaths& paths) {
  OpBundle ops = build_operators(cfg);
  PhantomKind kind = phantom_kind(cfg);
  int discs = static_cast<int>(cfg.get_int("discs", 1));
  Index train_n = cfg.get_int("train_n", 1000);
  std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 101));
  std::uint64_t test_seed = static_cast<std::uint64_t>(cfg.get_int("test_seed", 777));
  double noise = cfg.get_num("noise", 0.01);
  std::uint64_t noise_seed = static_cast<std::uint64_t>(cfg.get_int("noise_seed", 55));
  double alpha_exact = cfg.get_num("alpha_exact", 2e-4);
  double alpha_learned = cfg.get_num("alpha_learned", 2e-2);
  GdKeys keys = read_gd_keys(cfg, alpha_learned);
  cfg.check_consumed();

  Dataset ds = build_dataset(ops.a, train_n, seed, kind, discs);
  OrthoSystem img = orthonormalise(ds, OrthoMode::image_primary);
  OrthoSystem meas = orthonormalise(ds, OrthoMode::measurement_primary);

  Index grid = ops.a.domain.shape()[0];
  Vec truth = kind == PhantomKind::disc ? sample_disc(test_seed, grid)
                                        : sample_blobs(test_seed, grid);
  Vec y = apply(ops.a, truth);
  NoiseResult nr = add_noise(ops.a.codomain, y, noise, noise_seed);
  TvRegulariser tv = make_tv(ops.a.domain, keys.tv_eps);

  struct Entry {
    std::string name;
    GradOracle oracle;
    double alpha;
    Index n;
  };
  std::vector<Entry> entries;
  entries.push_back({"var-exact", make_oracle_exact(ops.a, nr.y), alpha_exact, 0});
  entries.push_back({"var-projected", make_oracle_projected(img, nr.y),
                     alpha_learned, img.n_eff()});
  entries.push_back({"var-normal", make_oracle_normal(img, meas, nr.y),
                     alpha_learned, img.n_eff()});
  entries.push_back({"var-combined-fwd",
                     make_oracle_combined_forward(img, ops.atilde, nr.y),
                     alpha_learned, img.n_eff()});
  entries.push_back({"var-combined-normal",
                     make_oracle_combined_normal(img, meas, ops.atilde, nr.y),
                     alpha_learned, img.n_eff()});

  std::vector<MetricsRow> metrics;
  std::vector<std::vector<std::string>> trace_rows;
  save_grid_pgm(paths.out_dir, "truth.pgm", ops.a.domain, truth);
  for (Entry& e : entries) {
    Stopwatch clock;
    GdConfig gd = keys.gd;
    gd.alpha = e.alpha;
    GdResult r = run_variational(e.oracle, tv, gd, ops.a, nr.y);
    MetricsRow row{e.name, e.n, noise, rel_error(ops.a.domain, r.x, truth),
                   data_misfit(ops.a, r.x, nr.y), clock.seconds()};
    metrics.push_back(row);
    append_trace(trace_rows, e.name, r.trace);
    save_grid_pgm(paths.out_dir, "recon-" + e.name + ".pgm", ops.a.domain, r.x);
    std::cout << "method=" << e.name << " rel_error=" << format_num(row.rel_error)
              << " misfit=" << format_num(row.data_misfit) << "\n";
  }

  write_metrics_csv(join_path(paths.out_dir, "metrics.csv"), metrics);
  write_timings_csv(join_path(paths.out_dir, "timings.csv"), metrics);
  write_traces(paths.out_dir, trace_rows);
  Manifest man;
  man.add("operator", ops.note);
  man.add("operator_fingerprint", ops.a.config_fingerprint);
  man.add("dataset_fingerprint", ds.fingerprint);
  man.add("image_system_fingerprint", img.fingerprint);
  man.add("meas_system_fingerprint", meas.fingerprint);
  man.add("image_n_eff", std::to_string(img.n_eff()));
  man.add("meas_n_eff", std::to_string(meas.n_eff()));
  man.add("noise_delta", format_num(nr.delta));
  man.write(paths.out_dir, cfg);
  return 0;
}

int run_robustness(KvConfig& cfg, const CliPaths& paths) {
  OpBundle ops = build_operators(cfg);
  PhantomKind kind = phantom_kind(cfg);
  if (kind != PhantomKind::disc)
    throw ConfigError("robustness preset needs phantom=disc");
  int discs = static_cast<int>(cfg.get_int("discs", 1));
  if (discs != 1)
    throw ConfigError("robustness preset needs discs=1 (support scan)");
  Index train_n = cfg.get_int("train_n", 1000);
  std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 101));
  std::uint64_t test_seed = static_cast<std::uint64_t>(cfg.get_int("test_seed", 777));
  double noise = cfg.get_num("noise", 0.0);
  std::uint64_t noise_seed = static_cast<std::uint64_t>(cfg.get_int("noise_seed", 55));
  std::vector<Index> ns = cfg.get_int_list("n_list");
  bool disjoint_pair = cfg.get_flag("disjoint_pair", true);
  GdKeys keys = read_gd_keys(cfg, 2e-2);
  cfg.check_consumed();
  for (Index n : ns)
    if (n < 1 || n > train_n)
      throw ConfigError("robustness: n_list values must lie in [1, train_n]");

  Dataset ds = build_dataset(ops.a, train_n, seed, kind, discs);
  OrthoSystem img = orthonormalise(ds, OrthoMode::image_primary);

  Index grid = ops.a.domain.shape()[0];
  DiscSpec tspec = sample_disc_spec(test_seed);
  Vec truth = render_disc(tspec, grid);
  Vec y = apply(ops.a, truth);
  NoiseResult nr = add_noise(ops.a.codomain, y, noise, noise_seed);
  TvRegulariser tv = make_tv(ops.a.domain, keys.tv_eps);
  save_grid_pgm(paths.out_dir, "truth.pgm", ops.a.domain, truth);

  auto reconstruct_with = [&](const OrthoSystem& sys, const std::string& tag,
                              MetricsRow& row, double& overlap) {
    Stopwatch clock;
    GradOracle oracle = make_oracle_projected(sys, nr.y);
    GdResult r = run_variational(oracle, tv, keys.gd, ops.a, nr.y);
    row.rel_error = rel_error(ops.a.domain, r.x, truth);
    row.data_misfit = data_misfit(ops.a, r.x, nr.y);
    row.wall_s = clock.seconds();
    overlap = support_overlap(r.x, truth);
    save_grid_pgm(paths.out_dir, "recon-" + tag + ".pgm", ops.a.domain, r.x);
  };

  std::vector<MetricsRow> metrics;
  std::vector<std::vector<std::string>> curve;
  for (Index n : ns) {
    OrthoSystem sys = n < train_n ? truncate_system(img, n) : img;
    MetricsRow row{"var-projected", n, noise, 0.0, 0.0, 0.0};
    double overlap = 0.0;
    reconstruct_with(sys, "n" + std::to_string(n), row, overlap);
    metrics.push_back(row);
    curve.push_back({std::to_string(n), std::to_string(sys.n_eff()),
                     format_num(row.rel_error), format_num(row.data_misfit),
                     format_num(overlap)});
    std::cout << "n=" << n << " rel_error=" << format_num(row.rel_error)
              << " overlap=" << format_num(overlap) << "\n";
  }

  if (disjoint_pair) {
    // two training discs whose supports avoid the test disc entirely
    const double margin = 2.0 / static_cast<double>(grid);
    std::vector<const TrainingTriple*> picks;
    for (const TrainingTriple& t : ds.triples) {
      DiscSpec s = sample_disc_spec(derive_seed(seed, t.id));
      double dx = s.cx - tspec.cx, dy = s.cy - tspec.cy;
      if (std::sqrt(dx * dx + dy * dy) > s.r + tspec.r + margin)
        picks.push_back(&t);
      if (picks.size() == 2) break;
    }
    if (picks.size() < 2)
      throw NumericalError(
          "robustness: no two training discs clear of the test support");
    Dataset pair;
    pair.xspace = ds.xspace;
    pair.yspace = ds.yspace;
    pair.fingerprint = splitmix_mix(ds.fingerprint ^ 0x2u);
    pair.triples = {*picks[0], *picks[1]};
    OrthoSystem sys2 = orthonormalise(pair, OrthoMode::image_primary);
    MetricsRow row{"var-projected", 2, noise, 0.0, 0.0, 0.0};
    double overlap = 0.0;
    reconstruct_with(sys2, "n2-disjoint", row, overlap);
    metrics.push_back(row);
    curve.push_back({"2", std::to_string(sys2.n_eff()),
                     format_num(row.rel_error), format_num(row.data_misfit),
                     format_num(overlap)});
    std::cout << "n=2(disjoint) rel_error=" << format_num(row.rel_error)
              << " overlap=" << format_num(overlap) << "\n";
  }

  write_csv(join_path(paths.out_dir, "curve.csv"),
            "n,n_eff,rel_error,data_misfit,support_overlap", curve);
  write_metrics_csv(join_path(paths.out_dir, "metrics.csv"), metrics);
  write_timings_csv(join_path(paths.out_dir, "timings.csv"), metrics);
  Manifest man;
  man.add("operator", ops.note);
  man.add("operator_fingerprint", ops.a.config_fingerprint);
  man.add("dataset_fingerprint", ds.fingerprint);
  man.add("image_system_fingerprint", img.fingerprint);
  man.add("image_n_eff", std::to_string(img.n_eff()));
  man.add("noise_delta", format_num(nr.delta));
  man.write(paths.out_dir, cfg);
  return 0;
}

int run_correction_bench(KvConfig& cfg, const CliPaths& paths) {
  OpBundle ops = build_operators(cfg);
  if (!ops.has_atilde)
    throw ConfigError("correction-bench needs the approximate model (op=pat)");
  PhantomKind kind = phantom_kind(cfg);
  int discs = static_cast<int>(cfg.get_int("discs", 1));
  Index aem_n = cfg.get_int("aem_n", 64);
  std::uint64_t aem_seed = static_cast<std::uint64_t>(cfg.get_int("aem_seed", 501));
  Index test_n = cfg.get_int("test_n", 32);
  std::uint64_t test_seed = static_cast<std::uint64_t>(cfg.get_int("test_seed", 9000));
  Index corrected_test_n = cfg.get_int("corrected_test_n", 8);
  if (test_n < 1 || corrected_test_n < 1)
    throw ConfigError("test_n and corrected_test_n must be >= 1");
  if (corrected_test_n > test_n)
    throw ConfigError("corrected_test_n cannot exceed test_n");
  double noise = cfg.get_num("noise", 0.0);
  std::uint64_t noise_seed = static_cast<std::uint64_t>(cfg.get_int("noise_seed", 91));
  double aem_noise_var = cfg.get_num("aem_noise_var", 0.0);
  GdKeys keys = read_gd_keys(cfg, 2e-3);
  Index rounds = cfg.get_int("rounds", 2);
  Index stride = cfg.get_int("stride", 50);
  Index traj_iters = cfg.get_int("traj_iters", 100);
  Index outer_k = cfg.get_int("outer_k", 5);
  CorrectionSetup setup = correction_setup(cfg, ops, kind, discs);
  cfg.check_consumed();

  const VecSpace& xsp = ops.a.domain;
  Index grid = xsp.shape()[0];
  TvRegulariser tv = make_tv(xsp, keys.tv_eps);

  // held-out test set
  std::vector<Vec> truths(test_n), datas(test_n);
  for (Index s = 0; s < test_n; ++s) {
    std::uint64_t ts = derive_seed(test_seed, static_cast<std::uint64_t>(s + 1));
    truths[s] = kind == PhantomKind::disc ? sample_disc(ts, grid)
                                          : sample_blobs(ts, grid);
    Vec ys = apply(ops.a, truths[s]);
    datas[s] = add_noise(ops.a.codomain, ys, noise,
                         derive_seed(noise_seed, static_cast<std::uint64_t>(s + 1)))
                   .y;
  }

  std::vector<std::vector<std::string>> samples;
  auto sample_row = [&](const std::string& method, Index s, const Vec& x) {
    double re = rel_error(xsp, x, truths[s]);
    double mf = data_misfit(ops.a, x, datas[s]);
    samples.push_back({method, std::to_string(s + 1), format_num(re),
                       format_num(mf)});
    return re;
  };
  auto mean_row = [&](const std::string& method, Index n,
                      const std::vector<double>& errs,
                      const std::vector<double>& mis, double wall) {
    double esum = 0.0, msum = 0.0;
    for (double e : errs) esum += e;
    for (double m : mis) msum += m;
    return MetricsRow{method, n, noise, esum / static_cast<double>(errs.size()),
                      msum / static_cast<double>(mis.size()), wall};
  };

  std::vector<MetricsRow> metrics;
  std::vector<std::vector<std::string>> trace_rows;

  // ---- uncorrected fast model and AEM over the full test set
  Dataset ds_aem = build_dataset(ops.a, aem_n, aem_seed, kind, discs);
  AemModel aem = aem_fit(ds_aem, ops.a, ops.atilde, aem_noise_var);
  std::vector<Vec> recon_approx(test_n);
  {
    Stopwatch clock;
    std::vector<double> errs, mis;
    for (Index s = 0; s < test_n; ++s) {
      GradOracle oracle = make_oracle_approx(ops.atilde, datas[s]);
      GdResult r = gd_solve(oracle, tv, keys.gd, datas[s]);
      recon_approx[s] = r.x;
      errs.push_back(sample_row("var-approx", s, r.x));
      mis.push_back(data_misfit(ops.a, r.x, datas[s]));
    }
    metrics.push_back(mean_row("var-approx", 0, errs, mis, clock.seconds()));
  }
  {
    Stopwatch clock;
    std::vector<double> errs, mis;
    for (Index s = 0; s < test_n; ++s) {
      GradOracle oracle = make_oracle_aem(aem, ops.atilde, datas[s]);
      GdResult r = gd_solve(oracle, tv, keys.gd, datas[s]);
      errs.push_back(sample_row("aem", s, r.x));
      mis.push_back(data_misfit(ops.a, r.x, datas[s]));
      if (s == 0)
        save_grid_pgm(paths.out_dir, "recon-aem.pgm", xsp, r.x);
    }
    metrics.push_back(mean_row("aem", aem_n, errs, mis, clock.seconds()));
  }
  save_grid_pgm(paths.out_dir, "truth.pgm", xsp, truths[0]);
  save_grid_pgm(paths.out_dir, "recon-var-approx.pgm", xsp, recon_approx[0]);

  // ---- manifold-only corrections
  Stopwatch train_clock;
  FwdAdjResult manifold_res =
      train_forward_adjoint(setup.f, setup.g, setup.pools, ops.a, ops.atilde,
                            setup.opt, setup.refresh_every);
  if (manifold_res.diverged)
    throw NumericalError("correction-bench: manifold training diverged");
  ConvCorrection f_man = setup.f, g_man = setup.g;
  double manifold_train_s = train_clock.seconds();

  // ---- trajectory continuation from the manifold-trained state
  TrajectoryOpt topt;
  topt.rounds = rounds;
  topt.stride = stride;
  topt.gd = keys.gd;
  topt.gd.iters = traj_iters;
  topt.gd.rel_change_floor = 0.0;
  topt.tv = tv;
  topt.train = setup.opt;
  topt.refresh_every = setup.refresh_every;
  topt.round0 = false;
  Stopwatch traj_clock;
  TrajectoryResult traj_res = trajectory_train(setup.f, setup.g, setup.pools,
                                               setup.ds, ops.a, ops.atilde, topt);
  if (traj_res.diverged)
    throw NumericalError("correction-bench: trajectory training diverged");
  double traj_train_s = traj_clock.seconds();

  std::uint64_t fp = ops.atilde.config_fingerprint;
  save_model(join_path(paths.out_dir, "f-manifold.ckpt"), f_man, fp);
  save_model(join_path(paths.out_dir, "g-manifold.ckpt"), g_man, fp);
  save_model(join_path(paths.out_dir, "f-trajectory.ckpt"), setup.f, fp);
  save_model(join_path(paths.out_dir, "g-trajectory.ckpt"), setup.g, fp);
  {
    std::vector<double> fwd = manifold_res.fwd_loss, adj = manifold_res.adj_loss;
    fwd.insert(fwd.end(), traj_res.fwd_loss.begin(), traj_res.fwd_loss.end());
    adj.insert(adj.end(), traj_res.adj_loss.begin(), traj_res.adj_loss.end());
    write_training_csv(paths.out_dir, fwd, adj);
  }

  // ---- reconstruction comparison on the corrected test subset
  auto bench_method = [&](const std::string& method, auto make, Index nfield) {
    Stopwatch clock;
    std::vector<double> errs, mis;
    for (Index s = 0; s < corrected_test_n; ++s) {
      GradOracle oracle = make(datas[s]);
      GdConfig gd = keys.gd;
      gd.trace_op = &ops.a;
      GdResult r = gd_solve(oracle, tv, gd, datas[s]);
      errs.push_back(sample_row(method, s, r.x));
      mis.push_back(data_misfit(ops.a, r.x, datas[s]));
      if (s == 0) {
        append_trace(trace_rows, method, r.trace);
        save_grid_pgm(paths.out_dir, "recon-" + method + ".pgm", xsp, r.x);
      }
    }
    metrics.push_back(mean_row(method, nfield, errs, mis, clock.seconds()));
  };
  const Index corr_n = static_cast<Index>(setup.ds.triples.size());
  bench_method("var-exact",
               [&](const Vec& yd) { return make_oracle_exact(ops.a, yd); }, 0);
  bench_method("corrected-manifold",
               [&](const Vec& yd) {
                 return corrected_oracle_forward_adjoint(f_man, g_man,
                                                         ops.atilde, yd);
               },
               corr_n);
  bench_method("corrected-trajectory",
               [&](const Vec& yd) {
                 return corrected_oracle_forward_adjoint(setup.f, setup.g,
                                                         ops.atilde, yd);
               },
               corr_n);

  // ---- alignment of corrected vs uncorrected gradients along descent paths
  {
    const Vec& yd = datas[0];
    GradOracle exact = make_oracle_exact(ops.a, yd);
    auto align_trace = [&](const std::string& tag, const GradOracle& oracle,
                           std::vector<std::vector<std::string>>& rows) {
      GdConfig gd = keys.gd;
      gd.snapshot_every = gd.record_every;
      gd.rel_change_floor = 0.0;
      GdResult r = gd_solve(oracle, tv, gd, yd);
      Index k = 0;
      double last_misfit = 0.0;
      for (const Vec& xk : r.snapshots) {
        k += gd.snapshot_every;
        double al = alignment(xsp, exact.grad(xk), oracle.grad(xk));
        last_misfit = data_misfit(ops.a, xk, yd);
        rows.push_back({tag, std::to_string(k), format_num(al),
                        format_num(last_misfit)});
      }
      return last_misfit;
    };
    std::vector<std::vector<std::string>> arows;
    double mis_corr = align_trace(
        "corrected-trajectory",
        corrected_oracle_forward_adjoint(setup.f, setup.g, ops.atilde, yd),
        arows);
    double mis_unc =
        align_trace("var-approx", make_oracle_approx(ops.atilde, yd), arows);
    write_csv(join_path(paths.out_dir, "alignment.csv"),
              "model,iteration,alignment,misfit", arows);
    std::cout << "alignment misfit corrected=" << format_num(mis_corr)
              << " uncorrected=" << format_num(mis_unc) << "\n";
  }

  // ---- sequential model correction on the first test sample
  {
    Stopwatch clock;
    GdConfig inner = keys.gd;
    SequentialResult sr =
        sequential_correct(ops.a, ops.atilde, datas[0], tv, inner, outer_k);
    std::vector<std::vector<std::string>> rows;
    for (size_t k = 0; k < sr.outer_residual.size(); ++k)
      rows.push_back({std::to_string(k), format_num(sr.outer_residual[k])});
    write_csv(join_path(paths.out_dir, "sequential.csv"), "outer,residual", rows);
    MetricsRow row{"sequential", 0, noise,
                   rel_error(xsp, sr.x, truths[0]),
                   data_misfit(ops.a, sr.x, datas[0]), clock.seconds()};
    metrics.push_back(row);
    save_grid_pgm(paths.out_dir, "recon-sequential.pgm", xsp, sr.x);
  }

  // ---- convergence-assumption margins at the manifold solution
  double mf = margin_forward(ops.a, f_man, ops.atilde, truths[0]);
  double ma = margin_adjoint(ops.a, f_man, g_man, ops.atilde, truths[0], datas[0]);

  write_metrics_csv(join_path(paths.out_dir, "metrics.csv"), metrics);
  write_timings_csv(join_path(paths.out_dir, "timings.csv"), metrics);
  write_csv(join_path(paths.out_dir, "samples.csv"),
            "method,sample,rel_error,data_misfit", samples);
  write_traces(paths.out_dir, trace_rows);

  Manifest man;
  man.add("operator", ops.note);
  man.add("operator_fingerprint", ops.a.config_fingerprint);
  man.add("approx_fingerprint", fp);
  man.add("aem_dataset_fingerprint", ds_aem.fingerprint);
  man.add("corr_dataset_fingerprint", setup.ds.fingerprint);
  man.add("aem_rank", std::to_string(aem.rank()));
  std::string sizes;
  for (Index p : traj_res.pool_sizes)
    sizes += (sizes.empty() ? "" : ",") + std::to_string(p);
  man.add("pool_sizes", sizes);
  man.add("trajectory_a_calls", std::to_string(traj_res.a_calls));
  man.add("trajectory_astar_calls", std::to_string(traj_res.astar_calls));
  man.add("margin_forward", format_num(mf));
  man.add("margin_adjoint", format_num(ma));
  man.add("manifold_train_s", format_num(manifold_train_s));
  man.add("trajectory_train_s", format_num(traj_train_s));
  man.write(paths.out_dir, cfg);

  for (const MetricsRow& r : metrics)
    std::cout << "method=" << r.method
              << " rel_error=" << format_num(r.rel_error)
              << " misfit=" << format_num(r.data_misfit) << "\n";
  return 0;
}

int run_manifold_poc(KvConfig& cfg, const CliPaths& paths) {
  OpBundle ops = build_operators(cfg);
  if (!ops.has_atilde)
    throw ConfigError("manifold-poc needs the approximate model (op=pat)");
  PhantomKind kind = phantom_kind(cfg);
  int discs = static_cast<int>(cfg.get_int("discs", 1));
  Index span_n = cfg.get_int("span_n", 150);
  std::uint64_t span_seed = static_cast<std::uint64_t>(cfg.get_int("span_seed", 401));
  std::uint64_t test_seed = static_cast<std::uint64_t>(cfg.get_int("test_seed", 9100));
  double noise = cfg.get_num("noise", 0.0);
  std::uint64_t noise_seed = static_cast<std::uint64_t>(cfg.get_int("noise_seed", 17));
  GdKeys keys = read_gd_keys(cfg, 2e-3);
  CorrectionSetup setup = correction_setup(cfg, ops, kind, discs);
  cfg.check_consumed();

  Dataset ds_span = build_dataset(ops.a, span_n, span_seed, kind, discs);
  OrthoSystem img = orthonormalise(ds_span, OrthoMode::image_primary);

  FwdAdjResult tr = train_forward_adjoint(setup.f, setup.g, setup.pools, ops.a,
                                          ops.atilde, setup.opt,
                                          setup.refresh_every);
  if (tr.diverged)
    throw NumericalError("manifold-poc: correction training diverged");
  write_training_csv(paths.out_dir, tr.fwd_loss, tr.adj_loss);

  Index grid = ops.a.domain.shape()[0];
  Vec truth = kind == PhantomKind::disc ? sample_disc(test_seed, grid)
                                        : sample_blobs(test_seed, grid);
  Vec y = apply(ops.a, truth);
  NoiseResult nr = add_noise(ops.a.codomain, y, noise, noise_seed);
  TvRegulariser tv = make_tv(ops.a.domain, keys.tv_eps);

  GradOracle oracle =
      corrected_oracle_forward_adjoint(setup.f, setup.g, ops.atilde, nr.y);
  const Index corr_n = static_cast<Index>(setup.ds.triples.size());
  std::vector<MetricsRow> metrics;
  std::vector<std::vector<std::string>> trace_rows;
  {
    Stopwatch clock;
    GdConfig gd = keys.gd;
    gd.trace_op = &ops.a;
    GdResult r = gd_solve(oracle, tv, gd, nr.y);
    metrics.push_back({"corrected-free", corr_n, noise,
                       rel_error(ops.a.domain, r.x, truth),
                       data_misfit(ops.a, r.x, nr.y), clock.seconds()});
    append_trace(trace_rows, "corrected-free", r.trace);
    save_grid_pgm(paths.out_dir, "recon-corrected-free.pgm", ops.a.domain, r.x);
  }
  {
    Stopwatch clock;
    GdConfig gd = keys.gd;
    gd.trace_op = &ops.a;
    GdResult r = gd_solve_on_manifold(oracle, tv, gd, nr.y, img);
    metrics.push_back({"corrected-manifold", corr_n, noise,
                       rel_error(ops.a.domain, r.x, truth),
                       data_misfit(ops.a, r.x, nr.y), clock.seconds()});
    append_trace(trace_rows, "corrected-manifold", r.trace);
    save_grid_pgm(paths.out_dir, "recon-corrected-manifold.pgm", ops.a.domain,
                  r.x);
  }
  save_grid_pgm(paths.out_dir, "truth.pgm", ops.a.domain, truth);

  write_metrics_csv(join_path(paths.out_dir, "metrics.csv"), metrics);
  write_timings_csv(join_path(paths.out_dir, "timings.csv"), metrics);
  write_traces(paths.out_dir, trace_rows);
  Manifest man;
  man.add("operator", ops.note);
  man.add("operator_fingerprint", ops.a.config_fingerprint);
  man.add("span_dataset_fingerprint", ds_span.fingerprint);
  man.add("corr_dataset_fingerprint", setup.ds.fingerprint);
  man.add("span_n_eff", std::to_string(img.n_eff()));
  man.add("noise_delta", format_num(nr.delta));
  man.write(paths.out_dir, cfg);

  for (const MetricsRow& r : metrics)
    std::cout << "method=" << r.method
              << " rel_error=" << format_num(r.rel_error) << "\n";
  return 0;
}

}  // namespace

int run_experiment(KvConfig& cfg) {
  std::string kind = cfg.get_str("kind");
  CliPaths paths = resolve_paths(cfg, kind);
  if (kind == "proj-var") return run_proj_var(cfg, paths);
  if (kind == "robustness") return run_robustness(cfg, paths);
  if (kind == "correction-bench") return run_correction_bench(cfg, paths);
  if (kind == "manifold-poc") return run_manifold_poc(cfg, paths);
  throw ConfigError("unknown experiment kind '" + kind +
                    "' (expected proj-var, robustness, correction-bench or "
                    "manifold-poc)");
}

// ------------------------------------------------------------------ metrics

int run_metrics(KvConfig& cfg) {
  std::string recon = cfg.get_str("recon");
  std::string truth = cfg.get_str("truth");
  cfg.check_consumed();
  Mat r = read_pgm(recon);
  Mat t = read_pgm(truth);
  if (r.rows() != t.rows() || r.cols() != t.cols())
    throw ConfigError("metrics: image shapes differ (" +
                      std::to_string(r.rows()) + "x" + std::to_string(r.cols()) +
                      " vs " + std::to_string(t.rows()) + "x" +
                      std::to_string(t.cols()) + ")");
  double tn = t.norm();
  double rel = tn > 0.0 ? (r - t).norm() / tn : r.norm();
  std::cout << "rel_error=" << format_num(rel) << "\n";
  return 0;
}

// ----------------------------------------------------------------- cli_main

static void usage(std::ostream& os) {
  os << "usage: oplearn <subcommand> [key=value | --key value]...\n"
        "subcommands:\n"
        "  gen-data         build a training set (op config, count=, seed=, "
        "phantom=, data=<file>)\n"
        "  orthonormalize   joint Gram-Schmidt over a dataset (data=, mode=, "
        "system=<file>)\n"
        "  reconstruct      single reconstruction (method=, test_seed=, "
        "noise=, ...)\n"
        "  train-correction fit residual corrections (corr_train_n=, epochs=, "
        "rounds=, ...)\n"
        "  run-experiment   run a preset (preset=<name> or config=<file>)\n"
        "  sweep-n          error-vs-subspace-size curve (train_n=, n_step=, "
        "noise=, ...)\n"
        "  metrics          relative error between two PGMs (recon=, truth=)\n"
        "common keys: op=radon|pat grid= out= preset_dir= (see README)\n";
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty()) {
    usage(std::cerr);
    return 2;
  }
  std::string sub = args.front();
  args.erase(args.begin());
  if (sub == "help" || sub == "--help" || sub == "-h") {
    usage(std::cout);
    return 0;
  }

  try {
    KvConfig cfg;
    cfg.apply_args(args);
    if (cfg.has("preset") || cfg.has("config")) {
      KvConfig base;
      std::string preset = cfg.get_str("preset", "");
      if (!preset.empty()) {
        std::string dir = cfg.get_str("preset_dir", "presets");
        base.load_file(join_path(dir, preset + ".cfg"));
      }
      std::string file = cfg.get_str("config", "");
      if (!file.empty()) base.load_file(file);
      base.apply_args(args);
      // the selector keys themselves are consumed here
      base.get_str("preset", "");
      base.get_str("config", "");
      base.get_str("preset_dir", "");
      cfg = base;
    }

    if (sub == "gen-data") return run_gen_data(cfg);
    if (sub == "orthonormalize") return run_orthonormalize(cfg);
    if (sub == "reconstruct") return run_reconstruct(cfg);
    if (sub == "train-correction") return run_train_correction(cfg);
    if (sub == "run-experiment") return run_experiment(cfg);
    if (sub == "sweep-n") return run_sweep_n(cfg);
    if (sub == "metrics") return run_metrics(cfg);
    std::cerr << "unknown subcommand '" << sub << "'\n";
    usage(std::cerr);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace oplearn
