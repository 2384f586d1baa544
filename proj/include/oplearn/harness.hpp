#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "oplearn/linop.hpp"
#include "oplearn/pat.hpp"
#include "oplearn/radon.hpp"
#include "oplearn/types.hpp"

namespace oplearn {

// Flat key=value configuration. Sources merge in order: preset file, then
// config file, then command-line overrides (later wins). Keys that are never
// consumed are reported as errors so typos cannot silently change a run.
class KvConfig {
 public:
  void set(const std::string& key, const std::string& value);
  void load_file(const std::string& path);
  // accepts "key=value" and "--key value" forms
  void apply_args(const std::vector<std::string>& args);

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_num(const std::string& key, double fallback) const;
  double require_num(const std::string& key) const;
  Index get_int(const std::string& key, Index fallback) const;
  bool get_flag(const std::string& key, bool fallback) const;
  std::vector<Index> get_int_list(const std::string& key) const;

  // keys present but never read by any getter
  std::vector<std::string> unconsumed() const;
  void check_consumed() const;  // throws ConfigError listing leftovers

  // deterministic echo for manifests: sorted "key=value" lines
  std::string echo() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> seen_;
};

// Operator pair for one experiment: the reference model `a` and, for
// photoacoustic runs, the fast approximate model `atilde`.
struct OpBundle {
  LinOp a;
  LinOp atilde;       // empty label when absent
  bool has_atilde = false;
  std::string note;   // geometry diagnostics for the manifest
};

OpBundle build_operators(const KvConfig& cfg);

// Directory helpers (std::filesystem wrappers with IoError reporting).
void ensure_dir(const std::string& path);
std::string join_path(const std::string& a, const std::string& b);

struct CliPaths {
  std::string out_dir;      // resolved output directory for this run
  std::string preset_dir;   // where presets/<name>.cfg live
};

CliPaths resolve_paths(const KvConfig& cfg, const std::string& default_leaf);

// Subcommand entry points. Each returns a process exit code.
int run_gen_data(KvConfig& cfg);
int run_orthonormalize(KvConfig& cfg);
int run_reconstruct(KvConfig& cfg);
int run_train_correction(KvConfig& cfg);
int run_sweep_n(KvConfig& cfg);
int run_experiment(KvConfig& cfg);
int run_metrics(KvConfig& cfg);

// Top-level dispatcher used by the CLI binary; maps exceptions to exit codes
// (2 config, 3 numerical, 4 io, 1 anything else).
int cli_main(int argc, char** argv);

extern const char* const kMethodNames[];
extern const int kMethodCount;
bool is_known_method(const std::string& name);

}  // namespace oplearn
