#pragma once

#include <string>
#include <vector>

#include "oplearn/types.hpp"

namespace oplearn {

struct MetricsRow {
  std::string method;
  Index n = 0;         // subspace / training-set size where applicable
  double noise = 0.0;
  double rel_error = 0.0;
  double data_misfit = 0.0;  // NaN when the true operator is unavailable
  double wall_s = 0.0;       // written to timings.csv only (nondeterministic)
};

// shortest round-trip decimal form, locale-independent
std::string format_num(double v);

// 16-bit big-endian P5 with an affine scale to [0, 65535]; the exact value
// range rides in a text sidecar `<path>.range` so loads are lossless up to
// the quantisation.
void write_pgm(const std::string& path, const Mat& img);
Mat read_pgm(const std::string& path);

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<std::string>>& rows);
// returns all records including the header line
std::vector<std::vector<std::string>> read_csv(const std::string& path);

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRow>& rows);
void write_timings_csv(const std::string& path,
                       const std::vector<MetricsRow>& rows);

}  // namespace oplearn
