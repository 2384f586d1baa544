#include "oplearn/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace oplearn {

std::string format_num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

static std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  return f;
}

static std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for reading");
  return f;
}

void write_pgm(const std::string& path, const Mat& img) {
  if (img.size() == 0) throw ConfigError("write_pgm: empty image");
  if (!img.allFinite()) throw NumericalError("write_pgm: non-finite pixels in " + path);
  const double lo = img.minCoeff();
  const double hi = img.maxCoeff();
  const double span = hi - lo;

  auto f = open_out(path);
  f << "P5\n" << img.cols() << " " << img.rows() << "\n65535\n";
  std::string payload;
  payload.reserve(static_cast<size_t>(img.size()) * 2);
  for (Index r = 0; r < img.rows(); ++r) {
    for (Index c = 0; c < img.cols(); ++c) {
      uint16_t q = 0;
      if (span > 0.0) {
        double t = (img(r, c) - lo) / span * 65535.0;
        q = static_cast<uint16_t>(std::lround(std::min(std::max(t, 0.0), 65535.0)));
      }
      payload.push_back(static_cast<char>(q >> 8));
      payload.push_back(static_cast<char>(q & 0xff));
    }
  }
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) throw IoError("short write on " + path);

  auto side = open_out(path + ".range");
  side << format_num(lo) << " " << format_num(hi) << "\n";
}

static int pgm_token(std::istream& f, const std::string& path) {
  // skip whitespace and # comments, then read one decimal token
  int ch = f.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = f.get();
    } else if (std::isspace(ch)) {
      ch = f.get();
    } else {
      break;
    }
  }
  if (ch == EOF) throw IoError("truncated PGM header in " + path);
  std::string tok;
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = f.get();
  }
  int value = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw IoError("bad PGM header token '" + tok + "' in " + path);
  return value;
}

Mat read_pgm(const std::string& path) {
  auto f = open_in(path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5') throw IoError(path + " is not a P5 PGM");
  const int w = pgm_token(f, path);
  const int h = pgm_token(f, path);
  const int maxv = pgm_token(f, path);
  if (w <= 0 || h <= 0) throw IoError("bad PGM dimensions in " + path);
  if (maxv != 65535) throw IoError(path + ": expected 16-bit PGM (maxval 65535)");

  std::string payload(static_cast<size_t>(w) * h * 2, '\0');
  f.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (f.gcount() != static_cast<std::streamsize>(payload.size()))
    throw IoError("truncated file: " + path + " pixel payload needs " +
                  std::to_string(payload.size()) + " bytes, " +
                  std::to_string(payload.size() - static_cast<size_t>(f.gcount())) +
                  " missing");

  double lo = 0.0, hi = 0.0;
  {
    auto side = open_in(path + ".range");
    if (!(side >> lo >> hi)) throw IoError("bad range sidecar for " + path);
  }

  Mat img(h, w);
  const double span = hi - lo;
  size_t p = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const uint16_t q = static_cast<uint16_t>(
          (static_cast<unsigned char>(payload[p]) << 8) |
          static_cast<unsigned char>(payload[p + 1]));
      p += 2;
      img(r, c) = lo + (span > 0.0 ? q / 65535.0 * span : 0.0);
    }
  }
  return img;
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<std::string>>& rows) {
  auto f = open_out(path);
  f << header << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) f << ",";
      f << row[i];
    }
    f << "\n";
  }
  if (!f) throw IoError("short write on " + path);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  auto f = open_in(path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    out.push_back(std::move(fields));
  }
  return out;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRow>& rows) {
  std::vector<std::vector<std::string>> recs;
  recs.reserve(rows.size());
  for (const auto& r : rows)
    recs.push_back({r.method, std::to_string(r.n), format_num(r.noise),
                    format_num(r.rel_error), format_num(r.data_misfit)});
  write_csv(path, "method,n,noise,rel_error,data_misfit", recs);
}

void write_timings_csv(const std::string& path,
                       const std::vector<MetricsRow>& rows) {
  std::vector<std::vector<std::string>> recs;
  recs.reserve(rows.size());
  for (const auto& r : rows) recs.push_back({r.method, format_num(r.wall_s)});
  write_csv(path, "method,wall_s", recs);
}

}  // namespace oplearn
