#include "oplearn/dataset.hpp"

#include <fstream>

#include "oplearn/binio.hpp"
#include "oplearn/phantom.hpp"
#include "oplearn/rng.hpp"

namespace oplearn {

namespace {
constexpr char kMagic[4] = {'O', 'P', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

void put_block2(std::ostream& os, const Vec& v, Index rows, Index cols) {
  if (v.size() != rows * cols)
    throw IoError("block write: length " + std::to_string(v.size()) +
                  " does not match " + std::to_string(rows) + "x" +
                  std::to_string(cols));
  put_u16(os, 2);
  put_u64(os, static_cast<std::uint64_t>(rows));
  put_u64(os, static_cast<std::uint64_t>(cols));
  // payload row-major; storage is column-major
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) put_f64(os, v[r + c * rows]);
}

Vec get_block2(std::istream& is, Index& rows, Index& cols,
               const std::string& what) {
  std::uint16_t rank = get_u16(is, what + " rank");
  if (rank != 2)
    throw IoError(what + ": expected rank 2 block, got rank " +
                  std::to_string(rank));
  rows = static_cast<Index>(get_u64(is, what + " rows"));
  cols = static_cast<Index>(get_u64(is, what + " cols"));
  if (rows <= 0 || cols <= 0 || rows * cols > (Index{1} << 32))
    throw IoError(what + ": implausible block dims " + std::to_string(rows) +
                  "x" + std::to_string(cols));
  Vec v(rows * cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      v[r + c * rows] = get_f64(is, what + " payload");
  return v;
}

std::uint64_t dataset_fingerprint(const LinOp& op, PhantomKind kind,
                                  int discs_per_image, std::uint64_t seed) {
  std::string s = "dataset|op=" + op.label + "|" +
                  std::to_string(op.config_fingerprint) +
                  "|kind=" + (kind == PhantomKind::disc ? "disc" : "blob") +
                  "|k=" + std::to_string(discs_per_image) +
                  "|seed=" + std::to_string(seed);
  return fnv1a64(s.data(), s.size());
}

Dataset build_dataset(const LinOp& op, Index count, std::uint64_t seed,
                      PhantomKind kind, int discs_per_image) {
  if (count < 1) throw ConfigError("build_dataset: count must be >= 1");
  Index n = op.domain.shape()[0];
  if (op.domain.shape().size() != 2 || op.domain.shape()[1] != n)
    throw ConfigError("build_dataset: operator domain is not a square grid");
  Dataset ds;
  ds.fingerprint = dataset_fingerprint(op, kind, discs_per_image, seed);
  ds.xspace = op.domain;
  ds.yspace = op.codomain;
  ds.triples.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    TrainingTriple t;
    t.id = static_cast<std::uint64_t>(i + 1);
    std::uint64_t s = derive_seed(seed, t.id);
    t.x = (kind == PhantomKind::disc) ? sample_discs(s, n, discs_per_image)
                                      : sample_blobs(s, n);
    t.y = apply(op, t.x);
    t.z = apply_adjoint(op, t.y);
    ds.triples.push_back(std::move(t));
  }
  return ds;
}

namespace {

void write_triples(std::ostream& os, const Dataset& ds) {
  const auto& xs = ds.xspace.shape();
  const auto& ys = ds.yspace.shape();
  for (const TrainingTriple& t : ds.triples) {
    put_u64(os, t.id);
    put_block2(os, t.x, xs[0], xs[1]);
    put_block2(os, t.y, ys[0], ys[1]);
    put_block2(os, t.z, xs[0], xs[1]);
  }
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  put_bytes(os, kMagic, 4);
  put_u16(os, kVersion);
  put_u64(os, ds.fingerprint);
  put_u64(os, static_cast<std::uint64_t>(ds.triples.size()));
  write_triples(os, ds);
  if (!os) throw IoError("write failed: " + path);
}

RawDataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  get_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError(path + ": bad magic, not a triple store");
  std::uint16_t version = get_u16(is, "version");
  if (version != kVersion)
    throw IoError(path + ": unsupported version " + std::to_string(version));
  RawDataset raw;
  raw.fingerprint = get_u64(is, "fingerprint");
  std::uint64_t count = get_u64(is, "count");
  std::uint64_t prev_id = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    TrainingTriple t;
    t.id = get_u64(is, "triple id");
    if (t.id <= prev_id)
      throw IoError(path + ": ids not strictly increasing at entry " +
                    std::to_string(i));
    prev_id = t.id;
    Index xr, xc, yr, yc, zr, zc;
    t.x = get_block2(is, xr, xc, "x block");
    t.y = get_block2(is, yr, yc, "y block");
    t.z = get_block2(is, zr, zc, "z block");
    if (zr != xr || zc != xc)
      throw IoError(path + ": z block shape differs from x block");
    if (i == 0) {
      raw.xshape = {xr, xc};
      raw.yshape = {yr, yc};
    } else if (raw.xshape != std::vector<Index>{xr, xc} ||
               raw.yshape != std::vector<Index>{yr, yc}) {
      throw IoError(path + ": inconsistent block shapes at entry " +
                    std::to_string(i));
    }
    raw.triples.push_back(std::move(t));
  }
  return raw;
}

Dataset adopt_dataset(RawDataset&& raw, const LinOp& op,
                      std::uint64_t expect_fingerprint) {
  if (raw.fingerprint != expect_fingerprint)
    throw IoError("dataset fingerprint mismatch: file " +
                  std::to_string(raw.fingerprint) + ", expected " +
                  std::to_string(expect_fingerprint));
  if (!raw.triples.empty()) {
    if (raw.xshape != op.domain.shape())
      throw IoError("dataset x shape " + shape_string(raw.xshape) +
                    " does not match operator domain " +
                    shape_string(op.domain.shape()));
    if (raw.yshape != op.codomain.shape())
      throw IoError("dataset y shape " + shape_string(raw.yshape) +
                    " does not match operator codomain " +
                    shape_string(op.codomain.shape()));
  }
  Dataset ds;
  ds.fingerprint = raw.fingerprint;
  ds.xspace = op.domain;
  ds.yspace = op.codomain;
  ds.triples = std::move(raw.triples);
  return ds;
}

void append_dataset(const std::string& path, const Dataset& more) {
  RawDataset existing = read_dataset(path);
  if (existing.fingerprint != more.fingerprint)
    throw IoError("append rejected: file fingerprint " +
                  std::to_string(existing.fingerprint) +
                  " differs from dataset fingerprint " +
                  std::to_string(more.fingerprint));
  std::uint64_t last =
      existing.triples.empty() ? 0 : existing.triples.back().id;
  Dataset merged;
  merged.fingerprint = more.fingerprint;
  merged.xspace = more.xspace;
  merged.yspace = more.yspace;
  merged.triples = std::move(existing.triples);
  for (const TrainingTriple& t : more.triples) {
    if (t.id <= last)
      throw IoError("append rejected: id " + std::to_string(t.id) +
                    " not greater than existing last id " +
                    std::to_string(last));
    last = t.id;
    merged.triples.push_back(t);
  }
  write_dataset(path, merged);
}

}  // namespace oplearn
