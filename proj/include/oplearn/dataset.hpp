#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oplearn/linop.hpp"

namespace oplearn {

// One supervised sample: phantom x, its clean measurement y = A x, and the
// normal-operator image z = A* A x.
struct TrainingTriple {
  std::uint64_t id = 0;
  Vec x, y, z;
};

struct Dataset {
  std::uint64_t fingerprint = 0;
  VecSpace xspace, yspace;
  std::vector<TrainingTriple> triples;
};

enum class PhantomKind { disc, blob };

// Fingerprint of the generating configuration (operator config hash, phantom
// family, discs per image, base seed); any change invalidates stored files.
std::uint64_t dataset_fingerprint(const LinOp& op, PhantomKind kind,
                                  int discs_per_image, std::uint64_t seed);

// ids are 1..count, strictly increasing; per-triple seed = derive_seed(seed,
// id), so generation order is free and prefixes are reproducible.  Phantoms
// are stored raw (no normalisation).
Dataset build_dataset(const LinOp& op, Index count, std::uint64_t seed,
                      PhantomKind kind = PhantomKind::disc,
                      int discs_per_image = 1);

void write_dataset(const std::string& path, const Dataset& ds);

// As read from disk: shapes come from the file, spaces (cell measures) do
// not travel with it and must be supplied by the operator that owns the data.
struct RawDataset {
  std::uint64_t fingerprint = 0;
  std::vector<Index> xshape, yshape;
  std::vector<TrainingTriple> triples;
};

RawDataset read_dataset(const std::string& path);

// Validates fingerprint and shapes against the owning operator and its
// generation parameters, then installs the operator's spaces.
Dataset adopt_dataset(RawDataset&& raw, const LinOp& op,
                      std::uint64_t expect_fingerprint);

// Appends triples to an existing store; the file's fingerprint must match
// and ids must keep strictly increasing.
void append_dataset(const std::string& path, const Dataset& more);

}  // namespace oplearn
