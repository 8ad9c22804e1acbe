#pragma once

#include "xdrec/corpus.hpp"

#include <string>
#include <vector>

namespace xdrec {

struct DistanceCell {
  std::string model;
  std::string group;  // "intra:<domain>" or "inter"
  double mean_distance = 0.0;
  std::size_t pairs = 0;
};

struct DistanceReport {
  std::vector<DistanceCell> cells;
  Warnings warnings;
  std::uint64_t seed = 0;
  int max_pairs = 0;

  /// Mean distance of one cell; throws std::out_of_range when the cell is absent.
  double get(const std::string& model, const std::string& group) const;
  std::string to_json() const;
  std::string to_csv() const;
};

/// Item embeddings of one model: per domain, one row per item.
struct EmbeddingSet {
  std::string model;
  std::vector<Matrix> domains;
};

/// Mean cosine distance (1 - cosine similarity) between item pairs within each
/// domain and across domain boundaries. A cell with more candidate pairs than
/// `max_pairs` is estimated from `max_pairs` seeded uniform draws; otherwise
/// every pair is used. Groups with fewer than two items are skipped with a warning.
DistanceReport distance_analysis(const std::vector<EmbeddingSet>& models, const std::vector<std::string>& domain_names,
                                 int max_pairs, std::uint64_t seed);

}  // namespace xdrec
