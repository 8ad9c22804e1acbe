#pragma once

#include "xdrec/eval.hpp"
#include "xdrec/training.hpp"

#include <vector>

namespace xdrec {

/// Item-id embedding tables, one per domain; a sequence is the mean of the
/// rows of its items. No text and no prompts.
struct IdBaseline {
  std::vector<Matrix> tables;  // tables[d] is num_items(d) x dim

  static IdBaseline init(const Corpus& c, int dim, std::uint64_t seed);
  int dim() const { return tables.empty() ? 0 : static_cast<int>(tables.front().cols()); }
  RowVector sequence(int domain, std::span<const int> history) const;
  std::vector<TensorRef> tensors();
  std::vector<TensorRef> tensors() const;
};

struct IdTrainResult {
  IdBaseline model;
  std::vector<EpochTelemetry> telemetry;  // one entry per domain x epoch, domain-major
};

/// Trains each domain's table on its own sequences with the in-batch
/// contrastive objective (or BPR) used for stage 1.
IdTrainResult train_id_baseline(const Dataset& data, int dim, const TrainStageConfig& cfg);

DomainMetrics evaluate_id_baseline(const IdBaseline& model, const Dataset& data, int domain,
                                   const std::vector<int>& ks, bool normalize = true);

}  // namespace xdrec
