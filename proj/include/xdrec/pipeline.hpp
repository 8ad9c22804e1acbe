#pragma once

#include "xdrec/baseline.hpp"
#include "xdrec/config.hpp"
#include "xdrec/eval.hpp"
#include "xdrec/training.hpp"

#include <optional>
#include <vector>

namespace xdrec {

/// Corpus named by the config (generated, ingested or cached), filtered and
/// with users shared between domains removed.
Corpus build_corpus(const RunConfig& cfg, Warnings* warnings = nullptr);
Dataset build_dataset(const RunConfig& cfg, Warnings* warnings = nullptr);

struct VariantRun {
  Variant variant = Variant::FULL;
  std::optional<Model> pretrained;  // absent for PR
  Model model;                      // what gets evaluated
  std::vector<EpochTelemetry> telemetry;
  DomainMetrics metrics;            // target-domain test metrics
};

/// Fresh init, stage 1 unless PR, stage 2 unless PT, then test evaluation on
/// the target domain. Seeds and settings other than the variant are shared.
VariantRun run_variant(const Dataset& data, const RunConfig& cfg, Variant v);

/// Stage 2 from `pretrained` restricted to the first `n` target-domain
/// training examples (seeded order), scored on those same examples.
DomainMetrics memorization_probe(const Model& pretrained, const Dataset& data, const RunConfig& cfg, std::size_t n,
                                 int tune_epochs);

MetricsReport make_report(const RunConfig& cfg, std::vector<DomainMetrics> rows);

}  // namespace xdrec
