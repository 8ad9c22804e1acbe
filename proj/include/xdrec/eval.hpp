#pragma once

#include "xdrec/training.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace xdrec {

/// Ablation variants. PR skips stage 1, PT skips stage 2, CA pools prompts by
/// their mean, SH / SP / SSP drop the shared / specific / both prompt banks.
enum class Variant { PR, PT, CA, SH, SP, SSP, FULL };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);
const std::vector<Variant>& all_variants();
/// Prompt configuration of `v` derived from the full one.
PromptConfig apply_variant(PromptConfig base, Variant v);
inline bool runs_pretrain(Variant v) { return v != Variant::PR; }
inline bool runs_tune(Variant v) { return v != Variant::PT; }

struct RankingResult {
  std::vector<int> order;   // item ids, best first
  std::optional<int> rank;  // 1-based rank of the ground truth
};

/// Orders item ids by descending score; equal scores go to the lower id.
/// `ids[i]` names row i of `scores` (defaults to the row index).
RankingResult rank_scores(const Eigen::VectorXd& scores, std::optional<int> target = std::nullopt,
                          std::span<const int> ids = {});

/// Scores every catalog row against `query` with `similarity` and ranks them.
RankingResult rank_items(const RowVector& query, const Matrix& items, bool normalize,
                         std::optional<int> target = std::nullopt, std::span<const int> ids = {});

double recall_at_k(const RankingResult& r, int k);
double ndcg_at_k(const RankingResult& r, int k);

/// Rank of `target` under the same ordering as rank_scores, without sorting.
int rank_of(const Eigen::VectorXd& scores, int target);

struct DomainMetrics {
  std::string domain;
  std::string variant;
  std::size_t users = 0;
  std::map<std::string, double> values;  // "recall@10", "ndcg@10", ...

  double at(const std::string& metric, int k) const { return values.at(metric + "@" + std::to_string(k)); }
};

struct MetricsReport {
  std::vector<DomainMetrics> rows;
  std::string config_digest;
  std::uint64_t seed = 0;

  std::string to_json() const;
  /// Header plus one line per domain x variant x metric.
  std::string to_csv(bool header = true) const;
  /// Bounds and monotonicity in K; throws NumericError on violation.
  void check() const;
};

/// Metrics for rows of `queries` against `items`, where row z's ground truth is targets[z].
DomainMetrics score_queries(const Matrix& queries, const std::vector<int>& targets, const Matrix& items,
                            const std::vector<int>& ks, bool normalize);

/// Test-set evaluation of `domain`: history = train prefix + validation item,
/// target = test item, ranked against the whole enhanced domain catalog.
DomainMetrics evaluate(const Model& model, const Dataset& data, int domain, const std::vector<int>& ks,
                       bool normalize = true);

/// Same protocol on explicit (history, target) pairs, e.g. training examples.
DomainMetrics evaluate_examples(const Model& model, const Dataset& data, const std::vector<TrainingExample>& examples,
                                const std::vector<int>& ks, bool normalize = true);

/// Popularity ranking: items scored by their training-prefix frequency.
DomainMetrics evaluate_popularity(const Dataset& data, int domain, const std::vector<int>& ks);

}  // namespace xdrec
