#include "xdrec/eval.hpp"

#include "xdrec/losses.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace xdrec {

namespace {

int id_of(std::span<const int> ids, Index row) {
  return ids.empty() ? static_cast<int>(row) : ids[static_cast<std::size_t>(row)];
}

std::string metric_key(const char* name, int k) { return std::string(name) + "@" + std::to_string(k); }

}  // namespace

const char* to_string(Variant v) {
  switch (v) {
    case Variant::PR: return "PR";
    case Variant::PT: return "PT";
    case Variant::CA: return "CA";
    case Variant::SH: return "SH";
    case Variant::SP: return "SP";
    case Variant::SSP: return "SSP";
    case Variant::FULL: return "FULL";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : all_variants())
    if (s == to_string(v)) return v;
  throw ConfigError("unknown variant '" + s + "' (expected PR, PT, CA, SH, SP, SSP or FULL)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::PR, Variant::PT, Variant::CA, Variant::SH,
                                      Variant::SP, Variant::SSP, Variant::FULL};
  return v;
}

PromptConfig apply_variant(PromptConfig base, Variant v) {
  switch (v) {
    case Variant::CA: base.coattention = false; break;
    case Variant::SH: base.use_shared = false; break;
    case Variant::SP: base.use_specific = false; break;
    case Variant::SSP: base.use_shared = base.use_specific = false; break;
    default: break;
  }
  return base;
}

RankingResult rank_scores(const Eigen::VectorXd& scores, std::optional<int> target, std::span<const int> ids) {
  const Index m = scores.size();
  if (m < 1) throw std::invalid_argument("rank_scores: empty catalog");
  if (!ids.empty() && static_cast<Index>(ids.size()) != m) throw std::invalid_argument("rank_scores: ids size mismatch");
  std::vector<Index> rows(static_cast<std::size_t>(m));
  std::iota(rows.begin(), rows.end(), Index{0});
  std::sort(rows.begin(), rows.end(), [&](Index a, Index b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return id_of(ids, a) < id_of(ids, b);
  });
  RankingResult r;
  r.order.reserve(rows.size());
  for (Index row : rows) r.order.push_back(id_of(ids, row));
  if (target) {
    auto it = std::find(r.order.begin(), r.order.end(), *target);
    if (it != r.order.end()) r.rank = static_cast<int>(it - r.order.begin()) + 1;
  }
  return r;
}

RankingResult rank_items(const RowVector& query, const Matrix& items, bool normalize, std::optional<int> target,
                         std::span<const int> ids) {
  const Eigen::VectorXd scores = similarity_matrix(items, query, normalize).col(0);
  return rank_scores(scores, target, ids);
}

double recall_at_k(const RankingResult& r, int k) { return r.rank && *r.rank <= k ? 1.0 : 0.0; }

double ndcg_at_k(const RankingResult& r, int k) {
  return r.rank && *r.rank <= k ? 1.0 / std::log2(static_cast<double>(*r.rank) + 1.0) : 0.0;
}

int rank_of(const Eigen::VectorXd& scores, int target) {
  const double s = scores(target);
  int better = 0;
  for (Index i = 0; i < scores.size(); ++i)
    if (scores(i) > s || (scores(i) == s && i < target)) ++better;
  return better + 1;
}

// ---------------------------------------------------------------------------

std::string MetricsReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"domain", r.domain}, {"variant", r.variant}, {"users", r.users}, {"metrics", r.values}});
  return nlohmann::json{{"config_digest", config_digest}, {"seed", seed}, {"results", rows_json}}.dump(2);
}

std::string MetricsReport::to_csv(bool header) const {
  std::ostringstream out;
  out.precision(17);
  if (header) out << "seed,domain,variant,metric,value,users\n";
  for (const auto& r : rows)
    for (const auto& [metric, value] : r.values)
      out << seed << ',' << r.domain << ',' << r.variant << ',' << metric << ',' << value << ',' << r.users << '\n';
  return out.str();
}

void MetricsReport::check() const {
  for (const auto& r : rows) {
    for (const auto& [metric, value] : r.values)
      if (!(value >= 0.0 && value <= 1.0)) throw NumericError("metric " + metric + " out of [0, 1]");
    // Keys of one family sort by name, not by K, so compare numerically.
    for (const char* family : {"recall", "ndcg"}) {
      std::vector<std::pair<int, double>> byk;
      for (const auto& [metric, value] : r.values)
        if (metric.rfind(std::string(family) + "@", 0) == 0)
          byk.emplace_back(std::stoi(metric.substr(std::string(family).size() + 1)), value);
      std::sort(byk.begin(), byk.end());
      for (std::size_t i = 1; i < byk.size(); ++i)
        if (byk[i].second < byk[i - 1].second) throw NumericError(std::string(family) + " decreases with K");
    }
  }
}

DomainMetrics score_queries(const Matrix& queries, const std::vector<int>& targets, const Matrix& items,
                            const std::vector<int>& ks, bool normalize) {
  if (queries.rows() == 0) throw DataError("empty test set");
  const Matrix scores = similarity_matrix(queries, items, normalize);
  DomainMetrics out;
  out.users = static_cast<std::size_t>(queries.rows());
  std::map<std::string, double> sums;
  for (int k : ks) sums[metric_key("recall", k)] = sums[metric_key("ndcg", k)] = 0.0;
  for (Index z = 0; z < queries.rows(); ++z) {
    RankingResult r;
    r.rank = rank_of(scores.row(z).transpose(), targets[static_cast<std::size_t>(z)]);
    for (int k : ks) {
      sums[metric_key("recall", k)] += recall_at_k(r, k);
      sums[metric_key("ndcg", k)] += ndcg_at_k(r, k);
    }
  }
  for (auto& [key, total] : sums) out.values[key] = total / static_cast<double>(queries.rows());
  return out;
}

DomainMetrics evaluate_examples(const Model& model, const Dataset& data, const std::vector<TrainingExample>& examples,
                                const std::vector<int>& ks, bool normalize) {
  if (examples.empty()) throw DataError("empty test set");
  const int domain = examples.front().domain;
  Matrix queries(static_cast<Index>(examples.size()), model.encoder.config.d_model);
  std::vector<int> targets;
  for (std::size_t z = 0; z < examples.size(); ++z) {
    if (examples[z].domain != domain) throw DataError("evaluation examples span several domains");
    const RowVector h = encode_sequence(data.input_for(domain, examples[z].history), model.encoder);
    queries.row(static_cast<Index>(z)) = enhance(h, model.prompt);
    targets.push_back(examples[z].target);
  }
  DomainMetrics out = score_queries(queries, targets, item_embeddings(model, data, domain), ks, normalize);
  out.domain = data.corpus.domains.at(static_cast<std::size_t>(domain)).name;
  return out;
}

namespace {

std::vector<TrainingExample> test_examples(const Dataset& data, int domain) {
  std::vector<TrainingExample> out;
  for (const UserSplit* u : data.split.in_domain(domain)) {
    TrainingExample ex{domain, u->train, u->test};
    ex.history.push_back(u->validation);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

DomainMetrics evaluate(const Model& model, const Dataset& data, int domain, const std::vector<int>& ks,
                       bool normalize) {
  return evaluate_examples(model, data, test_examples(data, domain), ks, normalize);
}

DomainMetrics evaluate_popularity(const Dataset& data, int domain, const std::vector<int>& ks) {
  const auto examples = test_examples(data, domain);
  if (examples.empty()) throw DataError("empty test set");
  Matrix counts = Matrix::Zero(1, data.corpus.num_items(domain));
  for (const UserSplit* u : data.split.in_domain(domain))
    for (int item : u->train) counts(0, item) += 1.0;
  // Same popularity vector for every user; unnormalized dot with a unit query.
  Matrix queries = Matrix::Ones(static_cast<Index>(examples.size()), 1);
  std::vector<int> targets;
  for (const auto& ex : examples) targets.push_back(ex.target);
  DomainMetrics out = score_queries(queries, targets, counts.transpose(), ks, false);
  out.domain = data.corpus.domains.at(static_cast<std::size_t>(domain)).name;
  out.variant = "POP";
  return out;
}

}  // namespace xdrec
