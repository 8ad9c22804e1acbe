#include "helpers.hpp"

#include "xdrec/eval.hpp"
#include "xdrec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace xdrec;
using namespace testing;

namespace {

// Sort-and-score oracle: stable sort by descending score keeps lower ids first.
std::pair<double, double> brute_force(const Matrix& scores, const std::vector<int>& targets, int k) {
  double recall = 0.0, ndcg = 0.0;
  for (Index z = 0; z < scores.rows(); ++z) {
    std::vector<int> ids(static_cast<std::size_t>(scores.cols()));
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return scores(z, a) > scores(z, b); });
    const int rank = static_cast<int>(std::find(ids.begin(), ids.end(), targets[static_cast<std::size_t>(z)]) - ids.begin()) + 1;
    if (rank <= k) {
      recall += 1.0;
      ndcg += 1.0 / std::log2(rank + 1.0);
    }
  }
  return {recall / static_cast<double>(scores.rows()), ndcg / static_cast<double>(scores.rows())};
}

}  // namespace

TEST_CASE("metrics equal the brute-force scorer on 1000 random instances") {
  Rng rng(61);
  for (int instance = 0; instance < 1000; ++instance) {
    const Index users = 1 + static_cast<Index>(uniform_index(rng, 8));
    const Index m = 1 + static_cast<Index>(uniform_index(rng, 40));
    const bool ties = instance % 2 == 0;
    Matrix scores(users, m);
    for (Index i = 0; i < scores.size(); ++i)
      scores.data()[i] = ties ? static_cast<double>(uniform_index(rng, 4)) : uniform(rng, -1.0, 1.0);
    std::vector<int> targets;
    for (Index z = 0; z < users; ++z) targets.push_back(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(m))));
    // Identity items make the score matrix equal to the queries exactly.
    const DomainMetrics got = score_queries(scores, targets, Matrix::Identity(m, m), {1, 5, 10, 20}, false);
    for (int k : {1, 5, 10, 20}) {
      const auto [recall, ndcg] = brute_force(scores, targets, k);
      CHECK(got.at("recall", k) == recall);
      CHECK(got.at("ndcg", k) == ndcg);
    }
  }
}

TEST_CASE("single-relevant metric spot values") {
  RankingResult r;
  r.rank = 1;
  CHECK(ndcg_at_k(r, 10) == 1.0);
  CHECK(recall_at_k(r, 10) == 1.0);
  r.rank = 3;
  CHECK(ndcg_at_k(r, 10) == 0.5);
  r.rank = 11;
  CHECK(recall_at_k(r, 10) == 0.0);
  CHECK(ndcg_at_k(r, 10) == 0.0);
  r.rank = 10;
  CHECK(recall_at_k(r, 10) == 1.0);
  r.rank.reset();
  CHECK(recall_at_k(r, 10) == 0.0);

  // aggregate over ranks 1 and 11
  Matrix scores(2, 11);
  scores.row(0).setLinSpaced(11, 11, 1);
  scores.row(1).setLinSpaced(11, 11, 1);
  const DomainMetrics agg = score_queries(scores, {0, 10}, Matrix::Identity(11, 11), {10}, false);
  CHECK(agg.at("recall", 10) == 0.5);
}

TEST_CASE("ranking breaks ties by lower id and ignores catalog row order") {
  Eigen::VectorXd s(4);
  s << 0.5, 0.9, 0.5, 0.1;
  const RankingResult r = rank_scores(s, 2);
  CHECK(r.order == std::vector<int>{1, 0, 2, 3});
  CHECK(r.rank == 3);
  CHECK(rank_of(s, 2) == 3);

  Rng rng(62);
  for (int trial = 0; trial < 50; ++trial) {
    const Index m = 2 + static_cast<Index>(uniform_index(rng, 20));
    Eigen::VectorXd scores(m);
    for (Index i = 0; i < m; ++i) scores(i) = static_cast<double>(uniform_index(rng, 3));
    std::vector<int> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::VectorXd permuted(m);
    for (Index i = 0; i < m; ++i) permuted(i) = scores(perm[static_cast<std::size_t>(i)]);
    const RankingResult a = rank_scores(scores);
    const RankingResult b = rank_scores(permuted, std::nullopt, perm);
    CHECK(a.order == b.order);
    std::vector<int> sorted = a.order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), 0);
    CHECK(sorted == all);
    const int target = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(m)));
    CHECK(rank_scores(scores, target).rank == rank_of(scores, target));
  }
}

TEST_CASE("one-hot catalog ranks the matching item first") {
  const Matrix items = Matrix::Identity(5, 5);
  for (int k = 0; k < 5; ++k) {
    const RankingResult r = rank_items(items.row(k), items, false, k);
    CHECK(r.order.front() == k);
    CHECK(r.rank == 1);
  }
}

TEST_CASE("metrics report schema and checks") {
  DomainMetrics dm;
  dm.domain = "d";
  dm.variant = "FULL";
  dm.users = 4;
  dm.values = {{"recall@10", 0.5}, {"recall@20", 0.75}, {"ndcg@10", 0.25}, {"ndcg@20", 0.3}};
  MetricsReport r;
  r.rows = {dm};
  r.seed = 3;
  r.config_digest = "abc";
  CHECK_NOTHROW(r.check());
  const Json j = Json::parse(r.to_json());
  CHECK(j["seed"] == 3);
  CHECK(j["results"][0]["metrics"]["recall@20"] == 0.75);
  const std::string csv = r.to_csv();
  CHECK(csv.starts_with("seed,domain,variant,metric,value,users\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(r.to_csv(false).find("seed,") == std::string::npos);

  r.rows[0].values["recall@20"] = 0.4;
  CHECK_THROWS_AS(r.check(), NumericError);
  r.rows[0].values["recall@20"] = 1.5;
  CHECK_THROWS_AS(r.check(), NumericError);
}

TEST_CASE("variant tags round-trip") {
  for (Variant v : all_variants()) CHECK(variant_from_string(to_string(v)) == v);
  CHECK(all_variants().size() == 7);
  CHECK_THROWS_AS(variant_from_string("XX"), ConfigError);
  CHECK_FALSE(runs_pretrain(Variant::PR));
  CHECK_FALSE(runs_tune(Variant::PT));
  CHECK(runs_pretrain(Variant::SSP));
}

TEST_CASE("evaluation covers every test user and reports all metrics") {
  const RunConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  const Model model = Model::init(cfg.model_config(data.vocab.size()), cfg.seed);
  const int d = data.target_domain();
  const DomainMetrics m = evaluate(model, data, d, {10, 20});
  CHECK(m.users == data.split.in_domain(d).size());
  CHECK(m.values.size() == 4);
  for (const auto& [key, value] : m.values) CHECK((value >= 0.0 && value <= 1.0));
  CHECK(m.at("recall", 20) >= m.at("recall", 10));

  // Brute force through the public pieces.
  const Matrix items = item_embeddings(model, data, d);
  double hits = 0;
  for (const UserSplit* u : data.split.in_domain(d)) {
    std::vector<int> history = u->train;
    history.push_back(u->validation);
    const RowVector q = enhance(encode_sequence(data.input_for(d, history), model.encoder), model.prompt);
    hits += recall_at_k(rank_items(q, items, true, u->test), 10);
  }
  CHECK(m.at("recall", 10) == doctest::Approx(hits / static_cast<double>(m.users)).epsilon(1e-12));

  const DomainMetrics pop = evaluate_popularity(data, d, {10, 20});
  CHECK(pop.variant == "POP");
  CHECK(pop.users == m.users);
  CHECK_THROWS_AS(evaluate_examples(model, data, {}, {10}), DataError);
}
