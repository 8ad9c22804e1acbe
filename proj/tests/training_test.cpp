#include "helpers.hpp"

#include "xdrec/pipeline.hpp"

#include <numeric>

using namespace xdrec;
using namespace testing;

TEST_CASE("training examples come from train prefixes only") {
  CorpusSplit split;
  split.users = {{0, 0, {5, 6, 7}, 8, 9}, {1, 0, {1, 2}, 3, 4}};
  const auto last = training_examples(split, -1, ExampleMode::Last);
  REQUIRE(last.size() == 2);
  CHECK(last[0].history == std::vector<int>{5, 6});
  CHECK(last[0].target == 7);
  const auto all = training_examples(split, 0, ExampleMode::AllPrefixes);
  REQUIRE(all.size() == 2);
  CHECK(all[0].history == std::vector<int>{5});
  CHECK(all[0].target == 6);
  CHECK(all[1].history == std::vector<int>{5, 6});
  for (const auto& ex : training_examples(split, -1, ExampleMode::AllPrefixes)) {
    CHECK(ex.target != 8);
    CHECK(ex.target != 9);
  }
}

TEST_CASE("stage settings are validated") {
  TrainStageConfig c;
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainStageConfig{};
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainStageConfig{};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("pretraining lowers the loss on a small fixture") {
  RunConfig cfg = tiny_config();
  cfg.data.synth.users_per_domain = 10;  // about 20 sequences
  cfg.pretrain.epochs = 8;
  cfg.pretrain.batch_size = 4;
  cfg.pretrain.learning_rate = 3e-3;
  const Dataset data = build_dataset(cfg);
  const TrainResult r = run_pretrain(Model::init(cfg.model_config(data.vocab.size()), cfg.seed), data,
                                     cfg.stage(Stage::Pretrain));
  REQUIRE(r.telemetry.size() == 8);
  CHECK(r.telemetry.back().mean_loss < r.telemetry.front().mean_loss);
  for (const auto& t : r.telemetry) CHECK(t.stage == Stage::Pretrain);
  const Json line = Json::parse(r.telemetry.front().to_json());
  CHECK(line["stage"] == "pretrain");
  CHECK(line["epoch"] == 0);
}

TEST_CASE("tuning lowers the loss and a zero learning rate changes nothing") {
  RunConfig cfg = tiny_config();
  cfg.tune.epochs = 6;
  const Dataset data = build_dataset(cfg);
  const Model start = Model::init(cfg.model_config(data.vocab.size()), cfg.seed);
  const TrainResult r = run_prompt_tune(start, data, cfg.stage(Stage::Tune));
  CHECK(r.telemetry.back().mean_loss < r.telemetry.front().mean_loss);

  TrainStageConfig frozen = cfg.stage(Stage::Tune);
  frozen.learning_rate = 0.0;
  const Model same = run_prompt_tune(start, data, frozen).model;
  const int d = data.target_domain();
  const DomainMetrics a = evaluate(start, data, d, cfg.ks);
  const DomainMetrics b = evaluate(same, data, d, cfg.ks);
  CHECK(a.values == b.values);
}

TEST_CASE("BPR training runs in both stages") {
  RunConfig cfg = tiny_config();
  cfg.pretrain.loss = cfg.tune.loss = LossKind::Bpr;
  const Dataset data = build_dataset(cfg);
  const VariantRun run = run_variant(data, cfg, Variant::FULL);
  CHECK(run.telemetry.size() == 2);
  for (const auto& t : run.telemetry) CHECK(std::isfinite(t.mean_loss));
}

TEST_CASE("per-domain batching keeps each batch within one domain") {
  RunConfig cfg = tiny_config();
  cfg.pretrain.batching = Batching::PerDomain;
  const Dataset data = build_dataset(cfg);
  const TrainResult r = run_pretrain(Model::init(cfg.model_config(data.vocab.size()), cfg.seed), data,
                                     cfg.stage(Stage::Pretrain));
  CHECK(std::isfinite(r.telemetry.front().mean_loss));
}

TEST_CASE("training is deterministic for a seed") {
  const RunConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  const VariantRun a = run_variant(data, cfg, Variant::FULL);
  const VariantRun b = run_variant(data, cfg, Variant::FULL);
  const auto ta = tensors(a.model);
  const auto tb = tensors(b.model);
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(std::equal(ta[i].data, ta[i].data + ta[i].size(), tb[i].data));
  CHECK(a.metrics.values == b.metrics.values);

  RunConfig other = cfg;
  other.seed = cfg.seed + 1;
  const Dataset data2 = build_dataset(other);
  CHECK_FALSE(run_variant(data2, other, Variant::FULL).metrics.values == a.metrics.values);
}

TEST_CASE("every variant runs and uses the right stages") {
  const RunConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  for (Variant v : all_variants()) {
    CAPTURE(to_string(v));
    const VariantRun run = run_variant(data, cfg, v);
    CHECK(run.metrics.variant == to_string(v));
    CHECK(run.pretrained.has_value() == runs_pretrain(v));
    const bool has_tune = std::any_of(run.telemetry.begin(), run.telemetry.end(),
                                      [](const EpochTelemetry& t) { return t.stage == Stage::Tune; });
    CHECK(has_tune == runs_tune(v));
  }
}

TEST_CASE("item embeddings do not depend on the batch they are computed in") {
  const RunConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  const Model model = Model::init(cfg.model_config(data.vocab.size()), cfg.seed);
  const Matrix all = item_embeddings(model, data, 0);
  const auto& cat = data.catalog[0];
  for (std::size_t i = 0; i < cat.size(); i += 5)
    CHECK((all.row(static_cast<Index>(i)).array() == enhance(encode_item(cat[i], model.encoder), model.prompt).array()).all());
}

TEST_CASE("the memorization probe trains and scores the same subset") {
  RunConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  const Model start = Model::init(cfg.model_config(data.vocab.size()), cfg.seed);
  const DomainMetrics m = memorization_probe(start, data, cfg, 10, 2);
  CHECK(m.users == 10);
  CHECK(m.variant == "probe");
}
