#include "xdrec/pipeline.hpp"

#include <numeric>

namespace xdrec {

Corpus build_corpus(const RunConfig& cfg, Warnings* warnings) {
  Corpus c;
  switch (cfg.data.source) {
    case DataConfig::Source::Synth: {
      SynthConfig s = cfg.data.synth;
      if (!cfg.data.synth_seed_set) s.seed = substream_seed(cfg.seed, "data.synth");
      c = generate_synthetic(s);
      break;
    }
    case DataConfig::Source::Events: {
      std::vector<std::filesystem::path> paths(cfg.data.events.begin(), cfg.data.events.end());
      c = ingest_events(paths, cfg.data.target_domain, warnings);
      break;
    }
    case DataConfig::Source::Corpus: c = load_corpus(cfg.data.corpus_dir); break;
  }
  if (!cfg.data.target_domain.empty()) {
    const int t = c.domain_id(cfg.data.target_domain);
    if (t < 0) throw DataError("target domain '" + cfg.data.target_domain + "' absent from the corpus");
    c.target_domain = t;
  }
  if (cfg.data.enforce_non_overlap) {
    auto [clean, report] = enforce_non_overlap(c);
    if (warnings && !report.removed_keys.empty())
      warnings->push_back(std::to_string(report.removed_keys.size()) + " user keys shared between domains removed");
    c = std::move(clean);
  }
  c = filter_corpus(c, cfg.data.filter);
  if (c.empty()) throw DataError("no sequences survive filtering");
  return c;
}

Dataset build_dataset(const RunConfig& cfg, Warnings* warnings) {
  return make_dataset(build_corpus(cfg, warnings), cfg.text.vocab_min_count, cfg.text.limits, warnings);
}

VariantRun run_variant(const Dataset& data, const RunConfig& cfg, Variant v) {
  RunConfig vc = cfg;
  vc.variant = v;
  VariantRun run;
  run.variant = v;
  Model model = Model::init(vc.model_config(data.vocab.size()), vc.seed);
  if (runs_pretrain(v)) {
    TrainResult r = run_pretrain(std::move(model), data, vc.stage(Stage::Pretrain));
    run.telemetry = std::move(r.telemetry);
    model = std::move(r.model);
    run.pretrained = model;
  }
  if (runs_tune(v)) {
    TrainResult r = run_prompt_tune(std::move(model), data, vc.stage(Stage::Tune));
    run.telemetry.insert(run.telemetry.end(), r.telemetry.begin(), r.telemetry.end());
    model = std::move(r.model);
  }
  run.metrics = evaluate(model, data, data.target_domain(), vc.ks, vc.normalize_similarity);
  run.metrics.variant = to_string(v);
  run.model = std::move(model);
  return run;
}

DomainMetrics memorization_probe(const Model& pretrained, const Dataset& data, const RunConfig& cfg, std::size_t n,
                                 int tune_epochs) {
  // One example per sequence so the subset holds n distinct histories.
  auto pool = training_examples(data.split, data.target_domain(), ExampleMode::Last);
  Rng rng = make_rng(cfg.seed, "probe.subset");
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[uniform_index(rng, i)]);
  pool.resize(std::min(n, pool.size()));
  TrainStageConfig tune = cfg.stage(Stage::Tune);
  tune.epochs = tune_epochs;
  TrainResult r = run_prompt_tune(pretrained, data, tune, &pool);
  DomainMetrics out = evaluate_examples(r.model, data, pool, cfg.ks, cfg.normalize_similarity);
  out.variant = "probe";
  return out;
}

MetricsReport make_report(const RunConfig& cfg, std::vector<DomainMetrics> rows) {
  MetricsReport r;
  r.rows = std::move(rows);
  r.config_digest = cfg.digest();
  r.seed = cfg.seed;
  r.check();
  return r;
}

}  // namespace xdrec
