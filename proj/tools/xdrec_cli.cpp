// Command-line front end: synth, ingest, pretrain, tune, eval, ablate, sweep,
// train-id, analyze, gradcheck.

#include "xdrec/analysis.hpp"
#include "xdrec/checkpoint.hpp"
#include "xdrec/gradcheck.hpp"
#include "xdrec/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace xdrec;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_telemetry(const fs::path& path, const std::vector<EpochTelemetry>& lines) {
  std::string text;
  for (const auto& t : lines) text += t.to_json() + "\n";
  write_text(path, text);
}

void print_warnings(const Warnings& w) {
  for (const auto& line : w) std::cerr << "warning: " << line << "\n";
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

struct Common {
  std::string config;
  std::string out;

  RunConfig load() const {
    RunConfig c = load_config(config);
    if (!out.empty()) c.output_dir = out;
    return c;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "run config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", c.out, "output directory (overrides output_dir)");
}

CheckpointInfo info_for(const RunConfig& cfg, const Dataset& data, Stage stage) {
  CheckpointInfo info;
  info.stage = to_string(stage);
  info.seed = cfg.seed;
  info.vocab_digest = data.vocab.digest();
  info.config_digest = cfg.digest();
  info.variant = to_string(cfg.variant);
  return info;
}

void write_run_files(const fs::path& dir, const RunConfig& cfg, const Dataset& data) {
  write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");
  write_text(dir / "vocab.json", data.vocab.to_json() + "\n");
}

void write_metrics(const fs::path& dir, const MetricsReport& report) {
  write_text(dir / "metrics.json", report.to_json() + "\n");
  write_text(dir / "metrics.csv", report.to_csv());
}

// ---------------------------------------------------------------------------

int cmd_synth(const Common& common) {
  RunConfig cfg = common.load();
  if (cfg.data.source != DataConfig::Source::Synth) throw ConfigError("synth needs data.source = synth");
  SynthConfig s = cfg.data.synth;
  if (!cfg.data.synth_seed_set) s.seed = substream_seed(cfg.seed, "data.synth");
  const Corpus c = generate_synthetic(s);
  const fs::path dir = fs::path(cfg.output_dir) / "corpus";
  save_corpus(dir, c, Json{{"source", "synth"}, {"seed", s.seed}}.dump());
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_ingest(const std::vector<std::string>& events, const std::string& target, const std::string& out,
               int min_seq_len, int min_item_freq) {
  Warnings warnings;
  std::vector<fs::path> paths(events.begin(), events.end());
  Corpus c = ingest_events(paths, target, &warnings);
  auto [clean, report] = enforce_non_overlap(c);
  c = filter_corpus(clean, min_seq_len, min_item_freq);
  print_warnings(warnings);
  save_corpus(out, c,
              Json{{"source", "events"},
                   {"min_seq_len", min_seq_len},
                   {"min_item_freq", min_item_freq},
                   {"overlapping_users_removed", report.removed_keys.size()}}
                  .dump());
  std::cout << out << "\n";
  return 0;
}

int cmd_pretrain(const Common& common) {
  RunConfig cfg = common.load();
  Warnings warnings;
  Dataset data = build_dataset(cfg, &warnings);
  print_warnings(warnings);
  TrainResult r = run_pretrain(Model::init(cfg.model_config(data.vocab.size()), cfg.seed), data,
                               cfg.stage(Stage::Pretrain));
  const fs::path dir = cfg.output_dir;
  write_run_files(dir, cfg, data);
  save_model(dir, r.model, info_for(cfg, data, Stage::Pretrain));
  write_telemetry(dir / "telemetry.jsonl", r.telemetry);
  std::cout << dir.string() << "\n";
  return 0;
}

LoadedModel load_checked(const std::string& ckpt, const Dataset& data) {
  LoadedModel m = load_model(ckpt);
  require_vocab(m.info, data.vocab.digest());
  return m;
}

int cmd_tune(const Common& common, const std::string& ckpt) {
  RunConfig cfg = common.load();
  Warnings warnings;
  Dataset data = build_dataset(cfg, &warnings);
  print_warnings(warnings);
  LoadedModel start = load_checked(ckpt, data);
  TrainResult r = run_prompt_tune(std::move(start.model), data, cfg.stage(Stage::Tune));
  const fs::path dir = cfg.output_dir;
  write_run_files(dir, cfg, data);
  CheckpointInfo info = info_for(cfg, data, Stage::Tune);
  info.variant = start.info.variant;
  save_model(dir, r.model, info);
  write_telemetry(dir / "telemetry.jsonl", r.telemetry);
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_eval(const Common& common, const std::string& ckpt, bool all_domains) {
  RunConfig cfg = common.load();
  Warnings warnings;
  Dataset data = build_dataset(cfg, &warnings);
  print_warnings(warnings);
  LoadedModel m = load_checked(ckpt, data);
  std::vector<DomainMetrics> rows;
  for (int d = 0; d < data.corpus.num_domains(); ++d) {
    if (!all_domains && d != data.target_domain()) continue;
    DomainMetrics dm = evaluate(m.model, data, d, cfg.ks, cfg.normalize_similarity);
    dm.variant = m.info.variant;
    rows.push_back(std::move(dm));
  }
  const MetricsReport report = make_report(cfg, std::move(rows));
  write_metrics(cfg.output_dir, report);
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_ablate(const Common& common, const std::string& variants, const std::string& seeds) {
  const RunConfig base = common.load();
  std::vector<Variant> vs;
  for (const auto& v : split_list(variants)) vs.push_back(variant_from_string(v));
  std::vector<std::uint64_t> ss;
  for (const auto& s : split_list(seeds)) ss.push_back(std::stoull(s));
  if (vs.empty() || ss.empty()) throw ConfigError("ablate needs at least one variant and one seed");

  std::string combined;
  bool header = true;
  for (std::uint64_t seed : ss) {
    RunConfig cfg = base;
    cfg.seed = seed;
    Warnings warnings;
    const Dataset data = build_dataset(cfg, &warnings);
    print_warnings(warnings);
    for (Variant v : vs) {
      RunConfig vc = cfg;
      vc.variant = v;
      VariantRun run = run_variant(data, vc, v);
      const fs::path dir = fs::path(base.output_dir) / (std::string(to_string(v)) + "_seed" + std::to_string(seed));
      vc.output_dir = dir.string();
      const MetricsReport report = make_report(vc, {run.metrics});
      write_metrics(dir, report);
      write_telemetry(dir / "telemetry.jsonl", run.telemetry);
      combined += report.to_csv(header);
      header = false;
      std::cerr << to_string(v) << " seed " << seed << " recall@" << vc.ks.front() << " "
                << run.metrics.at("recall", vc.ks.front()) << "\n";
    }
  }
  write_text(fs::path(base.output_dir) / "ablation.csv", combined);
  std::cout << (fs::path(base.output_dir) / "ablation.csv").string() << "\n";
  return 0;
}

int cmd_sweep(const Common& common, const std::string& param, const std::string& values) {
  const RunConfig base = common.load();
  const auto list = split_list(values);
  if (list.empty()) throw ConfigError("sweep needs at least one value");
  if (param != "d_W" && param != "tau") throw ConfigError("sweep parameter must be d_W or tau");
  Warnings warnings;
  const Dataset data = build_dataset(base, &warnings);
  print_warnings(warnings);

  std::ostringstream csv;
  csv.precision(17);
  csv << "param,value";
  for (int k : base.ks) csv << ",recall@" << k << ",ndcg@" << k;
  csv << "\n";
  for (const auto& value : list) {
    RunConfig cfg = base;
    try {
      if (param == "d_W") {
        cfg.model.prompt.prompt_rows = std::stoi(value);
      } else {
        cfg.pretrain.tau = cfg.tune.tau = std::stod(value);
      }
    } catch (const std::exception&) {
      throw ConfigError("sweep value '" + value + "' is not a number");
    }
    cfg.validate();
    const VariantRun run = run_variant(data, cfg, cfg.variant);
    csv << param << ',' << value;
    for (int k : base.ks) csv << ',' << run.metrics.at("recall", k) << ',' << run.metrics.at("ndcg", k);
    csv << "\n";
  }
  const fs::path path = fs::path(base.output_dir) / ("sweep_" + param + ".csv");
  write_text(path, csv.str());
  std::cout << path.string() << "\n";
  return 0;
}

int cmd_train_id(const Common& common) {
  RunConfig cfg = common.load();
  Warnings warnings;
  Dataset data = build_dataset(cfg, &warnings);
  print_warnings(warnings);
  const int dim = cfg.id_baseline.dim > 0 ? cfg.id_baseline.dim : cfg.model.encoder.d_model;
  IdTrainResult r = train_id_baseline(data, dim, cfg.id_stage());
  const fs::path dir = cfg.output_dir;
  write_run_files(dir, cfg, data);
  CheckpointInfo info = info_for(cfg, data, Stage::Pretrain);
  info.variant = "ID";
  save_id_baseline(dir, r.model, info);
  write_telemetry(dir / "telemetry.jsonl", r.telemetry);
  const MetricsReport report =
      make_report(cfg, {evaluate_id_baseline(r.model, data, data.target_domain(), cfg.ks, cfg.normalize_similarity),
                        evaluate_popularity(data, data.target_domain(), cfg.ks)});
  write_metrics(dir, report);
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_analyze(const Common& common, const std::string& text_ckpt, const std::string& id_ckpt) {
  RunConfig cfg = common.load();
  Warnings warnings;
  Dataset data = build_dataset(cfg, &warnings);
  print_warnings(warnings);
  LoadedModel text = load_checked(text_ckpt, data);
  CheckpointInfo id_info;
  IdBaseline id = load_id_baseline(id_ckpt, &id_info);
  require_vocab(id_info, data.vocab.digest());
  if (static_cast<int>(id.tables.size()) != data.corpus.num_domains())
    throw DataError("id baseline checkpoint does not cover every domain");

  EmbeddingSet text_set{"text", {}}, id_set{"id-baseline", id.tables};
  std::vector<std::string> names;
  for (int d = 0; d < data.corpus.num_domains(); ++d) {
    text_set.domains.push_back(item_embeddings(text.model, data, d));
    names.push_back(data.corpus.domains[static_cast<std::size_t>(d)].name);
  }
  const DistanceReport report = distance_analysis({text_set, id_set}, names, cfg.analysis_max_pairs, cfg.seed);
  print_warnings(report.warnings);
  write_text(fs::path(cfg.output_dir) / "distance.json", report.to_json() + "\n");
  write_text(fs::path(cfg.output_dir) / "distance.csv", report.to_csv());
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_gradcheck(const Common& common) {
  const RunConfig cfg = common.load();
  GradCheckOptions opts;
  opts.seed = cfg.seed;
  opts.prompt = apply_variant(cfg.model.prompt, cfg.variant);
  opts.normalize_similarity = cfg.normalize_similarity;
  opts.losses = {LossKind::Contrastive, LossKind::Bpr};
  const GradCheckReport report = gradient_check(opts);
  std::cout << report.to_json() << "\n";
  if (!report.pass()) throw NumericError("gradient check failed: worst relative error " + std::to_string(report.worst()));
  return 0;
}

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << Json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-based cross-domain sequential recommendation with prompt tuning"};
  app.require_subcommand(1);

  Common common;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus into <out>/corpus");
  add_common(synth, common);

  std::vector<std::string> events;
  std::string target, ingest_out;
  int min_seq_len = 5, min_item_freq = 5;
  auto* ingest = app.add_subcommand("ingest", "ingest JSON-lines events into a corpus directory");
  ingest->add_option("events", events, "event files")->required()->check(CLI::ExistingFile);
  ingest->add_option("--target", target, "target domain name (default: last domain)");
  ingest->add_option("-o,--out", ingest_out, "corpus directory")->required();
  ingest->add_option("--min-seq-len", min_seq_len, "minimum sequence length")->check(CLI::PositiveNumber);
  ingest->add_option("--min-item-freq", min_item_freq, "minimum item frequency")->check(CLI::PositiveNumber);

  auto* pretrain = app.add_subcommand("pretrain", "stage 1 on every domain");
  add_common(pretrain, common);

  std::string ckpt;
  auto* tune = app.add_subcommand("tune", "stage 2 on the target domain");
  add_common(tune, common);
  tune->add_option("--checkpoint", ckpt, "stage-1 run directory")->required()->check(CLI::ExistingDirectory);

  bool all_domains = false;
  auto* eval = app.add_subcommand("eval", "test-set metrics");
  add_common(eval, common);
  eval->add_option("--checkpoint", ckpt, "run directory")->required()->check(CLI::ExistingDirectory);
  eval->add_flag("--all-domains", all_domains, "report every domain, not only the target");

  std::string variants = "FULL,PR,PT,CA,SH,SP,SSP", seeds = "1";
  auto* ablate = app.add_subcommand("ablate", "run variants x seeds");
  add_common(ablate, common);
  ablate->add_option("--variants", variants, "comma-separated variant tags");
  ablate->add_option("--seeds", seeds, "comma-separated seeds");

  std::string param, values;
  auto* sweep = app.add_subcommand("sweep", "metrics as one hyper-parameter varies");
  add_common(sweep, common);
  sweep->add_option("--param", param, "d_W or tau")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();

  auto* train_id = app.add_subcommand("train-id", "train the item-id baseline");
  add_common(train_id, common);

  std::string text_ckpt, id_ckpt;
  auto* analyze = app.add_subcommand("analyze", "intra/inter-domain cosine distances");
  add_common(analyze, common);
  analyze->add_option("--text-checkpoint", text_ckpt, "text model run directory")->required()->check(CLI::ExistingDirectory);
  analyze->add_option("--id-checkpoint", id_ckpt, "id baseline run directory")->required()->check(CLI::ExistingDirectory);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of both stage losses");
  add_common(gradcheck, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*synth) return cmd_synth(common);
    if (*ingest) return cmd_ingest(events, target, ingest_out, min_seq_len, min_item_freq);
    if (*pretrain) return cmd_pretrain(common);
    if (*tune) return cmd_tune(common, ckpt);
    if (*eval) return cmd_eval(common, ckpt, all_domains);
    if (*ablate) return cmd_ablate(common, variants, seeds);
    if (*sweep) return cmd_sweep(common, param, values);
    if (*train_id) return cmd_train_id(common);
    if (*analyze) return cmd_analyze(common, text_ckpt, id_ckpt);
    if (*gradcheck) return cmd_gradcheck(common);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const DataError& e) {
    return fail("data", e.what(), 3);
  } catch (const NumericError& e) {
    return fail("numeric", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
