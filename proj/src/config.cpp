#include "xdrec/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace xdrec {

namespace {

// Reads known keys from one JSON object and remembers which keys it saw, so
// everything left over can be reported as unknown.
class Reader {
 public:
  Reader(Json j, std::string path, std::vector<std::string>& problems)
      : j_(std::move(j)), path_(std::move(path)), problems_(problems) {
    if (!j_.is_object()) {
      problems_.push_back(where() + ": expected an object");
      j_ = Json::object();
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      problems_.push_back(path_ + key + ": wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader child(const char* key) {
    seen_.insert(key);
    return Reader(j_.value(key, Json::object()), path_ + key + ".", problems_);
  }

  void finish() {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) problems_.push_back(path_ + key + ": unknown key");
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_.substr(0, path_.size() - 1); }

  Json j_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

const char* loss_name(LossKind k) { return k == LossKind::Bpr ? "bpr" : "contrastive"; }
const char* examples_name(ExampleMode m) { return m == ExampleMode::AllPrefixes ? "all_prefixes" : "last"; }
const char* batching_name(Batching b) { return b == Batching::PerDomain ? "domain" : "mixed"; }
const char* init_name(EncoderInit i) { return i == EncoderInit::Uniform ? "uniform" : "glorot"; }
const char* source_name(DataConfig::Source s) {
  switch (s) {
    case DataConfig::Source::Events: return "events";
    case DataConfig::Source::Corpus: return "corpus";
    default: return "synth";
  }
}

void read_stage(Reader& r, TrainStageConfig& s, bool stage_one, std::vector<std::string>& problems,
                const std::string& path) {
  std::string loss = loss_name(s.loss), examples = examples_name(s.examples);
  r.get("epochs", s.epochs);
  r.get("batch_size", s.batch_size);
  r.get("learning_rate", s.learning_rate);
  r.get("tau", s.tau);
  r.get("loss", loss);
  r.get("examples", examples);
  if (stage_one) {
    r.get("freeze_word_embeddings", s.freeze_word_embeddings);
    std::string batching = batching_name(s.batching);
    r.get("batching", batching);
    if (batching == "mixed") s.batching = Batching::Mixed;
    else if (batching == "domain") s.batching = Batching::PerDomain;
    else problems.push_back(path + "batching: expected mixed or domain");
  }
  if (loss == "contrastive") s.loss = LossKind::Contrastive;
  else if (loss == "bpr") s.loss = LossKind::Bpr;
  else problems.push_back(path + "loss: expected contrastive or bpr");
  if (examples == "last") s.examples = ExampleMode::Last;
  else if (examples == "all_prefixes") s.examples = ExampleMode::AllPrefixes;
  else problems.push_back(path + "examples: expected last or all_prefixes");
}

Json stage_json(const TrainStageConfig& s, bool stage_one) {
  Json j{{"epochs", s.epochs},   {"batch_size", s.batch_size}, {"learning_rate", s.learning_rate},
         {"tau", s.tau},         {"loss", loss_name(s.loss)},  {"examples", examples_name(s.examples)}};
  if (stage_one) {
    j["freeze_word_embeddings"] = s.freeze_word_embeddings;
    j["batching"] = batching_name(s.batching);
  }
  return j;
}

}  // namespace

RunConfig::RunConfig() {
  pretrain.stage = Stage::Pretrain;
  pretrain.epochs = 10;
  tune.stage = Stage::Tune;
  tune.epochs = 10;
  tune.batch_size = 16;
  id_baseline.train.stage = Stage::Pretrain;
  id_baseline.train.epochs = 20;
  id_baseline.train.learning_rate = 1e-3;
}

RunConfig RunConfig::from_json(const Json& j) {
  RunConfig c;
  std::vector<std::string> problems;
  Reader root(j, "", problems);
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);

  {
    Reader d = root.child("data");
    std::string source = source_name(c.data.source);
    d.get("source", source);
    if (source == "synth") c.data.source = DataConfig::Source::Synth;
    else if (source == "events") c.data.source = DataConfig::Source::Events;
    else if (source == "corpus") c.data.source = DataConfig::Source::Corpus;
    else problems.push_back("data.source: expected synth, events or corpus");
    d.get("events", c.data.events);
    d.get("corpus_dir", c.data.corpus_dir);
    d.get("target_domain", c.data.target_domain);
    d.get("min_seq_len", c.data.filter.min_seq_len);
    d.get("min_item_freq", c.data.filter.min_item_freq);
    d.get("max_filter_sweeps", c.data.filter.max_sweeps);
    d.get("enforce_non_overlap", c.data.enforce_non_overlap);
    Reader s = d.child("synth");
    SynthConfig& sy = c.data.synth;
    s.get("num_domains", sy.num_domains);
    s.get("items_per_domain", sy.items_per_domain);
    s.get("users_per_domain", sy.users_per_domain);
    s.get("num_topics", sy.num_topics);
    s.get("shared_topic_fraction", sy.shared_topic_fraction);
    s.get("title_len_min", sy.title_len_min);
    s.get("title_len_max", sy.title_len_max);
    s.get("seq_len_min", sy.seq_len_min);
    s.get("seq_len_max", sy.seq_len_max);
    s.get("words_per_topic", sy.words_per_topic);
    s.get("preference_concentration", sy.preference_concentration);
    s.get("stop_word_prob", sy.stop_word_prob);
    c.data.synth_seed_set = s.has("seed");
    s.get("seed", sy.seed);
    s.finish();
    d.finish();
  }
  {
    Reader t = root.child("text");
    t.get("vocab_min_count", c.text.vocab_min_count);
    t.get("title_len", c.text.limits.title_len);
    t.get("max_items", c.text.limits.max_items);
    t.get("max_tokens", c.text.limits.max_tokens);
    t.finish();
  }
  {
    Reader m = root.child("model");
    m.get("d_model", c.model.encoder.d_model);
    m.get("n_layers", c.model.encoder.n_layers);
    m.get("n_heads", c.model.encoder.n_heads);
    m.get("d_ff", c.model.encoder.d_ff);
    m.get("dropout", c.model.encoder.dropout);
    std::string init = init_name(c.model.encoder.init);
    m.get("init", init);
    if (init == "glorot") c.model.encoder.init = EncoderInit::Glorot;
    else if (init == "uniform") c.model.encoder.init = EncoderInit::Uniform;
    else problems.push_back("model.init: expected glorot or uniform");
    m.get("prompt_rows", c.model.prompt.prompt_rows);
    m.get("prompt_heads", c.model.prompt.n_heads);
    m.get("fusion_hidden", c.model.prompt.fusion_hidden);
    m.finish();
  }
  std::string variant = to_string(c.variant);
  root.get("variant", variant);
  try {
    c.variant = variant_from_string(variant);
  } catch (const ConfigError& e) {
    problems.push_back(std::string("variant: ") + e.what());
  }
  std::string similarity = "cosine";
  root.get("similarity", similarity);
  if (similarity == "cosine") c.normalize_similarity = true;
  else if (similarity == "dot") c.normalize_similarity = false;
  else problems.push_back("similarity: expected cosine or dot");

  {
    Reader r = root.child("pretrain");
    read_stage(r, c.pretrain, true, problems, "pretrain.");
    r.finish();
  }
  {
    Reader r = root.child("tune");
    read_stage(r, c.tune, false, problems, "tune.");
    r.finish();
  }
  {
    Reader e = root.child("eval");
    e.get("ks", c.ks);
    e.finish();
  }
  {
    Reader a = root.child("analysis");
    a.get("max_pairs", c.analysis_max_pairs);
    a.finish();
  }
  {
    Reader b = root.child("id_baseline");
    b.get("dim", c.id_baseline.dim);
    read_stage(b, c.id_baseline.train, false, problems, "id_baseline.");
    b.finish();
  }
  root.finish();

  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "invalid config:";
    for (const auto& p : problems) msg << "\n  " << p;
    throw ConfigError(msg.str());
  }
  return c;
}

Json RunConfig::to_json() const {
  Json synth{{"num_domains", data.synth.num_domains},
             {"items_per_domain", data.synth.items_per_domain},
             {"users_per_domain", data.synth.users_per_domain},
             {"num_topics", data.synth.num_topics},
             {"shared_topic_fraction", data.synth.shared_topic_fraction},
             {"title_len_min", data.synth.title_len_min},
             {"title_len_max", data.synth.title_len_max},
             {"seq_len_min", data.synth.seq_len_min},
             {"seq_len_max", data.synth.seq_len_max},
             {"words_per_topic", data.synth.words_per_topic},
             {"preference_concentration", data.synth.preference_concentration},
             {"stop_word_prob", data.synth.stop_word_prob}};
  if (data.synth_seed_set) synth["seed"] = data.synth.seed;
  Json id_json = stage_json(id_baseline.train, false);
  id_json["dim"] = id_baseline.dim;
  return Json{
      {"seed", seed},
      {"output_dir", output_dir},
      {"data",
       {{"source", source_name(data.source)},
        {"synth", synth},
        {"events", data.events},
        {"corpus_dir", data.corpus_dir},
        {"target_domain", data.target_domain},
        {"min_seq_len", data.filter.min_seq_len},
        {"min_item_freq", data.filter.min_item_freq},
        {"max_filter_sweeps", data.filter.max_sweeps},
        {"enforce_non_overlap", data.enforce_non_overlap}}},
      {"text",
       {{"vocab_min_count", text.vocab_min_count},
        {"title_len", text.limits.title_len},
        {"max_items", text.limits.max_items},
        {"max_tokens", text.limits.max_tokens}}},
      {"model",
       {{"d_model", model.encoder.d_model},
        {"n_layers", model.encoder.n_layers},
        {"n_heads", model.encoder.n_heads},
        {"d_ff", model.encoder.d_ff},
        {"dropout", model.encoder.dropout},
        {"init", init_name(model.encoder.init)},
        {"prompt_rows", model.prompt.prompt_rows},
        {"prompt_heads", model.prompt.n_heads},
        {"fusion_hidden", model.prompt.fusion_hidden}}},
      {"variant", to_string(variant)},
      {"similarity", normalize_similarity ? "cosine" : "dot"},
      {"pretrain", stage_json(pretrain, true)},
      {"tune", stage_json(tune, false)},
      {"eval", {{"ks", ks}}},
      {"analysis", {{"max_pairs", analysis_max_pairs}}},
      {"id_baseline", id_json}};
}

std::string RunConfig::digest() const {
  // nlohmann::json objects keep keys sorted, so dump() is canonical. Where
  // results are written does not change them.
  Json j = to_json();
  j.erase("output_dir");
  return hex64(fnv1a64(j.dump()));
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  auto try_validate = [&](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      problems.push_back(where + ": " + e.what());
    }
  };
  switch (data.source) {
    case DataConfig::Source::Synth: try_validate("data.synth", [&] { data.synth.validate(); }); break;
    case DataConfig::Source::Events:
      check(!data.events.empty(), "data.events: no event files listed");
      for (const auto& p : data.events) check(std::filesystem::exists(p), "data.events: missing file " + p);
      break;
    case DataConfig::Source::Corpus:
      check(std::filesystem::is_directory(data.corpus_dir), "data.corpus_dir: missing directory " + data.corpus_dir);
      break;
  }
  check(data.filter.min_seq_len >= 3, "data.min_seq_len must be >= 3 (leave-one-out needs 3 items)");
  check(data.filter.min_item_freq >= 1, "data.min_item_freq must be >= 1");
  check(data.filter.max_sweeps >= 0, "data.max_filter_sweeps must be >= 0");
  check(text.vocab_min_count >= 1, "text.vocab_min_count must be >= 1");
  check(text.limits.title_len >= 1, "text.title_len must be >= 1");
  check(text.limits.max_items >= 1, "text.max_items must be >= 1");
  check(text.limits.max_tokens >= text.limits.title_len + 1, "text.max_tokens must exceed text.title_len");
  try_validate("model", [&] { model_config(Vocab::kNumReserved + 1).validate(); });
  try_validate("pretrain", [&] { stage(Stage::Pretrain).validate(); });
  try_validate("tune", [&] { stage(Stage::Tune).validate(); });
  try_validate("id_baseline", [&] { id_stage().validate(); });
  check(id_baseline.dim >= 0, "id_baseline.dim must be >= 0");
  check(!ks.empty(), "eval.ks must not be empty");
  for (int k : ks) check(k >= 1, "eval.ks entries must be >= 1");
  check(analysis_max_pairs >= 1, "analysis.max_pairs must be >= 1");
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "invalid config:";
    for (const auto& p : problems) msg << "\n  " << p;
    throw ConfigError(msg.str());
  }
}

ModelConfig RunConfig::model_config(int vocab_size) const {
  ModelConfig m = model;
  m.encoder.vocab_size = vocab_size;
  m.encoder.max_tokens = text.limits.max_tokens;
  m.prompt = apply_variant(m.prompt, variant);
  return m;
}

TrainStageConfig RunConfig::stage(Stage s) const {
  TrainStageConfig out = s == Stage::Pretrain ? pretrain : tune;
  out.stage = s;
  out.seed = seed;
  out.normalize_similarity = normalize_similarity;
  return out;
}

TrainStageConfig RunConfig::id_stage() const {
  TrainStageConfig out = id_baseline.train;
  out.stage = Stage::Pretrain;
  out.seed = seed;
  out.normalize_similarity = normalize_similarity;
  return out;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c = RunConfig::from_json(j);
  c.validate();
  return c;
}

Json to_json(const ModelConfig& c) {
  return Json{{"encoder",
               {{"vocab_size", c.encoder.vocab_size},
                {"d_model", c.encoder.d_model},
                {"n_layers", c.encoder.n_layers},
                {"n_heads", c.encoder.n_heads},
                {"d_ff", c.encoder.d_ff},
                {"max_tokens", c.encoder.max_tokens},
                {"dropout", c.encoder.dropout},
                {"init", init_name(c.encoder.init)}}},
              {"prompt",
               {{"prompt_rows", c.prompt.prompt_rows},
                {"n_heads", c.prompt.n_heads},
                {"fusion_hidden", c.prompt.fusion_hidden},
                {"use_shared", c.prompt.use_shared},
                {"use_specific", c.prompt.use_specific},
                {"coattention", c.prompt.coattention}}}};
}

ModelConfig model_config_from_json(const Json& j) {
  try {
    ModelConfig c;
    const Json& e = j.at("encoder");
    c.encoder.vocab_size = e.at("vocab_size").get<int>();
    c.encoder.d_model = e.at("d_model").get<int>();
    c.encoder.n_layers = e.at("n_layers").get<int>();
    c.encoder.n_heads = e.at("n_heads").get<int>();
    c.encoder.d_ff = e.at("d_ff").get<int>();
    c.encoder.max_tokens = e.at("max_tokens").get<int>();
    c.encoder.dropout = e.at("dropout").get<double>();
    c.encoder.init = e.at("init").get<std::string>() == "uniform" ? EncoderInit::Uniform : EncoderInit::Glorot;
    const Json& p = j.at("prompt");
    c.prompt.prompt_rows = p.at("prompt_rows").get<int>();
    c.prompt.n_heads = p.at("n_heads").get<int>();
    c.prompt.fusion_hidden = p.at("fusion_hidden").get<int>();
    c.prompt.use_shared = p.at("use_shared").get<bool>();
    c.prompt.use_specific = p.at("use_specific").get<bool>();
    c.prompt.coattention = p.at("coattention").get<bool>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed model config: ") + ex.what());
  }
}

}  // namespace xdrec
