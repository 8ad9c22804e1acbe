#pragma once

#include "xdrec/corpus.hpp"
#include "xdrec/eval.hpp"
#include "xdrec/model.hpp"
#include "xdrec/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace xdrec {

using Json = nlohmann::json;

struct DataConfig {
  enum class Source { Synth, Events, Corpus };
  Source source = Source::Synth;
  SynthConfig synth;
  bool synth_seed_set = false;  // otherwise the generator uses the root seed
  std::vector<std::string> events;
  std::string corpus_dir;
  std::string target_domain;  // empty: last domain
  FilterOptions filter;
  bool enforce_non_overlap = true;
};

struct TextConfig {
  int vocab_min_count = 1;
  InputLimits limits;
};

struct IdBaselineConfig {
  int dim = 0;  // 0 means the encoder width
  TrainStageConfig train;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  DataConfig data;
  TextConfig text;
  ModelConfig model;  // encoder.vocab_size is filled in from the vocabulary
  Variant variant = Variant::FULL;
  bool normalize_similarity = true;
  TrainStageConfig pretrain;
  TrainStageConfig tune;
  std::vector<int> ks{10, 20};
  int analysis_max_pairs = 2000;
  IdBaselineConfig id_baseline;

  RunConfig();

  /// Parses a config document. Unknown keys anywhere are collected and
  /// reported together in one ConfigError.
  static RunConfig from_json(const Json& j);
  Json to_json() const;
  /// Digest of the canonical serialization without output_dir; independent
  /// of key order.
  std::string digest() const;
  /// Range checks and path existence.
  void validate() const;

  /// Copies of the model / stage settings with the root seed and the
  /// similarity mode applied.
  ModelConfig model_config(int vocab_size) const;
  TrainStageConfig stage(Stage s) const;
  TrainStageConfig id_stage() const;
};

RunConfig load_config(const std::filesystem::path& path);

Json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const Json& j);

}  // namespace xdrec
