#pragma once

#include "xdrec/corpus.hpp"
#include "xdrec/model.hpp"
#include "xdrec/optim.hpp"
#include "xdrec/text.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace xdrec {

/// Everything the model sees of a corpus: the split, the vocabulary and the
/// tokenized catalog of every domain.
struct Dataset {
  Corpus corpus;
  CorpusSplit split;
  Vocab vocab;
  std::vector<std::vector<TokenizedItem>> catalog;  // [domain][item_id]
  InputLimits limits;

  int target_domain() const { return corpus.target_domain; }
  ModelInput input_for(int domain, std::span<const int> history) const;
};

Dataset make_dataset(Corpus corpus, int vocab_min_count, const InputLimits& limits, Warnings* warnings = nullptr);

struct TrainingExample {
  int domain = 0;
  std::vector<int> history;  // oldest first
  int target = 0;
};

enum class ExampleMode {
  Last,         // the train prefix minus its last item predicts that item
  AllPrefixes,  // every proper prefix of the train prefix predicts its successor
};

/// Training pairs built from train prefixes only. `domain` < 0 means all domains.
std::vector<TrainingExample> training_examples(const CorpusSplit& split, int domain, ExampleMode mode);

enum class LossKind { Contrastive, Bpr };

enum class Batching {
  Mixed,       // stage-1 batches drawn across all domains
  PerDomain,   // every stage-1 batch holds sequences of a single domain
};

struct TrainStageConfig {
  Stage stage = Stage::Pretrain;
  int batch_size = 12;
  double learning_rate = 5e-5;
  double tau = 0.05;
  int epochs = 1;
  std::uint64_t seed = 1;
  bool normalize_similarity = true;
  LossKind loss = LossKind::Contrastive;
  ExampleMode examples = ExampleMode::Last;
  Batching batching = Batching::Mixed;
  bool freeze_word_embeddings = false;

  void validate() const;
};

struct EpochTelemetry {
  Stage stage = Stage::Pretrain;
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

struct TrainResult {
  Model model;
  std::vector<EpochTelemetry> telemetry;
};

// ---------------------------------------------------------------------------
// Batch objectives. Each returns the batch loss and, when `grad` is non-null,
// accumulates the exact gradient of that loss into it.

struct PretrainBatch {
  std::vector<ModelInput> sequences;
  std::vector<const TokenizedItem*> positives;
  std::vector<const TokenizedItem*> negatives;  // BPR only
};

double pretrain_batch_loss(const Model& model, const PretrainBatch& batch, const TrainStageConfig& cfg,
                           Model* grad = nullptr, Rng* dropout_rng = nullptr);

struct TuneBatch {
  std::vector<RowVector> sequences;  // encoder outputs h_S (encoder is frozen)
  std::vector<int> targets;
  std::vector<int> negatives;  // BPR only
};

/// Stage-2 objective against a fixed catalog of enhanced item vectors.
double tune_batch_loss(const Model& model, const TuneBatch& batch, const Matrix& catalog,
                       const TrainStageConfig& cfg, Model* grad = nullptr);

/// Enhanced representations of every item in `domain` (one row per item id).
Matrix item_embeddings(const Model& model, const Dataset& data, int domain);
/// Encoder-only representations h_v of every item in `domain`.
Matrix raw_item_embeddings(const Model& model, const Dataset& data, int domain);

// ---------------------------------------------------------------------------
// Stages

/// Stage 1: mixed-domain batches, in-batch negatives, everything trainable
/// (except word embeddings when cfg.freeze_word_embeddings).
TrainResult run_pretrain(Model model, const Dataset& data, const TrainStageConfig& cfg);

/// Stage 2 on the target domain: encoder, P_shared and the shared branch are
/// frozen; the catalog of enhanced item vectors is refreshed once per epoch.
/// `subset`, when given, restricts training to those examples.
TrainResult run_prompt_tune(Model model, const Dataset& data, const TrainStageConfig& cfg,
                            const std::vector<TrainingExample>* subset = nullptr);

}  // namespace xdrec
