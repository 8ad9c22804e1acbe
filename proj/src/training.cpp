#include "xdrec/training.hpp"

#include "xdrec/losses.hpp"

#include <json.hpp>

#include <cmath>
#include <numeric>

namespace xdrec {

ModelInput Dataset::input_for(int domain, std::span<const int> history) const {
  return assemble_input(history, catalog.at(static_cast<std::size_t>(domain)), limits);
}

Dataset make_dataset(Corpus corpus, int vocab_min_count, const InputLimits& limits, Warnings* warnings) {
  if (corpus.empty()) throw DataError("corpus has no sequences");
  Dataset d;
  d.split = split_leave_one_out(corpus, warnings);
  d.vocab = build_vocab(corpus, vocab_min_count);
  d.catalog = tokenize_catalog(corpus, d.vocab, limits.title_len);
  d.limits = limits;
  d.corpus = std::move(corpus);
  return d;
}

std::vector<TrainingExample> training_examples(const CorpusSplit& split, int domain, ExampleMode mode) {
  std::vector<TrainingExample> out;
  for (const auto& u : split.users) {
    if (domain >= 0 && u.domain != domain) continue;
    const std::size_t n = u.train.size();
    if (n < 2) continue;
    const std::size_t first = mode == ExampleMode::AllPrefixes ? 1 : n - 1;
    for (std::size_t k = first; k < n; ++k)
      out.push_back({u.domain, std::vector<int>(u.train.begin(), u.train.begin() + static_cast<std::ptrdiff_t>(k)),
                     u.train[k]});
  }
  return out;
}

void TrainStageConfig::validate() const {
  if (loss == LossKind::Contrastive && stage == Stage::Pretrain && batch_size < 2)
    throw ConfigError("in-batch contrastive training needs batch_size >= 2");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
}

std::string EpochTelemetry::to_json() const {
  return nlohmann::json{{"stage", to_string(stage)}, {"epoch", epoch}, {"mean_loss", mean_loss}, {"lr", lr},
                        {"seed", seed}}
      .dump();
}

// ---------------------------------------------------------------------------

double pretrain_batch_loss(const Model& model, const PretrainBatch& batch, const TrainStageConfig& cfg, Model* grad,
                           Rng* dropout_rng) {
  const std::size_t b = batch.sequences.size();
  const bool bpr = cfg.loss == LossKind::Bpr;
  const Index d = model.encoder.config.d_model;
  // Slot layout: sequences, positives, then negatives.
  const std::size_t slots = bpr ? 3 * b : 2 * b;
  std::vector<EncoderTrace> enc(grad ? slots : 0);
  std::vector<EnhanceTrace> enh(grad ? slots : 0);
  Matrix reps(static_cast<Index>(slots), d);
  for (std::size_t i = 0; i < slots; ++i) {
    EncoderTrace* et = grad ? &enc[i] : nullptr;
    EnhanceTrace* ht = grad ? &enh[i] : nullptr;
    RowVector h;
    if (i < b)
      h = encode_sequence(batch.sequences[i], model.encoder, et, dropout_rng);
    else if (i < 2 * b)
      h = encode_item(*batch.positives[i - b], model.encoder, et, dropout_rng);
    else
      h = encode_item(*batch.negatives[i - 2 * b], model.encoder, et, dropout_rng);
    reps.row(static_cast<Index>(i)) = enhance(h, model.prompt, ht);
  }

  Matrix d_reps = Matrix::Zero(reps.rows(), reps.cols());
  double loss = 0.0;
  const auto B = static_cast<Index>(b);
  if (!bpr) {
    PairLoss l = loss_pretrain(reps.topRows(B), reps.middleRows(B, B), cfg.tau, cfg.normalize_similarity);
    loss = l.loss;
    d_reps.topRows(B) = l.d_seq;
    d_reps.middleRows(B, B) = l.d_items;
  } else {
    for (Index z = 0; z < B; ++z) {
      BprLoss l = loss_bpr(reps.row(z), reps.row(B + z), reps.row(2 * B + z), cfg.normalize_similarity);
      loss += l.loss / static_cast<double>(b);
      d_reps.row(z) = l.d_seq / static_cast<double>(b);
      d_reps.row(B + z) = l.d_pos / static_cast<double>(b);
      d_reps.row(2 * B + z) = l.d_neg / static_cast<double>(b);
    }
  }
  if (!std::isfinite(loss)) throw NumericError("non-finite pretraining loss");

  if (grad) {
    // Fixed slot order keeps the accumulation deterministic.
    for (std::size_t i = 0; i < slots; ++i) {
      const RowVector d_h = enhance_backward(enh[i], model.prompt, d_reps.row(static_cast<Index>(i)), grad->prompt);
      encode_backward(enc[i], model.encoder, d_h, grad->encoder);
    }
  }
  return loss;
}

double tune_batch_loss(const Model& model, const TuneBatch& batch, const Matrix& catalog, const TrainStageConfig& cfg,
                       Model* grad) {
  const std::size_t b = batch.sequences.size();
  const bool bpr = cfg.loss == LossKind::Bpr;
  double loss = 0.0;
  for (std::size_t z = 0; z < b; ++z) {
    EnhanceTrace trace;
    const RowVector rep = enhance(batch.sequences[z], model.prompt, grad ? &trace : nullptr);
    RowVector d_rep;
    if (!bpr) {
      PairLoss l = loss_tune(rep, batch.targets[z], catalog, cfg.tau, cfg.normalize_similarity);
      loss += l.loss;
      d_rep = l.d_seq;
    } else {
      BprLoss l = loss_bpr(rep, catalog.row(batch.targets[z]), catalog.row(batch.negatives[z]), cfg.normalize_similarity);
      loss += l.loss;
      d_rep = l.d_seq;
    }
    if (grad) enhance_backward(trace, model.prompt, d_rep / static_cast<double>(b), grad->prompt);
  }
  loss /= static_cast<double>(b);
  if (!std::isfinite(loss)) throw NumericError("non-finite prompt-tuning loss");
  return loss;
}

Matrix raw_item_embeddings(const Model& model, const Dataset& data, int domain) {
  const auto& items = data.catalog.at(static_cast<std::size_t>(domain));
  Matrix out(static_cast<Index>(items.size()), model.encoder.config.d_model);
  for (std::size_t i = 0; i < items.size(); ++i) out.row(static_cast<Index>(i)) = encode_item(items[i], model.encoder);
  return out;
}

Matrix item_embeddings(const Model& model, const Dataset& data, int domain) {
  return enhance_rows(raw_item_embeddings(model, data, domain), model.prompt);
}

// ---------------------------------------------------------------------------

namespace {

void shuffle(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
}

// Consecutive chunks of the permutation; a trailing chunk smaller than
// `min_size` is merged into the previous one.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int batch_size,
                                                   std::size_t min_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size))
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + static_cast<std::size_t>(batch_size))));
  if (out.size() > 1 && out.back().size() < min_size) {
    auto tail = std::move(out.back());
    out.pop_back();
    out.back().insert(out.back().end(), tail.begin(), tail.end());
  }
  return out;
}

int sample_negative(Rng& rng, int catalog_size, int positive) {
  int neg = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(catalog_size - 1)));
  return neg >= positive ? neg + 1 : neg;
}

void zero(Model& m) {
  for (auto& t : tensors(m)) t.map().setZero();
}

}  // namespace

TrainResult run_pretrain(Model model, const Dataset& data, const TrainStageConfig& cfg) {
  cfg.validate();
  if (cfg.stage != Stage::Pretrain) throw ConfigError("run_pretrain needs a pretrain stage config");
  const auto examples = training_examples(data.split, -1, cfg.examples);
  if (examples.size() < 2) throw DataError("pretraining needs at least two training sequences");

  std::vector<ModelInput> inputs;
  inputs.reserve(examples.size());
  for (const auto& ex : examples) inputs.push_back(data.input_for(ex.domain, ex.history));

  const FreezeMask frozen = freeze_mask_for_stage(model, Stage::Pretrain, cfg.freeze_word_embeddings);
  Rng shuffle_rng = make_rng(cfg.seed, "shuffle.pretrain");
  Rng sampling_rng = make_rng(cfg.seed, "sampling.pretrain");
  Rng dropout_rng = make_rng(cfg.seed, "dropout");
  AdamState opt;
  Model grad = Model::zeros(model.config());
  TrainResult result;

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    std::vector<std::vector<std::size_t>> epoch_batches;
    if (cfg.batching == Batching::Mixed) {
      epoch_batches = make_batches(order, cfg.batch_size, 2);
    } else {
      // Split the shuffled order by domain, batch each part, then shuffle the batches.
      for (int d = 0; d < data.corpus.num_domains(); ++d) {
        std::vector<std::size_t> part;
        for (std::size_t i : order)
          if (examples[i].domain == d) part.push_back(i);
        for (auto& b : make_batches(part, cfg.batch_size, 2)) epoch_batches.push_back(std::move(b));
      }
      for (std::size_t i = epoch_batches.size(); i > 1; --i)
        std::swap(epoch_batches[i - 1], epoch_batches[uniform_index(shuffle_rng, i)]);
    }
    double total = 0.0;
    std::size_t batches = 0;
    for (const auto& members : epoch_batches) {
      if (members.size() < 2) continue;
      PretrainBatch batch;
      for (std::size_t i : members) {
        const auto& ex = examples[i];
        const auto& cat = data.catalog[static_cast<std::size_t>(ex.domain)];
        batch.sequences.push_back(inputs[i]);
        batch.positives.push_back(&cat[static_cast<std::size_t>(ex.target)]);
        if (cfg.loss == LossKind::Bpr) {
          if (cat.size() < 2) throw DataError("BPR sampling needs at least two items per domain");
          batch.negatives.push_back(&cat[static_cast<std::size_t>(
              sample_negative(sampling_rng, static_cast<int>(cat.size()), ex.target))]);
        }
      }
      zero(grad);
      total += pretrain_batch_loss(model, batch, cfg, &grad, &dropout_rng);
      ++batches;
      adam_step(model, collect_gradients(grad, frozen), opt, cfg.learning_rate);
    }
    result.telemetry.push_back({Stage::Pretrain, epoch, batches ? total / static_cast<double>(batches) : 0.0,
                                cfg.learning_rate, cfg.seed});
  }
  result.model = std::move(model);
  return result;
}

TrainResult run_prompt_tune(Model model, const Dataset& data, const TrainStageConfig& cfg,
                            const std::vector<TrainingExample>* subset) {
  cfg.validate();
  if (cfg.stage != Stage::Tune) throw ConfigError("run_prompt_tune needs a tune stage config");
  const int target = data.target_domain();
  if (target < 0 || target >= data.corpus.num_domains()) throw DataError("target domain absent from the corpus");
  const auto examples = subset ? *subset : training_examples(data.split, target, cfg.examples);
  if (examples.empty()) throw DataError("target domain has no training sequences");
  const int m = data.corpus.num_items(target);
  if (m < 2) throw DataError("target catalog needs at least two items");

  // The encoder is frozen for the whole stage, so h_S and h_v are computed once.
  std::vector<RowVector> encoded;
  encoded.reserve(examples.size());
  for (const auto& ex : examples) {
    if (ex.domain != target) throw DataError("prompt-tuning examples must come from the target domain");
    encoded.push_back(encode_sequence(data.input_for(ex.domain, ex.history), model.encoder));
  }
  const Matrix raw_items = raw_item_embeddings(model, data, target);

  const FreezeMask frozen = freeze_mask_for_stage(model, Stage::Tune);
  Rng shuffle_rng = make_rng(cfg.seed, "shuffle.tune");
  Rng sampling_rng = make_rng(cfg.seed, "sampling.tune");
  AdamState opt;
  Model grad = Model::zeros(model.config());
  TrainResult result;

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Matrix catalog = enhance_rows(raw_items, model.prompt);
    shuffle(order, shuffle_rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (const auto& members : make_batches(order, cfg.batch_size, 1)) {
      TuneBatch batch;
      for (std::size_t i : members) {
        batch.sequences.push_back(encoded[i]);
        batch.targets.push_back(examples[i].target);
        if (cfg.loss == LossKind::Bpr) batch.negatives.push_back(sample_negative(sampling_rng, m, examples[i].target));
      }
      zero(grad);
      total += tune_batch_loss(model, batch, catalog, cfg, &grad);
      ++batches;
      adam_step(model, collect_gradients(grad, frozen), opt, cfg.learning_rate);
    }
    result.telemetry.push_back({Stage::Tune, epoch, batches ? total / static_cast<double>(batches) : 0.0,
                                cfg.learning_rate, cfg.seed});
  }
  result.model = std::move(model);
  return result;
}

}  // namespace xdrec
