#include "xdrec/gradcheck.hpp"

#include <json.hpp>

#include <algorithm>

namespace xdrec {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& t : tensors) w = std::max(w, t.rel_error);
  return w;
}

std::string GradCheckReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& t : tensors)
    rows.push_back({{"objective", t.objective}, {"tensor", t.name}, {"rel_error", t.rel_error}, {"entries", t.entries}});
  return nlohmann::json{{"pass", pass()}, {"worst", worst()}, {"tolerance", tolerance}, {"tensors", rows}}.dump(2);
}

double relative_error(const Matrix& analytic, const Matrix& numeric, double floor) {
  const double diff = (analytic - numeric).cwiseAbs().maxCoeff();
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), floor});
  return diff / scale;
}

std::vector<TensorCheck> check_tensors(Model& model, const FreezeMask& frozen, const Gradients& analytic,
                                       const std::function<double(const Model&)>& loss, double step,
                                       const std::string& objective) {
  std::vector<TensorCheck> out;
  for (auto& t : tensors(model)) {
    if (frozen.count(t.name)) continue;
    Matrix numeric(t.rows, t.cols);
    for (Index i = 0; i < t.size(); ++i) {
      const double saved = t.data[i];
      t.data[i] = saved + step;
      const double up = loss(model);
      t.data[i] = saved - step;
      const double down = loss(model);
      t.data[i] = saved;
      numeric.data()[i] = (up - down) / (2.0 * step);
    }
    auto it = analytic.find(t.name);
    const Matrix a = it != analytic.end() ? it->second : Matrix::Zero(t.rows, t.cols);
    out.push_back({objective, t.name, relative_error(a, numeric), t.size()});
  }
  return out;
}

namespace {

constexpr int kVocab = 12;

TokenizedItem random_item(Rng& rng, int id) {
  TokenizedItem it{0, id, {}};
  const int len = 1 + static_cast<int>(uniform_index(rng, 3));
  for (int i = 0; i < len; ++i)
    it.tokens.push_back(Vocab::kNumReserved + static_cast<int>(uniform_index(rng, kVocab - Vocab::kNumReserved)));
  return it;
}

}  // namespace

GradCheckReport gradient_check(const GradCheckOptions& opts) {
  ModelConfig mc;
  mc.encoder = {kVocab, 8, 1, 2, 16, 16, 0.0};
  mc.prompt = opts.prompt;
  mc.prompt.prompt_rows = 2;
  mc.prompt.n_heads = 2;
  Model model = Model::init(mc, opts.seed);
  // Small-init parameters leave the network nearly linear; wider values
  // exercise every nonlinearity.
  Rng rng = make_rng(opts.seed, "gradcheck.params");
  for (auto& t : tensors(model))
    for (Index i = 0; i < t.size(); ++i) t.data[i] = uniform(rng, -0.5, 0.5);

  constexpr int kBatch = 3;
  constexpr int kCatalog = 5;
  std::vector<TokenizedItem> catalog;
  for (int i = 0; i < kCatalog; ++i) catalog.push_back(random_item(rng, i));
  std::vector<std::vector<int>> histories{{0, 1}, {2, 3, 4}, {1, 4}};
  std::vector<int> targets{2, 0, 3};
  std::vector<int> negatives{4, 1, 0};
  const InputLimits limits{3, 5, 16};

  GradCheckReport report;
  report.tolerance = opts.tolerance;
  for (LossKind kind : opts.losses) {
    const std::string suffix = kind == LossKind::Bpr ? ".bpr" : ".contrastive";
    TrainStageConfig cfg;
    cfg.loss = kind;
    cfg.batch_size = kBatch;
    cfg.normalize_similarity = opts.normalize_similarity;

    // Stage 1: everything trainable.
    {
      cfg.stage = Stage::Pretrain;
      PretrainBatch batch;
      for (int z = 0; z < kBatch; ++z) {
        batch.sequences.push_back(assemble_input(histories[static_cast<std::size_t>(z)], catalog, limits));
        batch.positives.push_back(&catalog[static_cast<std::size_t>(targets[static_cast<std::size_t>(z)])]);
        batch.negatives.push_back(&catalog[static_cast<std::size_t>(negatives[static_cast<std::size_t>(z)])]);
      }
      Model grad = Model::zeros(mc);
      pretrain_batch_loss(model, batch, cfg, &grad);
      const FreezeMask frozen = freeze_mask_for_stage(model, Stage::Pretrain);
      auto rows = check_tensors(
          model, frozen, collect_gradients(grad, frozen),
          [&](const Model& m) { return pretrain_batch_loss(m, batch, cfg); }, opts.step, "pretrain" + suffix);
      report.tensors.insert(report.tensors.end(), rows.begin(), rows.end());
    }
    // Stage 2: frozen encoder outputs, fixed catalog of enhanced items.
    {
      cfg.stage = Stage::Tune;
      TuneBatch batch;
      Matrix raw(kCatalog, mc.encoder.d_model);
      for (int i = 0; i < kCatalog; ++i) raw.row(i) = encode_item(catalog[static_cast<std::size_t>(i)], model.encoder);
      const Matrix enhanced = enhance_rows(raw, model.prompt);
      for (int z = 0; z < kBatch; ++z) {
        batch.sequences.push_back(
            encode_sequence(assemble_input(histories[static_cast<std::size_t>(z)], catalog, limits), model.encoder));
        batch.targets.push_back(targets[static_cast<std::size_t>(z)]);
        batch.negatives.push_back(negatives[static_cast<std::size_t>(z)]);
      }
      Model grad = Model::zeros(mc);
      tune_batch_loss(model, batch, enhanced, cfg, &grad);
      const FreezeMask frozen = freeze_mask_for_stage(model, Stage::Tune);
      auto rows = check_tensors(
          model, frozen, collect_gradients(grad, frozen),
          [&](const Model& m) { return tune_batch_loss(m, batch, enhanced, cfg); }, opts.step, "tune" + suffix);
      report.tensors.insert(report.tensors.end(), rows.begin(), rows.end());
    }
  }
  return report;
}

}  // namespace xdrec
