#include "xdrec/baseline.hpp"

#include "xdrec/losses.hpp"

#include <numeric>

namespace xdrec {

IdBaseline IdBaseline::init(const Corpus& c, int dim, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("id baseline dimension must be >= 1");
  IdBaseline b;
  Rng rng = make_rng(seed, "init.id_baseline");
  for (int d = 0; d < c.num_domains(); ++d) {
    Matrix t(c.num_items(d), dim);
    for (Index i = 0; i < t.rows(); ++i)
      for (Index j = 0; j < t.cols(); ++j) t(i, j) = uniform(rng, -0.1, 0.1);
    b.tables.push_back(std::move(t));
  }
  return b;
}

RowVector IdBaseline::sequence(int domain, std::span<const int> history) const {
  if (history.empty()) throw DataError("id baseline: empty history");
  const Matrix& t = tables.at(static_cast<std::size_t>(domain));
  RowVector s = RowVector::Zero(t.cols());
  for (int item : history) s += t.row(item);
  return s / static_cast<double>(history.size());
}

std::vector<TensorRef> IdBaseline::tensors() {
  std::vector<TensorRef> out;
  for (std::size_t d = 0; d < tables.size(); ++d)
    out.push_back({"id.domain" + std::to_string(d) + ".items", tables[d].data(), tables[d].rows(), tables[d].cols()});
  return out;
}

std::vector<TensorRef> IdBaseline::tensors() const { return const_cast<IdBaseline*>(this)->tensors(); }

namespace {

// Loss and gradient w.r.t. the table for one batch of a single domain.
double id_batch(const Matrix& table, const std::vector<const TrainingExample*>& batch, const std::vector<int>& negatives,
                const TrainStageConfig& cfg, Matrix& grad) {
  const auto b = static_cast<Index>(batch.size());
  const Index dim = table.cols();
  Matrix seqs(b, dim), pos(b, dim);
  for (Index z = 0; z < b; ++z) {
    const auto& ex = *batch[static_cast<std::size_t>(z)];
    RowVector s = RowVector::Zero(dim);
    for (int item : ex.history) s += table.row(item);
    seqs.row(z) = s / static_cast<double>(ex.history.size());
    pos.row(z) = table.row(ex.target);
  }
  Matrix d_seq(b, dim), d_pos(b, dim), d_neg(b, dim);
  double loss = 0.0;
  if (cfg.loss == LossKind::Contrastive) {
    PairLoss l = loss_pretrain(seqs, pos, cfg.tau, cfg.normalize_similarity);
    loss = l.loss;
    d_seq = l.d_seq;
    d_pos = l.d_items;
    d_neg.setZero();
  } else {
    for (Index z = 0; z < b; ++z) {
      BprLoss l = loss_bpr(seqs.row(z), pos.row(z), table.row(negatives[static_cast<std::size_t>(z)]),
                           cfg.normalize_similarity);
      loss += l.loss / static_cast<double>(b);
      d_seq.row(z) = l.d_seq / static_cast<double>(b);
      d_pos.row(z) = l.d_pos / static_cast<double>(b);
      d_neg.row(z) = l.d_neg / static_cast<double>(b);
    }
  }
  grad.setZero();
  for (Index z = 0; z < b; ++z) {
    const auto& ex = *batch[static_cast<std::size_t>(z)];
    for (int item : ex.history) grad.row(item) += d_seq.row(z) / static_cast<double>(ex.history.size());
    grad.row(ex.target) += d_pos.row(z);
    if (cfg.loss == LossKind::Bpr) grad.row(negatives[static_cast<std::size_t>(z)]) += d_neg.row(z);
  }
  if (!std::isfinite(loss)) throw NumericError("non-finite id baseline loss");
  return loss;
}

}  // namespace

IdTrainResult train_id_baseline(const Dataset& data, int dim, const TrainStageConfig& cfg) {
  cfg.validate();
  IdTrainResult result{IdBaseline::init(data.corpus, dim, cfg.seed), {}};
  for (int d = 0; d < data.corpus.num_domains(); ++d) {
    const auto examples = training_examples(data.split, d, cfg.examples);
    if (examples.size() < 2) continue;
    const std::string tag = "id.domain" + std::to_string(d);
    Rng shuffle_rng = make_rng(cfg.seed, "shuffle." + tag);
    Rng sampling_rng = make_rng(cfg.seed, "sampling." + tag);
    Matrix& table = result.model.tables[static_cast<std::size_t>(d)];
    const int m = static_cast<int>(table.rows());
    TensorRef ref{"table", table.data(), table.rows(), table.cols()};
    AdamState opt;
    Matrix grad(table.rows(), table.cols());
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
      double total = 0.0;
      std::size_t batches = 0;
      const auto bs = static_cast<std::size_t>(cfg.batch_size);
      for (std::size_t start = 0, end = 0; start < order.size(); start = end) {
        end = std::min(order.size(), start + bs);
        // Fold a trailing singleton into this batch; in-batch negatives need two.
        if (order.size() - end == 1) end = order.size();
        std::vector<const TrainingExample*> batch;
        std::vector<int> negatives;
        for (std::size_t j = start; j < end; ++j) {
          const auto& ex = examples[order[j]];
          batch.push_back(&ex);
          if (cfg.loss == LossKind::Bpr) {
            int neg = static_cast<int>(uniform_index(sampling_rng, static_cast<std::size_t>(m - 1)));
            negatives.push_back(neg >= ex.target ? neg + 1 : neg);
          }
        }
        if (batch.size() < 2 && cfg.loss == LossKind::Contrastive) continue;
        total += id_batch(table, batch, negatives, cfg, grad);
        ++batches;
        adam_step({ref}, Gradients{{"table", grad}}, opt, cfg.learning_rate);
      }
      result.telemetry.push_back({Stage::Pretrain, epoch, batches ? total / static_cast<double>(batches) : 0.0,
                                  cfg.learning_rate, cfg.seed});
    }
  }
  return result;
}

DomainMetrics evaluate_id_baseline(const IdBaseline& model, const Dataset& data, int domain,
                                   const std::vector<int>& ks, bool normalize) {
  const auto users = data.split.in_domain(domain);
  if (users.empty()) throw DataError("empty test set");
  Matrix queries(static_cast<Index>(users.size()), model.dim());
  std::vector<int> targets;
  for (std::size_t z = 0; z < users.size(); ++z) {
    std::vector<int> history = users[z]->train;
    history.push_back(users[z]->validation);
    queries.row(static_cast<Index>(z)) = model.sequence(domain, history);
    targets.push_back(users[z]->test);
  }
  DomainMetrics out = score_queries(queries, targets, model.tables.at(static_cast<std::size_t>(domain)), ks, normalize);
  out.domain = data.corpus.domains.at(static_cast<std::size_t>(domain)).name;
  out.variant = "ID";
  return out;
}

}  // namespace xdrec
