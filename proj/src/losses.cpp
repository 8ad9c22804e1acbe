#include "xdrec/losses.hpp"

#include <cmath>

namespace xdrec {

namespace {

// Rows scaled to unit length; `norms` receives the original lengths.
Matrix normalized_rows(const Matrix& m, Eigen::VectorXd& norms) {
  norms = m.rowwise().norm();
  for (Index i = 0; i < norms.size(); ++i)
    if (!(norms(i) > 0.0)) throw NumericError("similarity: zero-norm vector under normalization");
  return m.array().colwise() / norms.array();
}

// Gradient w.r.t. the raw rows given the gradient w.r.t. the normalized rows.
Matrix through_normalization(const Matrix& unit, const Eigen::VectorXd& norms, const Matrix& d_unit) {
  const Eigen::VectorXd radial = (d_unit.array() * unit.array()).rowwise().sum();
  Matrix d = d_unit - (unit.array().colwise() * radial.array()).matrix();
  return d.array().colwise() / norms.array();
}

void check_finite(const Matrix& m) {
  if (!m.allFinite()) throw NumericError("non-finite similarity");
}

double log_sum_exp(const Eigen::Ref<const RowVector>& row) {
  const double mx = row.maxCoeff();
  return mx + std::log((row.array() - mx).exp().sum());
}

// Softmax cross-entropy over a logit matrix whose target column for row z is
// targets[z]. Returns the mean loss and fills d_logits.
double softmax_xent(const Matrix& logits, const std::vector<Index>& targets, Matrix& d_logits) {
  const Index rows = logits.rows();
  d_logits.resize(rows, logits.cols());
  double total = 0.0;
  for (Index z = 0; z < rows; ++z) {
    const double lse = log_sum_exp(logits.row(z));
    total += lse - logits(z, targets[static_cast<std::size_t>(z)]);
    d_logits.row(z) = (logits.row(z).array() - lse).exp();
    d_logits(z, targets[static_cast<std::size_t>(z)]) -= 1.0;
  }
  d_logits /= static_cast<double>(rows);
  return total / static_cast<double>(rows);
}

}  // namespace

double similarity(const RowVector& a, const RowVector& b, bool normalize) {
  if (!normalize) return a.dot(b);
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("similarity: zero-norm vector under normalization");
  return (a / na).dot(b / nb);
}

Matrix similarity_matrix(const Matrix& a, const Matrix& b, bool normalize) {
  if (!normalize) return a * b.transpose();
  Eigen::VectorXd na, nb;
  const Matrix ua = normalized_rows(a, na);
  const Matrix ub = normalized_rows(b, nb);
  return ua * ub.transpose();
}

PairLoss loss_pretrain(const Matrix& seqs, const Matrix& items, double tau, bool normalize) {
  const Index batch = seqs.rows();
  if (batch < 2 || items.rows() != batch) throw std::invalid_argument("loss_pretrain: needs B >= 2 aligned rows");
  std::vector<Index> targets(static_cast<std::size_t>(batch));
  for (Index z = 0; z < batch; ++z) targets[static_cast<std::size_t>(z)] = z;

  Eigen::VectorXd ns, ni;
  const Matrix us = normalize ? normalized_rows(seqs, ns) : seqs;
  const Matrix ui = normalize ? normalized_rows(items, ni) : items;
  const Matrix logits = (us * ui.transpose()) / tau;
  check_finite(logits);

  PairLoss r;
  Matrix d_logits;
  r.loss = softmax_xent(logits, targets, d_logits);
  d_logits /= tau;
  r.d_seq = d_logits * ui;
  r.d_items = d_logits.transpose() * us;
  if (normalize) {
    r.d_seq = through_normalization(us, ns, r.d_seq);
    r.d_items = through_normalization(ui, ni, r.d_items);
  }
  return r;
}

PairLoss loss_tune(const RowVector& seq, int target, const Matrix& catalog, double tau, bool normalize) {
  if (catalog.rows() < 2 || target < 0 || target >= catalog.rows())
    throw std::invalid_argument("loss_tune: needs m >= 2 and a target inside the catalog");
  Eigen::VectorXd ns, ni;
  const Matrix s = seq;
  const Matrix us = normalize ? normalized_rows(s, ns) : s;
  const Matrix ui = normalize ? normalized_rows(catalog, ni) : catalog;
  const Matrix logits = (us * ui.transpose()) / tau;
  check_finite(logits);

  PairLoss r;
  Matrix d_logits;
  r.loss = softmax_xent(logits, {static_cast<Index>(target)}, d_logits);
  d_logits /= tau;
  r.d_seq = d_logits * ui;
  r.d_items = d_logits.transpose() * us;
  if (normalize) {
    r.d_seq = through_normalization(us, ns, r.d_seq);
    r.d_items = through_normalization(ui, ni, r.d_items);
  }
  return r;
}

BprLoss loss_bpr(const RowVector& seq, const RowVector& pos, const RowVector& neg, bool normalize) {
  Matrix items(2, seq.cols());
  items.row(0) = pos;
  items.row(1) = neg;
  Eigen::VectorXd ns, ni;
  const Matrix s = seq;
  const Matrix us = normalize ? normalized_rows(s, ns) : s;
  const Matrix ui = normalize ? normalized_rows(items, ni) : items;
  const Eigen::RowVector2d sims = us * ui.transpose();
  check_finite(sims);
  const double margin = sims(0) - sims(1);
  BprLoss r;
  // -log sigmoid(x) = softplus(-x), evaluated stably.
  r.loss = margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
  const double g = -1.0 / (1.0 + std::exp(margin));  // d loss / d margin
  Eigen::RowVector2d d_sims(g, -g);
  Matrix d_us = d_sims * ui;
  Matrix d_ui = d_sims.transpose() * us;
  if (normalize) {
    d_us = through_normalization(us, ns, d_us);
    d_ui = through_normalization(ui, ni, d_ui);
  }
  r.d_seq = d_us;
  r.d_pos = d_ui.row(0);
  r.d_neg = d_ui.row(1);
  return r;
}

}  // namespace xdrec
