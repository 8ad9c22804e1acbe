#pragma once

#include "xdrec/common.hpp"

namespace xdrec {

/// a.b, or cosine similarity when `normalize` is set (zero norm throws NumericError).
double similarity(const RowVector& a, const RowVector& b, bool normalize);

/// Row-wise similarity of every row of `a` against every row of `b`.
Matrix similarity_matrix(const Matrix& a, const Matrix& b, bool normalize);

struct PairLoss {
  double loss = 0.0;
  Matrix d_seq;    // same shape as the sequence input
  Matrix d_items;  // same shape as the item input
};

/// In-batch contrastive loss: row z of `items` is the positive of row z of
/// `seqs`, the other rows are its negatives. Mean over the batch.
PairLoss loss_pretrain(const Matrix& seqs, const Matrix& items, double tau, bool normalize);

/// Softmax over the full catalog for one sequence.
PairLoss loss_tune(const RowVector& seq, int target, const Matrix& catalog, double tau, bool normalize);

struct BprLoss {
  double loss = 0.0;
  RowVector d_seq, d_pos, d_neg;
};

/// -log sigmoid(sim(h, pos) - sim(h, neg)).
BprLoss loss_bpr(const RowVector& seq, const RowVector& pos, const RowVector& neg, bool normalize);

}  // namespace xdrec
