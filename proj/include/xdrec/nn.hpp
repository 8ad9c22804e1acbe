#pragma once

// Dense building blocks with explicit backward passes. Everything works on
// row-major activations (one token or one example per row).

#include "xdrec/common.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

namespace xdrec {

template <typename Scalar>
using ConstMatRef = Eigen::Ref<const Mat<Scalar>>;

template <typename Scalar>
struct AttentionResult {
  Mat<Scalar> out;    // t x d_v
  Mat<Scalar> probs;  // t x s, zero on masked keys
};

/// softmax(Q K^T / sqrt(d_k)) V with masked keys excluded. `key_mask` may be
/// empty (all keys visible). Throws NumericError when every key is masked.
template <typename Scalar>
AttentionResult<Scalar> attention_forward(const ConstMatRef<Scalar>& q, const ConstMatRef<Scalar>& k,
                                          const ConstMatRef<Scalar>& v, std::span<const std::uint8_t> key_mask = {}) {
  const Index t = q.rows();
  const Index s = k.rows();
  if (k.cols() != q.cols() || v.rows() != s || (!key_mask.empty() && static_cast<Index>(key_mask.size()) != s))
    throw std::invalid_argument("attention: inconsistent shapes");
  auto visible = [&](Index j) { return key_mask.empty() || key_mask[static_cast<std::size_t>(j)] != 0; };
  bool any = false;
  for (Index j = 0; j < s && !any; ++j) any = visible(j);
  if (!any) throw NumericError("attention: every key position is masked");

  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
  AttentionResult<Scalar> r;
  r.probs.noalias() = (q * k.transpose()) * scale;
  for (Index i = 0; i < t; ++i) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Index j = 0; j < s; ++j)
      if (visible(j)) mx = std::max(mx, r.probs(i, j));
    Scalar total = 0;
    for (Index j = 0; j < s; ++j) {
      const Scalar e = visible(j) ? std::exp(r.probs(i, j) - mx) : Scalar(0);
      r.probs(i, j) = e;
      total += e;
    }
    r.probs.row(i) /= total;
  }
  r.out.noalias() = r.probs * v;
  return r;
}

template <typename Scalar>
Mat<Scalar> scaled_dot_attention(const ConstMatRef<Scalar>& q, const ConstMatRef<Scalar>& k,
                                 const ConstMatRef<Scalar>& v, std::span<const std::uint8_t> key_mask = {}) {
  return attention_forward<Scalar>(q, k, v, key_mask).out;
}

template <typename Scalar>
struct AttentionGrads {
  Mat<Scalar> dq, dk, dv;
};

template <typename Scalar>
AttentionGrads<Scalar> attention_backward(const ConstMatRef<Scalar>& q, const ConstMatRef<Scalar>& k,
                                          const ConstMatRef<Scalar>& v, const ConstMatRef<Scalar>& probs,
                                          const ConstMatRef<Scalar>& d_out) {
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
  AttentionGrads<Scalar> g;
  g.dv.noalias() = probs.transpose() * d_out;
  Mat<Scalar> dp = d_out * v.transpose();
  // softmax Jacobian, row-wise: ds = p * (dp - <dp, p>)
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inner = (dp.array() * probs.array()).rowwise().sum();
  Mat<Scalar> ds = probs.array() * (dp.colwise() - inner).array();
  ds *= scale;
  g.dq.noalias() = ds * k;
  g.dk.noalias() = ds.transpose() * q;
  return g;
}

template <typename Scalar>
struct LayerNormCache {
  Mat<Scalar> xhat;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename Scalar>
Mat<Scalar> layer_norm(const ConstMatRef<Scalar>& x, const RowVec<Scalar>& gain, const RowVec<Scalar>& bias,
                       LayerNormCache<Scalar>* cache = nullptr) {
  const Index d = x.cols();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean = x.rowwise().sum() / static_cast<Scalar>(d);
  Mat<Scalar> centered = x.colwise() - mean;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<Scalar>(d)) + Scalar(kLayerNormEps)).rsqrt();
  Mat<Scalar> xhat = centered.array().colwise() * inv_std.array();
  Mat<Scalar> y = (xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

/// Returns dx; accumulates into d_gain / d_bias.
template <typename Scalar>
Mat<Scalar> layer_norm_backward(const LayerNormCache<Scalar>& cache, const RowVec<Scalar>& gain,
                                const ConstMatRef<Scalar>& dy, RowVec<Scalar>& d_gain, RowVec<Scalar>& d_bias) {
  d_gain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  d_bias += dy.colwise().sum();
  const Scalar inv_d = Scalar(1) / static_cast<Scalar>(dy.cols());
  const Mat<Scalar> dxhat = dy.array().rowwise() * gain.array();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_dxhat = dxhat.rowwise().sum() * inv_d;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_dxhat_xhat =
      (dxhat.array() * cache.xhat.array()).rowwise().sum() * inv_d;
  Mat<Scalar> dx = (dxhat.colwise() - mean_dxhat) - (cache.xhat.array().colwise() * mean_dxhat_xhat.array()).matrix();
  return dx.array().colwise() * cache.inv_std.array();
}

template <typename Scalar>
Scalar gelu(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
}

template <typename Scalar>
Scalar gelu_derivative(Scalar x) {
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
  const Scalar pdf = std::exp(Scalar(-0.5) * x * x) / std::sqrt(Scalar(2) * Scalar(3.14159265358979323846));
  return cdf + x * pdf;
}

}  // namespace xdrec
