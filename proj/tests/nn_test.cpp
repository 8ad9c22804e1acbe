#include "helpers.hpp"

#include "xdrec/nn.hpp"

using namespace xdrec;
using namespace testing;

TEST_CASE("attention rows are stochastic over visible keys") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Index t = 1 + static_cast<Index>(uniform_index(rng, 4));
    const Index s = 1 + static_cast<Index>(uniform_index(rng, 6));
    const Matrix q = random_matrix(t, 3, rng, 3.0), k = random_matrix(s, 3, rng, 3.0), v = random_matrix(s, 2, rng);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(s), 1);
    for (auto& m : mask) m = uniform01(rng) < 0.3 ? 0 : 1;
    mask[static_cast<std::size_t>(uniform_index(rng, static_cast<std::size_t>(s)))] = 1;
    const auto r = attention_forward<double>(q, k, v, mask);
    for (Index i = 0; i < t; ++i) {
      CHECK(std::abs(r.probs.row(i).sum() - 1.0) <= 1e-6);
      for (Index j = 0; j < s; ++j) {
        CHECK(r.probs(i, j) >= 0.0);
        if (!mask[static_cast<std::size_t>(j)]) CHECK(r.probs(i, j) == 0.0);
      }
    }
  }
}

TEST_CASE("identical value rows collapse attention to that row") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix q = random_matrix(3, 4, rng, 5.0), k = random_matrix(5, 4, rng, 5.0);
    const RowVector row = random_row(4, rng);
    const Matrix v = row.replicate(5, 1);
    const Matrix out = scaled_dot_attention<double>(q, k, v);
    for (Index i = 0; i < 3; ++i) CHECK(max_abs_diff(out.row(i), row) <= 1e-12);
  }
  Matrix one(1, 1);
  one << 2.5;
  CHECK(scaled_dot_attention<double>(one, one, one)(0, 0) == 2.5);
}

TEST_CASE("attention with every key masked is a numeric error") {
  const Matrix q = Matrix::Ones(1, 2);
  const std::vector<std::uint8_t> mask{0, 0};
  CHECK_THROWS_AS(attention_forward<double>(q, Matrix::Ones(2, 2), Matrix::Ones(2, 2), mask), NumericError);
  CHECK_THROWS_AS(attention_forward<double>(q, Matrix::Ones(2, 3), Matrix::Ones(2, 2)), std::invalid_argument);
}

TEST_CASE("primitives instantiate for float") {
  const Mat<float> q = Mat<float>::Random(2, 4), k = Mat<float>::Random(3, 4), v = Mat<float>::Random(3, 2);
  const auto r = attention_forward<float>(q, k, v);
  CHECK(std::abs(r.probs.row(0).sum() - 1.0f) < 1e-5f);
  const RowVec<float> g = RowVec<float>::Ones(4), b = RowVec<float>::Zero(4);
  const Mat<float> y = layer_norm<float>(q, g, b);
  CHECK(std::abs(y.row(0).mean()) < 1e-5f);
}

namespace {

// Central differences of sum(w .* f(x)) w.r.t. x.
template <typename F>
Matrix numeric_grad(const Matrix& x, const Matrix& w, F f, double step = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    Matrix up = x, down = x;
    up.data()[i] += step;
    down.data()[i] -= step;
    g.data()[i] = ((f(up).array() * w.array()).sum() - (f(down).array() * w.array()).sum()) / (2 * step);
  }
  return g;
}

}  // namespace

TEST_CASE("attention backward matches finite differences") {
  Rng rng(13);
  const Matrix q = random_matrix(2, 3, rng), k = random_matrix(4, 3, rng), v = random_matrix(4, 2, rng);
  const Matrix w = random_matrix(2, 2, rng);
  const auto fwd = attention_forward<double>(q, k, v);
  const auto g = attention_backward<double>(q, k, v, fwd.probs, w);
  CHECK(max_abs_diff(g.dq, numeric_grad(q, w, [&](const Matrix& x) { return scaled_dot_attention<double>(x, k, v); })) < 1e-8);
  CHECK(max_abs_diff(g.dk, numeric_grad(k, w, [&](const Matrix& x) { return scaled_dot_attention<double>(q, x, v); })) < 1e-8);
  CHECK(max_abs_diff(g.dv, numeric_grad(v, w, [&](const Matrix& x) { return scaled_dot_attention<double>(q, k, x); })) < 1e-8);
}

TEST_CASE("layer norm normalizes rows and its backward matches finite differences") {
  Rng rng(14);
  const Matrix x = random_matrix(3, 5, rng, 2.0);
  const RowVector gain = random_row(5, rng), bias = random_row(5, rng);
  LayerNormCache<double> cache;
  const Matrix y = layer_norm<double>(x, RowVector::Ones(5), RowVector::Zero(5), &cache);
  for (Index i = 0; i < 3; ++i) {
    CHECK(std::abs(y.row(i).mean()) < 1e-12);
    CHECK(std::abs(y.row(i).squaredNorm() / 5.0 - 1.0) < 1e-4);
  }
  const Matrix w = random_matrix(3, 5, rng);
  layer_norm<double>(x, gain, bias, &cache);
  RowVector d_gain = RowVector::Zero(5), d_bias = RowVector::Zero(5);
  const Matrix dx = layer_norm_backward<double>(cache, gain, w, d_gain, d_bias);
  CHECK(max_abs_diff(dx, numeric_grad(x, w, [&](const Matrix& z) { return layer_norm<double>(z, gain, bias); })) < 1e-8);
  const Matrix gain_m = gain;
  const Matrix ng = numeric_grad(gain_m, w, [&](const Matrix& gg) {
    return layer_norm<double>(x, RowVector(gg), bias);
  });
  CHECK(max_abs_diff(d_gain, ng) < 1e-8);
  CHECK(max_abs_diff(d_bias, w.colwise().sum()) < 1e-12);
}

TEST_CASE("gelu derivative matches finite differences") {
  for (double x : {-3.0, -1.0, -0.1, 0.0, 0.4, 2.0}) {
    const double fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
    CHECK(std::abs(gelu_derivative(x) - fd) < 1e-8);
  }
  CHECK(gelu(0.0) == 0.0);
}
