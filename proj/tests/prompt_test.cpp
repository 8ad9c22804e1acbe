#include "helpers.hpp"

#include "xdrec/eval.hpp"
#include "xdrec/prompt.hpp"

#include <cmath>

using namespace xdrec;
using namespace testing;

namespace {

CoAttentionBranch random_branch(int d, int heads, Rng& rng) {
  return {random_matrix(d, d, rng), random_matrix(d, d, rng), random_matrix(d, d, rng), random_matrix(d, d, rng),
          heads};
}

// Per-head hand computation with scalar loops.
RowVector attend_oracle(const RowVector& h, const Matrix& P, const CoAttentionBranch& b) {
  const Index d = h.cols(), rows = P.rows(), dk = d / b.n_heads;
  std::vector<double> q(static_cast<std::size_t>(d), 0.0);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) q[static_cast<std::size_t>(j)] += h(i) * b.wq(i, j);
  Matrix k = Matrix::Zero(rows, d), v = Matrix::Zero(rows, d);
  for (Index r = 0; r < rows; ++r)
    for (Index j = 0; j < d; ++j)
      for (Index i = 0; i < d; ++i) {
        k(r, j) += P(r, i) * b.wk(i, j);
        v(r, j) += P(r, i) * b.wv(i, j);
      }
  std::vector<double> ctx(static_cast<std::size_t>(d), 0.0);
  for (Index head = 0; head < b.n_heads; ++head) {
    std::vector<double> e(static_cast<std::size_t>(rows));
    double total = 0.0;
    for (Index r = 0; r < rows; ++r) {
      double s = 0.0;
      for (Index c = head * dk; c < (head + 1) * dk; ++c) s += q[static_cast<std::size_t>(c)] * k(r, c);
      e[static_cast<std::size_t>(r)] = std::exp(s / std::sqrt(static_cast<double>(dk)));
      total += e[static_cast<std::size_t>(r)];
    }
    for (Index r = 0; r < rows; ++r)
      for (Index c = head * dk; c < (head + 1) * dk; ++c)
        ctx[static_cast<std::size_t>(c)] += e[static_cast<std::size_t>(r)] / total * v(r, c);
  }
  RowVector out = RowVector::Zero(d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) out(j) += ctx[static_cast<std::size_t>(i)] * b.wo(i, j);
  return out;
}

PromptModule random_module(const PromptConfig& cfg, int d, Rng& rng) {
  PromptModule m = PromptModule::zeros(cfg, d);
  for (auto* side : {&m.shared, &m.specific}) {
    if (!*side) continue;
    (*side)->prompts = random_matrix(cfg.prompt_rows, d, rng);
    if ((*side)->attention) (*side)->attention = random_branch(d, cfg.n_heads, rng);
  }
  m.fusion.w1 = random_matrix(m.fusion.w1.rows(), m.fusion.w1.cols(), rng);
  m.fusion.b1 = random_row(m.fusion.b1.cols(), rng);
  m.fusion.w2 = random_matrix(m.fusion.w2.rows(), m.fusion.w2.cols(), rng);
  m.fusion.b2 = random_row(m.fusion.b2.cols(), rng);
  return m;
}

}  // namespace

TEST_CASE("attend_prompts matches the per-head oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const CoAttentionBranch b = random_branch(4, 2, rng);
    const Matrix P = random_matrix(2, 4, rng);
    const RowVector h = random_row(4, rng);
    CHECK(max_abs_diff(attend_prompts(h, P, b), attend_oracle(h, P, b)) <= 1e-10);
  }
  const CoAttentionBranch b = random_branch(8, 4, rng);
  const Matrix P = random_matrix(5, 8, rng);
  const RowVector h = random_row(8, rng);
  CHECK(max_abs_diff(attend_prompts(h, P, b), attend_oracle(h, P, b)) <= 1e-10);
}

TEST_CASE("a single prompt row or identical rows make the output independent of h") {
  Rng rng(32);
  const CoAttentionBranch b = random_branch(4, 2, rng);
  const Matrix p = random_matrix(1, 4, rng);
  const RowVector expected = (p * b.wv) * b.wo;
  for (int trial = 0; trial < 5; ++trial) {
    const RowVector h = random_row(4, rng, 5.0);
    CHECK(max_abs_diff(attend_prompts(h, p, b), expected) <= 1e-12);
    CHECK(max_abs_diff(attend_prompts(h, p.replicate(3, 1), b), expected) <= 1e-12);
  }
}

TEST_CASE("with one head the pooled vector is W_O applied to a convex combination of P W_V") {
  Rng rng(33);
  const CoAttentionBranch b = random_branch(3, 1, rng);
  const Matrix P = random_matrix(4, 3, rng);
  BranchTrace trace;
  const RowVector out = attend_prompts(random_row(3, rng), P, b, &trace);
  const RowVector w = trace.probs[0];
  CHECK(std::abs(w.sum() - 1.0) < 1e-12);
  CHECK(w.minCoeff() >= 0.0);
  CHECK(max_abs_diff(out, (w * (P * b.wv)) * b.wo) <= 1e-12);
}

TEST_CASE("fusion concatenates h, shared, specific in that order") {
  Rng rng(34);
  FusionParams f{random_matrix(12, 5, rng), random_row(5, rng), random_matrix(5, 4, rng), random_row(4, rng)};
  const RowVector h = random_row(4, rng), a = random_row(4, rng), c = random_row(4, rng);
  FusionTrace trace;
  const RowVector out = fuse({&h, &a, &c}, f, &trace);
  CHECK(trace.input.cols() == 12);
  RowVector cat(12);
  cat << h, a, c;
  CHECK(max_abs_diff(out, (cat * f.w1 + f.b1).cwiseMax(0.0) * f.w2 + f.b2) <= 1e-12);
  CHECK(max_abs_diff(fuse(h, a, c, f), out) == 0.0);
  CHECK(max_abs_diff(fuse(a, h, c, f), out) > 1e-6);

  FusionParams zero{Matrix::Zero(12, 5), random_row(5, rng), Matrix::Zero(5, 4), random_row(4, rng)};
  CHECK(max_abs_diff(fuse(h, a, c, zero), zero.b2) == 0.0);
  CHECK_THROWS_AS(fuse({&h, &a}, f), std::invalid_argument);
}

TEST_CASE("enhance composes both branches and fusion") {
  Rng rng(35);
  PromptConfig cfg;
  const PromptModule m = random_module(cfg, 4, rng);
  const RowVector h = random_row(4, rng);
  const RowVector ps = attend_prompts(h, m.shared->prompts, *m.shared->attention);
  const RowVector pp = attend_prompts(h, m.specific->prompts, *m.specific->attention);
  CHECK(max_abs_diff(enhance(h, m), fuse(h, ps, pp, m.fusion)) <= 1e-12);
  CHECK((enhance(h, m).array() == enhance(h, m).array()).all());
}

TEST_CASE("the shared branch is unaffected by the specific side") {
  Rng rng(36);
  PromptConfig cfg;
  PromptModule m = random_module(cfg, 4, rng);
  const RowVector h = random_row(4, rng);
  EnhanceTrace before, after;
  enhance(h, m, &before);
  m.specific->prompts.setZero();
  m.specific->attention->wq.setZero();
  m.specific->attention->wv.setZero();
  enhance(h, m, &after);
  CHECK((before.p_shared.array() == after.p_shared.array()).all());
}

TEST_CASE("enhance_rows treats each row on its own") {
  Rng rng(37);
  const PromptModule m = random_module(PromptConfig{}, 4, rng);
  const Matrix H = random_matrix(6, 4, rng);
  const Matrix all = enhance_rows(H, m);
  for (Index i = 0; i < H.rows(); ++i) CHECK((all.row(i).array() == enhance(H.row(i), m).array()).all());
  const Matrix two = enhance_rows(H.topRows(2), m);
  CHECK((two.array() == all.topRows(2).array()).all());
}

TEST_CASE("variant prompt configurations") {
  const PromptConfig base;
  const int d = 4;
  CHECK(apply_variant(base, Variant::FULL).fusion_input_width(d) == 3 * d);
  CHECK(apply_variant(base, Variant::SH).fusion_input_width(d) == 2 * d);
  CHECK(apply_variant(base, Variant::SP).fusion_input_width(d) == 2 * d);
  CHECK(apply_variant(base, Variant::SSP).fusion_input_width(d) == d);
  CHECK_FALSE(apply_variant(base, Variant::CA).coattention);
  CHECK(apply_variant(base, Variant::PR) == base);
  CHECK(apply_variant(base, Variant::PT) == base);

  Rng rng(38);
  const PromptModule sh = PromptModule::init(apply_variant(base, Variant::SH), d, rng);
  CHECK_FALSE(sh.shared.has_value());
  CHECK(sh.specific.has_value());
  CHECK(sh.fusion.w1.rows() == 2 * d);
}

TEST_CASE("mean-pooling mode replaces attention by the prompt row mean") {
  Rng rng(39);
  PromptConfig cfg = apply_variant(PromptConfig{}, Variant::CA);
  cfg.prompt_rows = 3;
  const PromptModule m = random_module(cfg, 4, rng);
  CHECK_FALSE(m.shared->attention.has_value());
  const RowVector h = random_row(4, rng);
  EnhanceTrace t;
  const RowVector out = enhance(h, m, &t);
  CHECK(out.cols() == 4);
  CHECK(max_abs_diff(t.p_shared, m.shared->prompts.colwise().mean()) <= 1e-15);
  CHECK(max_abs_diff(t.p_specific, m.specific->prompts.colwise().mean()) <= 1e-15);
}

TEST_CASE("enhance backward matches finite differences for every variant") {
  for (Variant v : {Variant::FULL, Variant::CA, Variant::SH, Variant::SP, Variant::SSP}) {
    CAPTURE(to_string(v));
    Rng rng(40);
    PromptConfig cfg = apply_variant(PromptConfig{}, v);
    cfg.prompt_rows = 3;
    PromptModule m = random_module(cfg, 4, rng);
    RowVector h = random_row(4, rng);
    const RowVector w = random_row(4, rng);
    EnhanceTrace trace;
    enhance(h, m, &trace);
    PromptModule g = PromptModule::zeros(cfg, 4);
    const RowVector dh = enhance_backward(trace, m, w, g);
    auto objective = [&] { return enhance(h, m).dot(w); };
    auto numeric = [&](auto& param) {
      Matrix n(param.rows(), param.cols());
      for (Index i = 0; i < param.size(); ++i) {
        const double saved = param.data()[i];
        param.data()[i] = saved + 1e-6;
        const double up = objective();
        param.data()[i] = saved - 1e-6;
        const double down = objective();
        param.data()[i] = saved;
        n.data()[i] = (up - down) / 2e-6;
      }
      return n;
    };
    CHECK(max_abs_diff(dh, numeric(h)) < 1e-7);
    CHECK(max_abs_diff(g.fusion.w1, numeric(m.fusion.w1)) < 1e-7);
    CHECK(max_abs_diff(g.fusion.b2, numeric(m.fusion.b2)) < 1e-7);
    for (auto [side, gside] : {std::pair{&m.shared, &g.shared}, std::pair{&m.specific, &g.specific}}) {
      if (!*side) continue;
      CHECK(max_abs_diff((*gside)->prompts, numeric((*side)->prompts)) < 1e-7);
      if ((*side)->attention) {
        CHECK(max_abs_diff((*gside)->attention->wq, numeric((*side)->attention->wq)) < 1e-7);
        CHECK(max_abs_diff((*gside)->attention->wo, numeric((*side)->attention->wo)) < 1e-7);
      }
    }
  }
}
