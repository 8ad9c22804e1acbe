#include "xdrec/prompt.hpp"

#include "xdrec/nn.hpp"

#include <cmath>

namespace xdrec {

void PromptConfig::validate(int d_model) const {
  if (prompt_rows < 1) throw ConfigError("prompt: prompt_rows (d_W) must be >= 1");
  if (n_heads < 1 || d_model % n_heads != 0) throw ConfigError("prompt: d_model must be divisible by prompt heads");
  if (fusion_hidden < 0) throw ConfigError("prompt: fusion_hidden must be >= 0");
}

namespace {

Matrix uniform_matrix(Index rows, Index cols, double limit, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = uniform(rng, -limit, limit);
  return m;
}

Matrix glorot(Index rows, Index cols, Rng& rng) {
  return uniform_matrix(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

PromptSide make_side(const PromptConfig& cfg, int d, Rng& rng) {
  PromptSide s;
  s.prompts = uniform_matrix(cfg.prompt_rows, d, 0.02, rng);
  if (cfg.coattention) {
    CoAttentionBranch b;
    b.wq = glorot(d, d, rng);
    b.wk = glorot(d, d, rng);
    b.wv = glorot(d, d, rng);
    b.wo = glorot(d, d, rng);
    b.n_heads = cfg.n_heads;
    s.attention = std::move(b);
  }
  return s;
}

PromptSide zero_side(const PromptConfig& cfg, int d) {
  PromptSide s;
  s.prompts = Matrix::Zero(cfg.prompt_rows, d);
  if (cfg.coattention) s.attention = CoAttentionBranch{Matrix::Zero(d, d), Matrix::Zero(d, d), Matrix::Zero(d, d),
                                                       Matrix::Zero(d, d), cfg.n_heads};
  return s;
}

RowVector pool_side(const RowVector& h, const PromptSide& side, std::optional<BranchTrace>& trace, bool want_trace) {
  if (!side.attention) return side.prompts.colwise().mean();
  if (!want_trace) return attend_prompts(h, side.prompts, *side.attention);
  trace.emplace();
  return attend_prompts(h, side.prompts, *side.attention, &*trace);
}

void pool_side_backward(const RowVector& h, const PromptSide& side, const std::optional<BranchTrace>& trace,
                        const RowVector& d_out, PromptSide& g, RowVector& d_h) {
  if (!side.attention) {
    g.prompts.rowwise() += d_out / static_cast<double>(side.prompts.rows());
    return;
  }
  d_h += attend_prompts_backward(h, side.prompts, *side.attention, *trace, d_out, g.prompts, *g.attention);
}

}  // namespace

PromptModule PromptModule::init(const PromptConfig& cfg, int d_model, Rng& rng) {
  cfg.validate(d_model);
  PromptModule m;
  m.config = cfg;
  if (cfg.use_shared) m.shared = make_side(cfg, d_model, rng);
  if (cfg.use_specific) m.specific = make_side(cfg, d_model, rng);
  const int in = cfg.fusion_input_width(d_model);
  const int hidden = cfg.hidden_width(d_model);
  m.fusion.w1 = glorot(in, hidden, rng);
  m.fusion.b1 = RowVector::Zero(hidden);
  m.fusion.w2 = glorot(hidden, d_model, rng);
  m.fusion.b2 = RowVector::Zero(d_model);
  return m;
}

PromptModule PromptModule::zeros(const PromptConfig& cfg, int d_model) {
  PromptModule m;
  m.config = cfg;
  if (cfg.use_shared) m.shared = zero_side(cfg, d_model);
  if (cfg.use_specific) m.specific = zero_side(cfg, d_model);
  const int in = cfg.fusion_input_width(d_model);
  const int hidden = cfg.hidden_width(d_model);
  m.fusion = {Matrix::Zero(in, hidden), RowVector::Zero(hidden), Matrix::Zero(hidden, d_model),
              RowVector::Zero(d_model)};
  return m;
}

RowVector attend_prompts(const RowVector& h, const Matrix& prompts, const CoAttentionBranch& b, BranchTrace* trace) {
  const Index d = h.cols();
  if (prompts.cols() != d || b.wq.rows() != d || b.wo.cols() != d || d % b.n_heads != 0)
    throw std::invalid_argument("attend_prompts: inconsistent shapes");
  const Index dk = d / b.n_heads;
  BranchTrace local;
  BranchTrace& t = trace ? *trace : local;
  t.q = h * b.wq;
  t.k = prompts * b.wk;
  t.v = prompts * b.wv;
  t.context.resize(d);
  t.probs.clear();
  for (Index head = 0; head < b.n_heads; ++head) {
    auto r = attention_forward<double>(t.q.middleCols(head * dk, dk), t.k.middleCols(head * dk, dk),
                                       t.v.middleCols(head * dk, dk));
    t.context.middleCols(head * dk, dk) = r.out;
    t.probs.emplace_back(r.probs);
  }
  return t.context * b.wo;
}

RowVector attend_prompts_backward(const RowVector& h, const Matrix& prompts, const CoAttentionBranch& b,
                                  const BranchTrace& t, const RowVector& d_out, Matrix& g_prompts,
                                  CoAttentionBranch& g_branch) {
  const Index d = h.cols();
  const Index dk = d / b.n_heads;
  g_branch.wo.noalias() += t.context.transpose() * d_out;
  const RowVector d_ctx = d_out * b.wo.transpose();
  RowVector dq(d);
  Matrix dk_all(prompts.rows(), d), dv_all(prompts.rows(), d);
  for (Index head = 0; head < b.n_heads; ++head) {
    auto g = attention_backward<double>(t.q.middleCols(head * dk, dk), t.k.middleCols(head * dk, dk),
                                        t.v.middleCols(head * dk, dk), t.probs[static_cast<std::size_t>(head)],
                                        d_ctx.middleCols(head * dk, dk));
    dq.middleCols(head * dk, dk) = g.dq;
    dk_all.middleCols(head * dk, dk) = g.dk;
    dv_all.middleCols(head * dk, dk) = g.dv;
  }
  g_branch.wq.noalias() += h.transpose() * dq;
  g_branch.wk.noalias() += prompts.transpose() * dk_all;
  g_branch.wv.noalias() += prompts.transpose() * dv_all;
  g_prompts.noalias() += dk_all * b.wk.transpose();
  g_prompts.noalias() += dv_all * b.wv.transpose();
  return dq * b.wq.transpose();
}

RowVector fuse(const std::vector<const RowVector*>& parts, const FusionParams& f, FusionTrace* trace) {
  Index width = 0;
  for (const RowVector* p : parts) width += p->cols();
  if (width != f.w1.rows()) throw std::invalid_argument("fuse: concatenated width does not match W1");
  FusionTrace local;
  FusionTrace& t = trace ? *trace : local;
  t.input.resize(width);
  Index at = 0;
  for (const RowVector* p : parts) {
    t.input.middleCols(at, p->cols()) = *p;
    at += p->cols();
  }
  t.pre = t.input * f.w1 + f.b1;
  t.act = t.pre.cwiseMax(0.0);
  return t.act * f.w2 + f.b2;
}

RowVector fuse(const RowVector& h, const RowVector& p_shared, const RowVector& p_specific, const FusionParams& f) {
  return fuse({&h, &p_shared, &p_specific}, f);
}

RowVector enhance(const RowVector& h, const PromptModule& m, EnhanceTrace* trace) {
  const bool want = trace != nullptr;
  EnhanceTrace local;
  EnhanceTrace& t = want ? *trace : local;
  std::vector<const RowVector*> parts{&h};
  if (m.shared) {
    t.p_shared = pool_side(h, *m.shared, t.shared, want);
    parts.push_back(&t.p_shared);
  }
  if (m.specific) {
    t.p_specific = pool_side(h, *m.specific, t.specific, want);
    parts.push_back(&t.p_specific);
  }
  if (want) t.h = h;
  return fuse(parts, m.fusion, &t.fusion);
}

Matrix enhance_rows(const Matrix& h, const PromptModule& m) {
  Matrix out(h.rows(), h.cols());
  for (Index i = 0; i < h.rows(); ++i) out.row(i) = enhance(h.row(i), m);
  return out;
}

RowVector enhance_backward(const EnhanceTrace& t, const PromptModule& m, const RowVector& d_out, PromptModule& g) {
  const Index d = t.h.cols();
  const FusionParams& f = m.fusion;
  g.fusion.w2.noalias() += t.fusion.act.transpose() * d_out;
  g.fusion.b2 += d_out;
  RowVector d_pre = d_out * f.w2.transpose();
  for (Index j = 0; j < d_pre.cols(); ++j)
    if (!(t.fusion.pre(j) > 0.0)) d_pre(j) = 0.0;
  g.fusion.w1.noalias() += t.fusion.input.transpose() * d_pre;
  g.fusion.b1 += d_pre;
  const RowVector d_in = d_pre * f.w1.transpose();

  RowVector d_h = d_in.leftCols(d);
  Index at = d;
  if (m.shared) {
    pool_side_backward(t.h, *m.shared, t.shared, d_in.middleCols(at, d), *g.shared, d_h);
    at += d;
  }
  if (m.specific) pool_side_backward(t.h, *m.specific, t.specific, d_in.middleCols(at, d), *g.specific, d_h);
  return d_h;
}

}  // namespace xdrec
