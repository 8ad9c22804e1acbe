#include "xdrec/encoder.hpp"

#include <cmath>
#include <string>

namespace xdrec {

void EncoderConfig::validate() const {
  if (vocab_size < Vocab::kNumReserved) throw ConfigError("encoder: vocab_size must cover the reserved tokens");
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || max_tokens < 2)
    throw ConfigError("encoder: all dimensions must be >= 1 (max_tokens >= 2)");
  if (d_model % n_heads != 0) throw ConfigError("encoder: d_model must be divisible by n_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder: dropout must be in [0, 1)");
}

namespace {

Matrix uniform_matrix(Index rows, Index cols, Rng& rng, double limit = 0.02) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = uniform(rng, -limit, limit);
  return m;
}

RowVector uniform_row(Index n, Rng& rng) { return uniform_matrix(1, n, rng); }

Matrix dropout_mask(Index rows, Index cols, double rate, Rng& rng) {
  Matrix m(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = uniform01(rng) < rate ? 0.0 : keep;
  return m;
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const Index d = cfg.d_model;
  auto weight = [&](Index rows, Index cols) {
    const double limit = cfg.init == EncoderInit::Glorot ? std::sqrt(6.0 / static_cast<double>(rows + cols)) : 0.02;
    return uniform_matrix(rows, cols, rng, limit);
  };
  EncoderParams p;
  p.config = cfg;
  p.word_embeddings = uniform_matrix(cfg.vocab_size, d, rng);
  p.position_embeddings = uniform_matrix(cfg.max_tokens, d, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    EncoderLayer layer;
    layer.wq = weight(d, d);
    layer.wk = weight(d, d);
    layer.wv = weight(d, d);
    layer.wo = weight(d, d);
    layer.bq = uniform_row(d, rng);
    layer.bk = uniform_row(d, rng);
    layer.bv = uniform_row(d, rng);
    layer.bo = uniform_row(d, rng);
    layer.ln1_gain = RowVector::Ones(d);
    layer.ln1_bias = RowVector::Zero(d);
    layer.w_ff1 = weight(d, cfg.d_ff);
    layer.b_ff1 = uniform_row(cfg.d_ff, rng);
    layer.w_ff2 = weight(cfg.d_ff, d);
    layer.b_ff2 = uniform_row(d, rng);
    layer.ln2_gain = RowVector::Ones(d);
    layer.ln2_bias = RowVector::Zero(d);
    p.layers.push_back(std::move(layer));
  }
  p.pooler_weight = weight(d, d);
  p.pooler_bias = uniform_row(d, rng);
  return p;
}

EncoderParams EncoderParams::zeros(const EncoderConfig& cfg) {
  const Index d = cfg.d_model;
  EncoderParams p;
  p.config = cfg;
  p.word_embeddings = Matrix::Zero(cfg.vocab_size, d);
  p.position_embeddings = Matrix::Zero(cfg.max_tokens, d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    EncoderLayer layer;
    layer.wq = layer.wk = layer.wv = layer.wo = Matrix::Zero(d, d);
    layer.bq = layer.bk = layer.bv = layer.bo = RowVector::Zero(d);
    layer.ln1_gain = layer.ln1_bias = layer.ln2_gain = layer.ln2_bias = RowVector::Zero(d);
    layer.w_ff1 = Matrix::Zero(d, cfg.d_ff);
    layer.b_ff1 = RowVector::Zero(cfg.d_ff);
    layer.w_ff2 = Matrix::Zero(cfg.d_ff, d);
    layer.b_ff2 = RowVector::Zero(d);
    p.layers.push_back(std::move(layer));
  }
  p.pooler_weight = Matrix::Zero(d, d);
  p.pooler_bias = RowVector::Zero(d);
  return p;
}

RowVector encode_sequence(const ModelInput& input, const EncoderParams& p, EncoderTrace* trace, Rng* dropout_rng) {
  const auto& cfg = p.config;
  if (static_cast<int>(input.tokens.size()) > cfg.max_tokens)
    throw DataError("input has " + std::to_string(input.tokens.size()) + " positions, encoder accepts " +
                    std::to_string(cfg.max_tokens));
  // Trailing masked positions can never influence the CLS state.
  Index n = static_cast<Index>(input.tokens.size());
  while (n > 0 && !input.mask[static_cast<std::size_t>(n - 1)]) --n;
  if (n == 0 || !input.mask[0]) throw DataError("input has no visible CLS position");

  const Index d = cfg.d_model;
  const Index heads = cfg.n_heads;
  const Index dk = d / heads;
  const bool drop = dropout_rng != nullptr && cfg.dropout > 0.0;
  const std::span<const std::uint8_t> key_mask(input.mask.data(), static_cast<std::size_t>(n));

  Matrix x(n, d);
  for (Index i = 0; i < n; ++i) {
    const int tok = input.tokens[static_cast<std::size_t>(i)];
    const int pos = input.positions[static_cast<std::size_t>(i)];
    if (tok < 0 || tok >= cfg.vocab_size)
      throw DataError("token id " + std::to_string(tok) + " outside vocabulary of size " + std::to_string(cfg.vocab_size));
    if (pos < 0 || pos >= cfg.max_tokens) throw DataError("position id " + std::to_string(pos) + " out of range");
    x.row(i) = p.word_embeddings.row(tok) + p.position_embeddings.row(pos);
  }

  EncoderTrace local;
  EncoderTrace& tr = trace ? *trace : local;
  tr.tokens.assign(input.tokens.begin(), input.tokens.begin() + n);
  tr.positions.assign(input.positions.begin(), input.positions.begin() + n);
  tr.key_mask.assign(key_mask.begin(), key_mask.end());
  tr.layers.clear();
  tr.layers.reserve(p.layers.size());

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const EncoderLayer& L = p.layers[l];
    // The last layer only needs the CLS row as a query.
    const Index rows = l + 1 == p.layers.size() ? 1 : n;
    EncoderLayerTrace& lt = tr.layers.emplace_back();
    lt.input = std::move(x);
    lt.q = (lt.input.topRows(rows) * L.wq).rowwise() + L.bq;
    lt.k = (lt.input * L.wk).rowwise() + L.bk;
    lt.v = (lt.input * L.wv).rowwise() + L.bv;
    lt.context.resize(rows, d);
    for (Index h = 0; h < heads; ++h) {
      auto r = attention_forward<double>(lt.q.middleCols(h * dk, dk), lt.k.middleCols(h * dk, dk),
                                         lt.v.middleCols(h * dk, dk), key_mask);
      lt.context.middleCols(h * dk, dk) = r.out;
      lt.probs.push_back(std::move(r.probs));
    }
    Matrix attn = (lt.context * L.wo).rowwise() + L.bo;
    if (drop) {
      lt.attn_drop = dropout_mask(rows, d, cfg.dropout, *dropout_rng);
      attn = attn.cwiseProduct(lt.attn_drop);
    }
    lt.x1 = layer_norm<double>(lt.input.topRows(rows) + attn, L.ln1_gain, L.ln1_bias, &lt.ln1);
    lt.ff_pre = (lt.x1 * L.w_ff1).rowwise() + L.b_ff1;
    lt.ff_act = lt.ff_pre.unaryExpr([](double v) { return gelu(v); });
    Matrix ff = (lt.ff_act * L.w_ff2).rowwise() + L.b_ff2;
    if (drop) {
      lt.ff_drop = dropout_mask(rows, d, cfg.dropout, *dropout_rng);
      ff = ff.cwiseProduct(lt.ff_drop);
    }
    x = layer_norm<double>(lt.x1 + ff, L.ln2_gain, L.ln2_bias, &lt.ln2);
  }

  tr.cls_state = x.row(0);
  tr.pooled = ((tr.cls_state * p.pooler_weight) + p.pooler_bias).array().tanh().matrix();
  return tr.pooled;
}

RowVector encode_item(const TokenizedItem& item, const EncoderParams& p, EncoderTrace* trace, Rng* dropout_rng) {
  return encode_sequence(item_input(item, p.config.max_tokens), p, trace, dropout_rng);
}

void encode_backward(const EncoderTrace& tr, const EncoderParams& p, const RowVector& d_h, EncoderParams& g) {
  const Index d = p.config.d_model;
  const Index heads = p.config.n_heads;
  const Index dk = d / heads;

  const RowVector dz = d_h.array() * (1.0 - tr.pooled.array().square());
  g.pooler_weight.noalias() += tr.cls_state.transpose() * dz;
  g.pooler_bias += dz;
  Matrix d_out = dz * p.pooler_weight.transpose();  // 1 x d: gradient w.r.t. the last layer's rows

  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const EncoderLayer& L = p.layers[l];
    EncoderLayer& G = g.layers[l];
    const EncoderLayerTrace& lt = tr.layers[l];
    const Index rows = lt.q.rows();

    Matrix d_r2 = layer_norm_backward<double>(lt.ln2, L.ln2_gain, d_out, G.ln2_gain, G.ln2_bias);
    Matrix d_x1 = d_r2;
    Matrix d_ff = lt.ff_drop.size() ? Matrix(d_r2.cwiseProduct(lt.ff_drop)) : d_r2;
    G.w_ff2.noalias() += lt.ff_act.transpose() * d_ff;
    G.b_ff2 += d_ff.colwise().sum();
    Matrix d_pre = d_ff * L.w_ff2.transpose();
    d_pre.array() *= lt.ff_pre.unaryExpr([](double v) { return gelu_derivative(v); }).array();
    G.w_ff1.noalias() += lt.x1.transpose() * d_pre;
    G.b_ff1 += d_pre.colwise().sum();
    d_x1.noalias() += d_pre * L.w_ff1.transpose();

    Matrix d_r1 = layer_norm_backward<double>(lt.ln1, L.ln1_gain, d_x1, G.ln1_gain, G.ln1_bias);
    Matrix d_in = Matrix::Zero(lt.input.rows(), d);
    d_in.topRows(rows) += d_r1;
    Matrix d_attn = lt.attn_drop.size() ? Matrix(d_r1.cwiseProduct(lt.attn_drop)) : d_r1;
    G.wo.noalias() += lt.context.transpose() * d_attn;
    G.bo += d_attn.colwise().sum();
    const Matrix d_ctx = d_attn * L.wo.transpose();

    Matrix dq(rows, d), dkm(lt.k.rows(), d), dv(lt.v.rows(), d);
    for (Index h = 0; h < heads; ++h) {
      auto ag = attention_backward<double>(lt.q.middleCols(h * dk, dk), lt.k.middleCols(h * dk, dk),
                                           lt.v.middleCols(h * dk, dk), lt.probs[static_cast<std::size_t>(h)],
                                           d_ctx.middleCols(h * dk, dk));
      dq.middleCols(h * dk, dk) = ag.dq;
      dkm.middleCols(h * dk, dk) = ag.dk;
      dv.middleCols(h * dk, dk) = ag.dv;
    }
    G.wq.noalias() += lt.input.topRows(rows).transpose() * dq;
    G.bq += dq.colwise().sum();
    d_in.topRows(rows).noalias() += dq * L.wq.transpose();
    G.wk.noalias() += lt.input.transpose() * dkm;
    G.bk += dkm.colwise().sum();
    d_in.noalias() += dkm * L.wk.transpose();
    G.wv.noalias() += lt.input.transpose() * dv;
    G.bv += dv.colwise().sum();
    d_in.noalias() += dv * L.wv.transpose();
    d_out = std::move(d_in);
  }

  for (std::size_t i = 0; i < tr.tokens.size(); ++i) {
    g.word_embeddings.row(tr.tokens[i]) += d_out.row(static_cast<Index>(i));
    g.position_embeddings.row(tr.positions[i]) += d_out.row(static_cast<Index>(i));
  }
}

}  // namespace xdrec
