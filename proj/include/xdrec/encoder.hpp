#pragma once

#include "xdrec/common.hpp"
#include "xdrec/nn.hpp"
#include "xdrec/text.hpp"

#include <vector>

namespace xdrec {

enum class EncoderInit {
  Glorot,   // weight matrices Glorot-uniform; embeddings and biases uniform in [-0.02, 0.02]
  Uniform,  // every tensor uniform in [-0.02, 0.02]
};

struct EncoderConfig {
  int vocab_size = 0;
  int d_model = 32;
  int n_layers = 1;
  int n_heads = 2;
  int d_ff = 64;
  int max_tokens = 256;
  double dropout = 0.0;
  EncoderInit init = EncoderInit::Glorot;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct EncoderLayer {
  Matrix wq, wk, wv, wo;
  RowVector bq, bk, bv, bo;
  RowVector ln1_gain, ln1_bias;
  Matrix w_ff1;
  RowVector b_ff1;
  Matrix w_ff2;
  RowVector b_ff2;
  RowVector ln2_gain, ln2_bias;
};

/// Post-norm transformer encoder with learned absolute positions and a
/// tanh pooler over the CLS state.
struct EncoderParams {
  EncoderConfig config;
  Matrix word_embeddings;      // vocab x d
  Matrix position_embeddings;  // max_tokens x d
  std::vector<EncoderLayer> layers;
  Matrix pooler_weight;  // d x d
  RowVector pooler_bias;

  /// Uniform [-0.02, 0.02] for every tensor except layer-norm gains (1) and biases (0).
  static EncoderParams init(const EncoderConfig& cfg, Rng& rng);
  static EncoderParams zeros(const EncoderConfig& cfg);
};

struct EncoderLayerTrace {
  Matrix input;  // n x d
  Matrix q;      // rows x d, rows = query rows kept for this layer
  Matrix k, v;   // n x d
  std::vector<Matrix> probs;  // per head, rows x n
  Matrix context;             // rows x d
  Matrix attn_drop;           // dropout scale factors, empty when disabled
  LayerNormCache<double> ln1;
  Matrix x1;      // rows x d
  Matrix ff_pre;  // rows x d_ff
  Matrix ff_act;
  Matrix ff_drop;
  LayerNormCache<double> ln2;
};

struct EncoderTrace {
  std::vector<int> tokens;
  std::vector<int> positions;
  std::vector<std::uint8_t> key_mask;
  std::vector<EncoderLayerTrace> layers;
  RowVector cls_state;
  RowVector pooled;
};

/// h_S for a model input. Positions after the last unmasked one are never
/// read, so PAD ids there cannot affect the result.
/// Dropout is applied only when `dropout_rng` is non-null and the rate is > 0.
RowVector encode_sequence(const ModelInput& input, const EncoderParams& p, EncoderTrace* trace = nullptr,
                          Rng* dropout_rng = nullptr);

/// h_v: the item encoded as a one-item sequence.
RowVector encode_item(const TokenizedItem& item, const EncoderParams& p, EncoderTrace* trace = nullptr,
                      Rng* dropout_rng = nullptr);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(h).
void encode_backward(const EncoderTrace& trace, const EncoderParams& p, const RowVector& d_h, EncoderParams& grads);

}  // namespace xdrec
