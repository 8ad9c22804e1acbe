#pragma once

#include "xdrec/common.hpp"

#include <optional>
#include <vector>

namespace xdrec {

struct PromptConfig {
  int prompt_rows = 2;  // d_W
  int n_heads = 2;
  int fusion_hidden = 0;  // 0 means d_model
  bool use_shared = true;
  bool use_specific = true;
  // false replaces co-attention by the unweighted mean of the prompt rows.
  bool coattention = true;

  void validate(int d_model) const;
  int hidden_width(int d_model) const { return fusion_hidden > 0 ? fusion_hidden : d_model; }
  int fusion_input_width(int d_model) const {
    return d_model * (1 + (use_shared ? 1 : 0) + (use_specific ? 1 : 0));
  }
  bool operator==(const PromptConfig&) const = default;
};

/// One multi-head attention branch: the representation queries the prompt rows.
struct CoAttentionBranch {
  Matrix wq, wk, wv, wo;  // d x d each
  int n_heads = 1;
};

struct PromptSide {
  Matrix prompts;  // d_W x d
  std::optional<CoAttentionBranch> attention;  // absent in mean-pooling mode
};

struct FusionParams {
  Matrix w1;  // fusion_input_width x hidden
  RowVector b1;
  Matrix w2;  // hidden x d
  RowVector b2;
};

struct PromptModule {
  PromptConfig config;
  std::optional<PromptSide> shared;
  std::optional<PromptSide> specific;
  FusionParams fusion;

  /// Prompts uniform in [-0.02, 0.02]; projections Glorot-uniform; biases zero.
  static PromptModule init(const PromptConfig& cfg, int d_model, Rng& rng);
  static PromptModule zeros(const PromptConfig& cfg, int d_model);
};

struct BranchTrace {
  RowVector q;   // 1 x d
  Matrix k, v;   // d_W x d
  std::vector<RowVector> probs;  // per head, 1 x d_W
  RowVector context;
};

/// Pooled prompt vector for representation `h`: h*W_Q queries P*W_K / P*W_V,
/// per-head scaled dot-product attention, heads concatenated, then W_O.
RowVector attend_prompts(const RowVector& h, const Matrix& prompts, const CoAttentionBranch& b,
                         BranchTrace* trace = nullptr);

/// Returns d(loss)/d(h); accumulates parameter gradients into `g_prompts` / `g_branch`.
RowVector attend_prompts_backward(const RowVector& h, const Matrix& prompts, const CoAttentionBranch& b,
                                  const BranchTrace& trace, const RowVector& d_out, Matrix& g_prompts,
                                  CoAttentionBranch& g_branch);

struct FusionTrace {
  RowVector input;  // concatenation
  RowVector pre;    // before the rectifier
  RowVector act;
};

/// MLP over concat(parts...) in the given order: relu(x W1 + b1) W2 + b2.
RowVector fuse(const std::vector<const RowVector*>& parts, const FusionParams& f, FusionTrace* trace = nullptr);
RowVector fuse(const RowVector& h, const RowVector& p_shared, const RowVector& p_specific, const FusionParams& f);

struct EnhanceTrace {
  RowVector h;
  RowVector p_shared, p_specific;
  std::optional<BranchTrace> shared, specific;
  FusionTrace fusion;
};

/// h'' = fuse(h, attend(h, P_shared), attend(h, P_spec)), dropping the parts a
/// variant disables. Applies identically to sequence and item representations.
RowVector enhance(const RowVector& h, const PromptModule& m, EnhanceTrace* trace = nullptr);

/// Row-by-row enhance; row i of the result never depends on other rows.
Matrix enhance_rows(const Matrix& h, const PromptModule& m);

/// Returns d(loss)/d(h); accumulates into `g`.
RowVector enhance_backward(const EnhanceTrace& trace, const PromptModule& m, const RowVector& d_out,
                           PromptModule& g);

}  // namespace xdrec
