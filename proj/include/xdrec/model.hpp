#pragma once

#include "xdrec/encoder.hpp"
#include "xdrec/prompt.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace xdrec {

struct ModelConfig {
  EncoderConfig encoder;
  PromptConfig prompt;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Text encoder + prompt banks + co-attention branches + fusion MLP.
struct Model {
  EncoderParams encoder;
  PromptModule prompt;

  static Model init(const ModelConfig& cfg, std::uint64_t seed);
  static Model zeros(const ModelConfig& cfg);
  ModelConfig config() const { return {encoder.config, prompt.config}; }
};

/// Mutable view of one named parameter tensor (contiguous, column-major).
struct TensorRef {
  std::string name;
  double* data;
  Index rows;
  Index cols;

  Index size() const { return rows * cols; }
  Eigen::Map<Matrix> map() const { return {data, rows, cols}; }
};

/// Every tensor of the model in a fixed order. Names are unique and stable:
/// "encoder.*", "prompt.shared.*", "prompt.specific.*", "fusion.*".
std::vector<TensorRef> tensors(Model& m);
std::vector<TensorRef> tensors(const Model& m);  // data must not be written through

enum class Stage { Pretrain, Tune };

const char* to_string(Stage s);
Stage stage_from_string(const std::string& s);

using FreezeMask = std::set<std::string>;

/// Pretrain: nothing frozen (optionally the word embeddings). Tune: the
/// encoder, P_shared and the shared branch are frozen.
FreezeMask freeze_mask_for_stage(const Model& m, Stage stage, bool freeze_word_embeddings = false);

/// Named gradients for unfrozen tensors only.
using Gradients = std::map<std::string, Matrix>;

/// Copies the gradient tensors of `grad` that are not frozen. Throws
/// NumericError naming the first tensor holding a non-finite entry.
Gradients collect_gradients(const Model& grad, const FreezeMask& frozen);

}  // namespace xdrec
