#include "xdrec/model.hpp"

namespace xdrec {

void ModelConfig::validate() const {
  encoder.validate();
  prompt.validate(encoder.d_model);
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng enc_rng = make_rng(seed, "init.encoder");
  Rng prompt_rng = make_rng(seed, "init.prompt");
  return {EncoderParams::init(cfg.encoder, enc_rng), PromptModule::init(cfg.prompt, cfg.encoder.d_model, prompt_rng)};
}

Model Model::zeros(const ModelConfig& cfg) {
  return {EncoderParams::zeros(cfg.encoder), PromptModule::zeros(cfg.prompt, cfg.encoder.d_model)};
}

namespace {

template <typename Derived>
void add(std::vector<TensorRef>& out, std::string name, Eigen::PlainObjectBase<Derived>& t) {
  out.push_back({std::move(name), t.data(), t.rows(), t.cols()});
}

void add_side(std::vector<TensorRef>& out, const std::string& prefix, PromptSide& s) {
  add(out, prefix + ".prompts", s.prompts);
  if (s.attention) {
    add(out, prefix + ".attn.wq", s.attention->wq);
    add(out, prefix + ".attn.wk", s.attention->wk);
    add(out, prefix + ".attn.wv", s.attention->wv);
    add(out, prefix + ".attn.wo", s.attention->wo);
  }
}

}  // namespace

std::vector<TensorRef> tensors(Model& m) {
  std::vector<TensorRef> out;
  auto& e = m.encoder;
  add(out, "encoder.word_embeddings", e.word_embeddings);
  add(out, "encoder.position_embeddings", e.position_embeddings);
  for (std::size_t l = 0; l < e.layers.size(); ++l) {
    auto& L = e.layers[l];
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    add(out, p + "attn.wq", L.wq);
    add(out, p + "attn.bq", L.bq);
    add(out, p + "attn.wk", L.wk);
    add(out, p + "attn.bk", L.bk);
    add(out, p + "attn.wv", L.wv);
    add(out, p + "attn.bv", L.bv);
    add(out, p + "attn.wo", L.wo);
    add(out, p + "attn.bo", L.bo);
    add(out, p + "ln1.gain", L.ln1_gain);
    add(out, p + "ln1.bias", L.ln1_bias);
    add(out, p + "ffn.w1", L.w_ff1);
    add(out, p + "ffn.b1", L.b_ff1);
    add(out, p + "ffn.w2", L.w_ff2);
    add(out, p + "ffn.b2", L.b_ff2);
    add(out, p + "ln2.gain", L.ln2_gain);
    add(out, p + "ln2.bias", L.ln2_bias);
  }
  add(out, "encoder.pooler.weight", e.pooler_weight);
  add(out, "encoder.pooler.bias", e.pooler_bias);
  if (m.prompt.shared) add_side(out, "prompt.shared", *m.prompt.shared);
  if (m.prompt.specific) add_side(out, "prompt.specific", *m.prompt.specific);
  add(out, "fusion.w1", m.prompt.fusion.w1);
  add(out, "fusion.b1", m.prompt.fusion.b1);
  add(out, "fusion.w2", m.prompt.fusion.w2);
  add(out, "fusion.b2", m.prompt.fusion.b2);
  return out;
}

std::vector<TensorRef> tensors(const Model& m) { return tensors(const_cast<Model&>(m)); }

const char* to_string(Stage s) { return s == Stage::Pretrain ? "pretrain" : "tune"; }

Stage stage_from_string(const std::string& s) {
  if (s == "pretrain") return Stage::Pretrain;
  if (s == "tune") return Stage::Tune;
  throw ConfigError("unknown stage \"" + s + "\"");
}

FreezeMask freeze_mask_for_stage(const Model& m, Stage stage, bool freeze_word_embeddings) {
  FreezeMask frozen;
  for (const auto& t : tensors(m)) {
    const bool encoder = t.name.starts_with("encoder.");
    if (stage == Stage::Pretrain) {
      if (freeze_word_embeddings && t.name == "encoder.word_embeddings") frozen.insert(t.name);
    } else if (encoder || t.name.starts_with("prompt.shared.")) {
      frozen.insert(t.name);
    }
  }
  return frozen;
}

Gradients collect_gradients(const Model& grad, const FreezeMask& frozen) {
  Gradients out;
  for (const auto& t : tensors(grad)) {
    if (frozen.contains(t.name)) continue;
    Matrix g = t.map();
    if (!g.allFinite()) throw NumericError("non-finite gradient in tensor " + t.name);
    out.emplace(t.name, std::move(g));
  }
  return out;
}

}  // namespace xdrec
