#include "helpers.hpp"

#include "xdrec/optim.hpp"
#include "xdrec/pipeline.hpp"

#include <cmath>

using namespace xdrec;
using namespace testing;

TEST_CASE("Adam follows the scalar bias-corrected recurrence") {
  double x = 0.7;
  Matrix value(1, 1);
  value(0, 0) = x;
  AdamState opt;
  const double lr = 0.01;
  double m = 0, v = 0;
  Rng rng(51);
  for (int t = 1; t <= 25; ++t) {
    const double g = uniform(rng, -2.0, 2.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    Gradients grads{{"x", Matrix::Constant(1, 1, g)}};
    adam_step({TensorRef{"x", value.data(), 1, 1}}, grads, opt, lr);
    CHECK(std::abs(value(0, 0) - x) <= 1e-14);
  }
  CHECK(opt.step == 25);
}

TEST_CASE("Adam leaves tensors without gradients alone and keeps no moments for them") {
  Matrix a = Matrix::Ones(2, 2), b = Matrix::Ones(2, 2);
  AdamState opt;
  adam_step({TensorRef{"a", a.data(), 2, 2}, TensorRef{"b", b.data(), 2, 2}}, {{"a", Matrix::Ones(2, 2)}}, opt, 0.1);
  CHECK(a(0, 0) < 1.0);
  CHECK(b == Matrix::Ones(2, 2));
  CHECK(opt.first_moment.count("b") == 0);
  CHECK(opt.second_moment.count("b") == 0);
}

TEST_CASE("tensor names are unique and the freeze masks cover the right tensors") {
  const Model m = Model::init(tiny_model_config(), 1);
  std::set<std::string> names;
  for (const auto& t : tensors(m)) CHECK(names.insert(t.name).second);
  const FreezeMask pre = freeze_mask_for_stage(m, Stage::Pretrain);
  CHECK(pre.empty());
  CHECK(freeze_mask_for_stage(m, Stage::Pretrain, true) == FreezeMask{"encoder.word_embeddings"});
  const FreezeMask tune = freeze_mask_for_stage(m, Stage::Tune);
  for (const auto& n : names) {
    const bool frozen = n.starts_with("encoder.") || n.starts_with("prompt.shared.");
    CHECK_MESSAGE(tune.count(n) == (frozen ? 1u : 0u), n);
  }
  CHECK(tune.count("prompt.shared.prompts") == 1);
  CHECK(tune.count("prompt.shared.attn.wq") == 1);
}

TEST_CASE("collect_gradients skips frozen tensors and rejects non-finite entries") {
  const ModelConfig mc = tiny_model_config();
  Model g = Model::zeros(mc);
  const FreezeMask frozen = freeze_mask_for_stage(g, Stage::Tune);
  const Gradients grads = collect_gradients(g, frozen);
  for (const auto& [name, m] : grads) CHECK(frozen.count(name) == 0);
  CHECK(grads.count("fusion.w1") == 1);
  CHECK(grads.count("encoder.word_embeddings") == 0);
  g.prompt.fusion.b1(0) = std::nan("");
  CHECK_THROWS_WITH_AS(collect_gradients(g, frozen), doctest::Contains("fusion.b1"), NumericError);
}

TEST_CASE("a full tuning run leaves frozen tensors bitwise unchanged and moves the rest") {
  const RunConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  const Model start = Model::init(cfg.model_config(data.vocab.size()), cfg.seed);
  const Model tuned = run_prompt_tune(start, data, cfg.stage(Stage::Tune)).model;
  const FreezeMask frozen = freeze_mask_for_stage(start, Stage::Tune);
  const auto before = tensors(start);
  const auto after = tensors(tuned);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CAPTURE(before[i].name);
    const bool same = std::equal(before[i].data, before[i].data + before[i].size(), after[i].data);
    CHECK(same == (frozen.count(before[i].name) == 1));
  }
}
