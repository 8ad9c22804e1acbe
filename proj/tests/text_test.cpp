#include "helpers.hpp"

#include "xdrec/text.hpp"

using namespace xdrec;
using namespace testing;

namespace {

Corpus word_corpus(const std::vector<std::string>& titles) {
  Corpus c;
  c.domains = {{0, "d"}};
  c.target_domain = 0;
  c.items.emplace_back();
  for (std::size_t i = 0; i < titles.size(); ++i) c.items[0].push_back({0, static_cast<int>(i), titles[i]});
  return c;
}

TokenizedItem item_of(int id, std::vector<int> tokens) { return {0, id, std::move(tokens)}; }

}  // namespace

TEST_CASE("tokenizer lowercases and splits on punctuation") {
  CHECK(tokenize_text("Red, BLUE-green  sky!") == std::vector<std::string>{"red", "blue", "green", "sky"});
  CHECK(tokenize_text("  ").empty());
}

TEST_CASE("vocabulary ids follow frequency then spelling, reserved ids fixed") {
  const Vocab v = build_vocab(word_corpus({"b a", "a c", "a b"}), 1);
  CHECK(v.size() == Vocab::kNumReserved + 3);
  CHECK(v.token(Vocab::kPad) == "[PAD]");
  CHECK(v.token(Vocab::kCls) == "[CLS]");
  CHECK(v.token(Vocab::kUnk) == "[UNK]");
  CHECK(v.lookup("a") == 3);
  CHECK(v.lookup("b") == 4);
  CHECK(v.lookup("c") == 5);
  CHECK(v.lookup("zzz") == Vocab::kUnk);
  CHECK(v.count(3) == 3);

  const Vocab pruned = build_vocab(word_corpus({"b a", "a c", "a b"}), 2);
  CHECK_FALSE(pruned.contains("c"));
  CHECK(pruned.size() == Vocab::kNumReserved + 2);
}

TEST_CASE("vocabulary serialization round-trips with a stable digest") {
  const Vocab v = build_vocab(word_corpus({"one two", "two three"}), 1);
  const Vocab back = Vocab::from_json(v.to_json());
  CHECK(back == v);
  CHECK(back.digest() == v.digest());
  CHECK(v.digest() != build_vocab(word_corpus({"one two"}), 1).digest());
  CHECK_THROWS(Vocab::from_json("[1,2"));
}

TEST_CASE("titles are truncated to L tokens and fall back to UNK") {
  const Vocab v = build_vocab(word_corpus({"a b c d e f g"}), 1);
  const TokenizedItem t = tokenize_title("a b c d e f g", v, 5);
  CHECK(t.tokens == std::vector<int>{v.lookup("a"), v.lookup("b"), v.lookup("c"), v.lookup("d"), v.lookup("e")});
  CHECK(tokenize_title("qq rr", v, 5).tokens == std::vector<int>{Vocab::kUnk});
  // out-of-vocabulary words are skipped, not replaced
  CHECK(tokenize_title("qq a", v, 5).tokens == std::vector<int>{v.lookup("a")});
}

TEST_CASE("assemble_input lays out CLS, items oldest first, then PAD") {
  const std::vector<TokenizedItem> cat{item_of(0, {3, 4}), item_of(1, {5, 6}), item_of(2, {7, 8})};
  const std::vector<int> ids{0, 1, 2};
  const ModelInput in = assemble_input(ids, cat, {8, 50, 10});
  CHECK(in.tokens == std::vector<int>{Vocab::kCls, 3, 4, 5, 6, 7, 8, 0, 0, 0});
  CHECK(in.mask == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 1, 0, 0, 0});
  CHECK(in.item_offsets == std::vector<int>{1, 3, 5});
  CHECK(in.length() == 7);
}

TEST_CASE("assemble_input keeps the most recent items within both budgets") {
  std::vector<TokenizedItem> cat;
  std::vector<int> ids;
  for (int i = 0; i < 60; ++i) {
    cat.push_back(item_of(i, {3 + i % 5}));
    ids.push_back(i);
  }
  const ModelInput in = assemble_input(ids, cat, {8, 50, 256});
  CHECK(in.num_items() == 50);
  CHECK(in.tokens[1] == 3 + 10 % 5);

  std::vector<TokenizedItem> wide{item_of(0, {3, 3, 3, 3}), item_of(1, {4, 4, 4, 4}), item_of(2, {5, 5, 5, 5})};
  const std::vector<int> all{0, 1, 2};
  const ModelInput fit = assemble_input(all, wide, {8, 50, 10});
  CHECK(fit.num_items() == 2);
  CHECK(fit.tokens == std::vector<int>{Vocab::kCls, 4, 4, 4, 4, 5, 5, 5, 5, 0});
}

TEST_CASE("assemble_input rejects items that cannot fit and empty histories") {
  std::vector<TokenizedItem> cat{item_of(0, {3, 3, 3, 3, 3})};
  const std::vector<int> ids{0};
  CHECK_THROWS_AS(assemble_input(ids, cat, {8, 50, 5}), ConfigError);
  CHECK_NOTHROW(assemble_input(ids, cat, {8, 50, 6}));
  CHECK_THROWS_AS(assemble_input(std::span<const int>{}, cat, {8, 50, 6}), DataError);
}

TEST_CASE("assembled inputs satisfy the layout invariants") {
  SynthConfig cfg;
  cfg.users_per_domain = 20;
  const Corpus c = generate_synthetic(cfg);
  const Vocab v = build_vocab(c, 1);
  const InputLimits limits{4, 6, 24};
  for (const auto& s : c.sequences) {
    const ModelInput in = assemble_input(s, c, v, limits);
    REQUIRE(static_cast<int>(in.tokens.size()) == limits.max_tokens);
    CHECK(in.tokens[0] == Vocab::kCls);
    CHECK(in.num_items() <= limits.max_items);
    for (std::size_t i = 0; i < in.tokens.size(); ++i) {
      CHECK((in.mask[i] == 1) == (in.tokens[i] != Vocab::kPad));
      if (i > 0) CHECK(in.tokens[i] != Vocab::kCls);
    }
  }
}

TEST_CASE("item_input is CLS plus the item") {
  const ModelInput in = item_input(item_of(4, {7, 9}), 6);
  CHECK(in.tokens == std::vector<int>{Vocab::kCls, 7, 9, 0, 0, 0});
}
