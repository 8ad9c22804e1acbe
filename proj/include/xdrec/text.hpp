#pragma once

#include "xdrec/corpus.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xdrec {

/// Lowercased tokens of `text`, split on whitespace and ASCII punctuation.
std::vector<std::string> tokenize_text(std::string_view text);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kUnk = 2;
  static constexpr int kNumReserved = 3;

  Vocab();

  int size() const { return static_cast<int>(tokens_.size()); }
  int min_count() const { return min_count_; }
  /// Id of `token`, or kUnk.
  int lookup(std::string_view token) const;
  bool contains(std::string_view token) const { return ids_.find(std::string(token)) != ids_.end(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::int64_t count(int id) const { return counts_.at(static_cast<std::size_t>(id)); }

  /// JSON array of {token, id, count}, ordered by id.
  std::string to_json() const;
  static Vocab from_json(std::string_view text);
  /// Stable digest of the serialized form.
  std::string digest() const;

  bool operator==(const Vocab&) const = default;

  friend Vocab build_vocab(const Corpus& c, int min_count);

 private:
  std::map<std::string, int, std::less<>> ids_;
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> counts_;
  int min_count_ = 1;

  void add(std::string token, std::int64_t count);
};

/// Vocabulary over all item titles. Ids after the reserved ones are ordered by
/// frequency (descending) then lexicographically.
Vocab build_vocab(const Corpus& c, int min_count);

struct TokenizedItem {
  int domain = 0;
  int item_id = 0;
  std::vector<int> tokens;  // 1..L ids, never CLS

  bool operator==(const TokenizedItem&) const = default;
};

/// First `max_len` in-vocabulary tokens of `title`; a title with none maps to [UNK].
TokenizedItem tokenize_title(std::string_view title, const Vocab& v, int max_len);

/// Tokenized catalog: result[d][item_id].
std::vector<std::vector<TokenizedItem>> tokenize_catalog(const Corpus& c, const Vocab& v, int max_len);

struct InputLimits {
  int title_len = 8;   // L
  int max_items = 50;
  int max_tokens = 256;
};

struct ModelInput {
  std::vector<int> tokens;        // CLS first, PAD-filled to max_tokens
  std::vector<int> item_offsets;  // start position of each kept item
  std::vector<std::uint8_t> mask; // 1 on non-PAD positions
  std::vector<int> positions;

  /// Number of leading non-PAD positions.
  int length() const;
  int num_items() const { return static_cast<int>(item_offsets.size()); }
};

/// [CLS] followed by the most recent items (oldest first), truncated whole-item
/// from the oldest end to respect both limits, then padded.
/// Throws ConfigError if one item alone exceeds max_tokens - 1.
ModelInput assemble_input(std::span<const TokenizedItem* const> history, int max_items, int max_tokens);
ModelInput assemble_input(std::span<const int> item_ids, const std::vector<TokenizedItem>& catalog,
                          const InputLimits& limits);
ModelInput assemble_input(const UserSequence& seq, const Corpus& c, const Vocab& v, const InputLimits& limits);

/// Input for a single item, i.e. [CLS] + its tokens.
ModelInput item_input(const TokenizedItem& item, int max_tokens);

}  // namespace xdrec
