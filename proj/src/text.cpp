#include "xdrec/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <unordered_map>

namespace xdrec {

using nlohmann::json;

std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocab::Vocab() {
  add("[PAD]", 0);
  add("[CLS]", 0);
  add("[UNK]", 0);
}

void Vocab::add(std::string token, std::int64_t count) {
  const int id = size();
  ids_.emplace(token, id);
  tokens_.push_back(std::move(token));
  counts_.push_back(count);
}

int Vocab::lookup(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::string Vocab::to_json() const {
  json arr = json::array();
  for (int i = 0; i < size(); ++i)
    arr.push_back({{"token", tokens_[static_cast<std::size_t>(i)]}, {"id", i}, {"count", counts_[static_cast<std::size_t>(i)]}});
  return json{{"min_count", min_count_}, {"tokens", arr}}.dump();
}

Vocab Vocab::from_json(std::string_view text) {
  Vocab v;
  try {
    const json j = json::parse(text);
    v.min_count_ = j.at("min_count").get<int>();
    const auto& arr = j.at("tokens");
    if (arr.size() < kNumReserved) throw DataError("vocab is missing reserved tokens");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& e = arr[i];
      if (e.at("id").get<std::size_t>() != i) throw DataError("vocab ids must be dense and ordered");
      const auto tok = e.at("token").get<std::string>();
      if (i < kNumReserved) {
        if (tok != v.tokens_[i]) throw DataError("vocab reserved token mismatch at id " + std::to_string(i));
        continue;
      }
      v.add(tok, e.at("count").get<std::int64_t>());
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed vocab: ") + e.what());
  }
  return v;
}

std::string Vocab::digest() const { return hex64(fnv1a64(to_json())); }

Vocab build_vocab(const Corpus& c, int min_count) {
  std::unordered_map<std::string, std::int64_t> freq;
  for (const auto& items : c.items)
    for (const auto& it : items)
      for (auto& tok : tokenize_text(it.title)) ++freq[tok];
  std::vector<std::pair<std::string, std::int64_t>> entries;
  for (auto& [tok, n] : freq)
    if (n >= min_count) entries.emplace_back(tok, n);
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
  Vocab v;
  v.min_count_ = min_count;
  for (auto& [tok, n] : entries) v.add(std::move(tok), n);
  return v;
}

TokenizedItem tokenize_title(std::string_view title, const Vocab& v, int max_len) {
  if (max_len < 1) throw ConfigError("title length limit must be >= 1");
  TokenizedItem out;
  for (const auto& tok : tokenize_text(title)) {
    if (static_cast<int>(out.tokens.size()) == max_len) break;
    const int id = v.lookup(tok);
    if (id != Vocab::kUnk) out.tokens.push_back(id);
  }
  if (out.tokens.empty()) out.tokens.push_back(Vocab::kUnk);
  return out;
}

std::vector<std::vector<TokenizedItem>> tokenize_catalog(const Corpus& c, const Vocab& v, int max_len) {
  std::vector<std::vector<TokenizedItem>> out(c.items.size());
  for (std::size_t d = 0; d < c.items.size(); ++d)
    for (const auto& it : c.items[d]) {
      TokenizedItem t = tokenize_title(it.title, v, max_len);
      t.domain = it.domain;
      t.item_id = it.item_id;
      out[d].push_back(std::move(t));
    }
  return out;
}

int ModelInput::length() const {
  int n = 0;
  while (n < static_cast<int>(mask.size()) && mask[static_cast<std::size_t>(n)]) ++n;
  return n;
}

ModelInput assemble_input(std::span<const TokenizedItem* const> history, int max_items, int max_tokens) {
  if (history.empty()) throw DataError("cannot assemble an input from an empty sequence");
  if (max_items < 1 || max_tokens < 2) throw ConfigError("max_items must be >= 1 and max_tokens >= 2");
  for (const TokenizedItem* it : history)
    if (static_cast<int>(it->tokens.size()) > max_tokens - 1)
      throw ConfigError("item " + std::to_string(it->item_id) + " has " + std::to_string(it->tokens.size()) +
                        " tokens, more than max_tokens - 1 = " + std::to_string(max_tokens - 1));

  // Walk back from the most recent item while both budgets allow.
  std::size_t first = history.size();
  int used = 1;
  while (first > 0 && static_cast<int>(history.size() - first) < max_items) {
    const int need = static_cast<int>(history[first - 1]->tokens.size());
    if (used + need > max_tokens) break;
    used += need;
    --first;
  }

  ModelInput in;
  in.tokens.reserve(static_cast<std::size_t>(max_tokens));
  in.tokens.push_back(Vocab::kCls);
  for (std::size_t i = first; i < history.size(); ++i) {
    in.item_offsets.push_back(static_cast<int>(in.tokens.size()));
    in.tokens.insert(in.tokens.end(), history[i]->tokens.begin(), history[i]->tokens.end());
  }
  in.mask.assign(in.tokens.size(), 1);
  in.tokens.resize(static_cast<std::size_t>(max_tokens), Vocab::kPad);
  in.mask.resize(static_cast<std::size_t>(max_tokens), 0);
  in.positions.resize(static_cast<std::size_t>(max_tokens));
  for (int i = 0; i < max_tokens; ++i) in.positions[static_cast<std::size_t>(i)] = i;
  return in;
}

ModelInput assemble_input(std::span<const int> item_ids, const std::vector<TokenizedItem>& catalog,
                          const InputLimits& limits) {
  std::vector<const TokenizedItem*> history;
  history.reserve(item_ids.size());
  for (int id : item_ids) history.push_back(&catalog.at(static_cast<std::size_t>(id)));
  return assemble_input(history, limits.max_items, limits.max_tokens);
}

ModelInput assemble_input(const UserSequence& seq, const Corpus& c, const Vocab& v, const InputLimits& limits) {
  std::vector<TokenizedItem> items;
  items.reserve(seq.events.size());
  for (const auto& e : seq.events) {
    const auto& rec = c.items.at(static_cast<std::size_t>(seq.domain)).at(static_cast<std::size_t>(e.item_id));
    TokenizedItem t = tokenize_title(rec.title, v, limits.title_len);
    t.domain = seq.domain;
    t.item_id = e.item_id;
    items.push_back(std::move(t));
  }
  std::vector<const TokenizedItem*> history;
  for (const auto& t : items) history.push_back(&t);
  return assemble_input(history, limits.max_items, limits.max_tokens);
}

ModelInput item_input(const TokenizedItem& item, int max_tokens) {
  const TokenizedItem* one = &item;
  return assemble_input(std::span<const TokenizedItem* const>(&one, 1), 1, max_tokens);
}

}  // namespace xdrec
