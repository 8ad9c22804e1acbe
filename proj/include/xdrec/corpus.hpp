#pragma once

#include "xdrec/common.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace xdrec {

struct Domain {
  int id = 0;
  std::string name;

  bool operator==(const Domain&) const = default;
};

struct ItemRecord {
  int domain = 0;
  int item_id = 0;
  std::string title;

  bool operator==(const ItemRecord&) const = default;
};

struct Interaction {
  int item_id = 0;
  std::int64_t ts = 0;

  bool operator==(const Interaction&) const = default;
};

struct UserSequence {
  int domain = 0;
  int user_id = 0;
  // External identity, used only to detect users shared between domains.
  // Never serialized and never seen by the model.
  std::string user_key;
  std::vector<Interaction> events;

  std::vector<int> item_ids() const;
  bool operator==(const UserSequence&) const = default;
};

/// Multi-domain interaction corpus. Domain ids, item ids (per domain) and
/// user ids (per domain) are dense. `sequences` is ordered by (domain, user_id).
struct Corpus {
  std::vector<Domain> domains;
  int target_domain = -1;
  std::vector<std::vector<ItemRecord>> items;  // items[domain][item_id]
  std::vector<UserSequence> sequences;
  // Generator-only sidecar: latent topic of items[d][i]. Empty for ingested data.
  std::vector<std::vector<int>> latent_topics;

  int num_domains() const { return static_cast<int>(domains.size()); }
  int num_items(int domain) const { return static_cast<int>(items.at(static_cast<std::size_t>(domain)).size()); }
  std::size_t num_users(int domain) const;
  std::size_t num_interactions() const;
  bool empty() const { return sequences.empty(); }
  int domain_id(const std::string& name) const;

  bool operator==(const Corpus&) const = default;
};

/// Diagnostics sink; functions append human-readable warnings when non-null.
using Warnings = std::vector<std::string>;

/// Reads JSON-lines events {"domain","user","item","title","ts"}.
/// Domains, items and users receive dense ids in lexicographic order of their
/// external keys, so the result does not depend on line order. The target
/// domain is `target` when given, else the last domain.
Corpus ingest_events(const std::filesystem::path& path, const std::string& target = {},
                     Warnings* warnings = nullptr);
Corpus ingest_events(const std::vector<std::filesystem::path>& paths, const std::string& target = {},
                     Warnings* warnings = nullptr);

struct FilterOptions {
  int min_seq_len = 5;
  int min_item_freq = 5;
  // 0 = repeat sweeps until nothing changes.
  int max_sweeps = 0;
};

/// Drops items with fewer than min_item_freq distinct users, then users with
/// fewer than min_seq_len remaining events. Ids are re-densified afterwards.
Corpus filter_corpus(const Corpus& c, const FilterOptions& opts = {});
Corpus filter_corpus(const Corpus& c, int min_seq_len, int min_item_freq);

struct OverlapReport {
  std::vector<std::string> removed_keys;  // sorted
};

/// Removes every user whose external key occurs in two or more domains.
std::pair<Corpus, OverlapReport> enforce_non_overlap(const Corpus& c);

struct UserSplit {
  int domain = 0;
  int user_id = 0;
  std::vector<int> train;  // oldest first
  int validation = 0;
  int test = 0;

  bool operator==(const UserSplit&) const = default;
};

struct CorpusSplit {
  std::vector<UserSplit> users;

  std::vector<const UserSplit*> in_domain(int domain) const;
};

/// Leave-one-out: last item is the test target, penultimate the validation
/// target. Sequences shorter than 3 are excluded with a warning.
CorpusSplit split_leave_one_out(const Corpus& c, Warnings* warnings = nullptr);

struct SynthConfig {
  int num_domains = 3;
  int items_per_domain = 50;
  int users_per_domain = 200;
  int num_topics = 8;
  double shared_topic_fraction = 0.5;
  int title_len_min = 3;
  int title_len_max = 5;
  int seq_len_min = 7;
  int seq_len_max = 12;
  int words_per_topic = 8;
  double preference_concentration = 0.2;  // symmetric Dirichlet parameter
  double stop_word_prob = 0.3;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

/// Words that may appear in titles of every domain regardless of topic sharing.
const std::vector<std::string>& stop_words();

/// Deterministic multi-domain corpus with a controllable fraction of topics
/// whose vocabulary is shared across domains.
Corpus generate_synthetic(const SynthConfig& cfg);

/// Corpus cache: items.jsonl, sequences.jsonl, meta.json (+ latent_topics.json).
void save_corpus(const std::filesystem::path& dir, const Corpus& c, const std::string& meta_json = "{}");
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace xdrec
