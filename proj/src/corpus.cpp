#include "xdrec/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace xdrec {

using nlohmann::json;

std::vector<int> UserSequence::item_ids() const {
  std::vector<int> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.item_id);
  return out;
}

std::size_t Corpus::num_users(int domain) const {
  return static_cast<std::size_t>(
      std::count_if(sequences.begin(), sequences.end(), [&](const UserSequence& s) { return s.domain == domain; }));
}

std::size_t Corpus::num_interactions() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.events.size();
  return n;
}

int Corpus::domain_id(const std::string& name) const {
  for (const auto& d : domains)
    if (d.name == name) return d.id;
  return -1;
}

std::vector<const UserSplit*> CorpusSplit::in_domain(int domain) const {
  std::vector<const UserSplit*> out;
  for (const auto& u : users)
    if (u.domain == domain) out.push_back(&u);
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

struct RawEvent {
  std::string user;
  std::string item;
  std::int64_t ts;
  std::size_t order;  // global input position, for stable tie-breaking
};

struct RawDomain {
  std::map<std::string, std::string> titles;  // item key -> first title
  std::vector<RawEvent> events;
};

std::string require_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(where + ": missing key \"" + key + "\"");
  if (!it->is_string()) throw DataError(where + ": key \"" + std::string(key) + "\" must be a string");
  return it->get<std::string>();
}

void read_events(const std::filesystem::path& path, std::map<std::string, RawDomain>& domains, std::size_t& order,
                 Warnings* warnings) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open events file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw DataError(where + ": expected a JSON object");
    const std::string domain = require_string(obj, "domain", where);
    const std::string user = require_string(obj, "user", where);
    const std::string item = require_string(obj, "item", where);
    const std::string title = trim(require_string(obj, "title", where));
    auto ts_it = obj.find("ts");
    if (ts_it == obj.end()) throw DataError(where + ": missing key \"ts\"");
    if (!ts_it->is_number_integer()) throw DataError(where + ": key \"ts\" must be an integer");
    if (title.empty()) throw DataError(where + ": empty title");

    RawDomain& d = domains[domain];
    auto [pos, inserted] = d.titles.emplace(item, title);
    if (!inserted && pos->second != title && warnings) {
      warnings->push_back(where + ": conflicting title for item \"" + item + "\" in domain \"" + domain +
                          "\"; keeping the first");
    }
    d.events.push_back({user, item, ts_it->get<std::int64_t>(), order++});
  }
}

// Re-densify item and user ids after removals; keeps relative order.
Corpus compact(const Corpus& c, const std::vector<std::vector<char>>& keep_item) {
  Corpus out;
  out.domains = c.domains;
  out.target_domain = c.target_domain;
  out.items.resize(c.items.size());
  if (!c.latent_topics.empty()) out.latent_topics.resize(c.latent_topics.size());
  std::vector<std::vector<int>> remap(c.items.size());
  for (std::size_t d = 0; d < c.items.size(); ++d) {
    remap[d].assign(c.items[d].size(), -1);
    for (std::size_t i = 0; i < c.items[d].size(); ++i) {
      if (!keep_item[d][i]) continue;
      remap[d][i] = static_cast<int>(out.items[d].size());
      ItemRecord rec = c.items[d][i];
      rec.item_id = remap[d][i];
      out.items[d].push_back(std::move(rec));
      if (!c.latent_topics.empty()) out.latent_topics[d].push_back(c.latent_topics[d][i]);
    }
  }
  std::vector<int> next_user(c.items.size(), 0);
  for (const auto& s : c.sequences) {
    UserSequence u;
    u.domain = s.domain;
    u.user_key = s.user_key;
    for (const auto& e : s.events) {
      const int id = remap[static_cast<std::size_t>(s.domain)][static_cast<std::size_t>(e.item_id)];
      if (id >= 0) u.events.push_back({id, e.ts});
    }
    if (u.events.empty()) continue;
    u.user_id = next_user[static_cast<std::size_t>(s.domain)]++;
    out.sequences.push_back(std::move(u));
  }
  return out;
}

}  // namespace

Corpus ingest_events(const std::filesystem::path& path, const std::string& target, Warnings* warnings) {
  return ingest_events(std::vector<std::filesystem::path>{path}, target, warnings);
}

Corpus ingest_events(const std::vector<std::filesystem::path>& paths, const std::string& target,
                     Warnings* warnings) {
  std::map<std::string, RawDomain> raw;
  std::size_t order = 0;
  for (const auto& p : paths) read_events(p, raw, order, warnings);

  Corpus c;
  for (auto& [name, rd] : raw) {
    const int d = static_cast<int>(c.domains.size());
    c.domains.push_back({d, name});
    std::map<std::string, int> item_ids;
    auto& items = c.items.emplace_back();
    for (const auto& [key, title] : rd.titles) {
      const int id = static_cast<int>(items.size());
      item_ids.emplace(key, id);
      items.push_back({d, id, title});
    }
    std::map<std::string, std::vector<const RawEvent*>> by_user;
    for (const auto& e : rd.events) by_user[e.user].push_back(&e);
    int user_id = 0;
    for (auto& [key, evs] : by_user) {
      std::stable_sort(evs.begin(), evs.end(), [](const RawEvent* a, const RawEvent* b) {
        return a->ts != b->ts ? a->ts < b->ts : a->order < b->order;
      });
      UserSequence s;
      s.domain = d;
      s.user_id = user_id++;
      s.user_key = key;
      for (const RawEvent* e : evs) s.events.push_back({item_ids.at(e->item), e->ts});
      c.sequences.push_back(std::move(s));
    }
  }
  if (!c.domains.empty()) {
    if (target.empty()) {
      c.target_domain = c.num_domains() - 1;
    } else {
      c.target_domain = c.domain_id(target);
      if (c.target_domain < 0) throw DataError("target domain \"" + target + "\" not present in events");
    }
  }
  return c;
}

Corpus filter_corpus(const Corpus& c, int min_seq_len, int min_item_freq) {
  return filter_corpus(c, FilterOptions{min_seq_len, min_item_freq, 0});
}

Corpus filter_corpus(const Corpus& c, const FilterOptions& opts) {
  Corpus cur = c;
  for (int sweep = 0; opts.max_sweeps == 0 || sweep < opts.max_sweeps; ++sweep) {
    // Pass 1: item frequency in distinct users.
    std::vector<std::vector<char>> keep(cur.items.size());
    for (std::size_t d = 0; d < cur.items.size(); ++d) keep[d].assign(cur.items[d].size(), 0);
    std::vector<std::vector<int>> freq(cur.items.size());
    for (std::size_t d = 0; d < cur.items.size(); ++d) freq[d].assign(cur.items[d].size(), 0);
    for (const auto& s : cur.sequences) {
      std::set<int> seen;
      for (const auto& e : s.events)
        if (seen.insert(e.item_id).second) ++freq[static_cast<std::size_t>(s.domain)][static_cast<std::size_t>(e.item_id)];
    }
    bool changed = false;
    for (std::size_t d = 0; d < cur.items.size(); ++d)
      for (std::size_t i = 0; i < cur.items[d].size(); ++i) {
        keep[d][i] = freq[d][i] >= opts.min_item_freq;
        changed |= !keep[d][i];
      }
    Corpus next = compact(cur, keep);

    // Pass 2: sequence length after item removal.
    const std::size_t before = next.sequences.size();
    std::erase_if(next.sequences,
                  [&](const UserSequence& s) { return static_cast<int>(s.events.size()) < opts.min_seq_len; });
    changed |= next.sequences.size() != before;
    std::vector<int> next_user(next.items.size(), 0);
    for (auto& s : next.sequences) s.user_id = next_user[static_cast<std::size_t>(s.domain)]++;
    changed |= next.sequences.size() != cur.sequences.size();
    cur = std::move(next);
    if (!changed) break;
  }
  return cur;
}

std::pair<Corpus, OverlapReport> enforce_non_overlap(const Corpus& c) {
  std::map<std::string, std::set<int>> domains_of;
  for (const auto& s : c.sequences)
    if (!s.user_key.empty()) domains_of[s.user_key].insert(s.domain);
  OverlapReport report;
  std::set<std::string> removed;
  for (const auto& [key, ds] : domains_of)
    if (ds.size() >= 2) {
      removed.insert(key);
      report.removed_keys.push_back(key);
    }
  Corpus out = c;
  std::erase_if(out.sequences, [&](const UserSequence& s) { return removed.contains(s.user_key); });
  std::vector<int> next_user(out.items.size(), 0);
  for (auto& s : out.sequences) s.user_id = next_user[static_cast<std::size_t>(s.domain)]++;
  return {std::move(out), std::move(report)};
}

CorpusSplit split_leave_one_out(const Corpus& c, Warnings* warnings) {
  CorpusSplit split;
  for (const auto& s : c.sequences) {
    const auto n = s.events.size();
    if (n < 3) {
      if (warnings)
        warnings->push_back("user " + std::to_string(s.user_id) + " in domain " + std::to_string(s.domain) +
                            " has " + std::to_string(n) + " interactions; excluded from the split");
      continue;
    }
    UserSplit u;
    u.domain = s.domain;
    u.user_id = s.user_id;
    for (std::size_t i = 0; i + 2 < n; ++i) u.train.push_back(s.events[i].item_id);
    u.validation = s.events[n - 2].item_id;
    u.test = s.events[n - 1].item_id;
    split.users.push_back(std::move(u));
  }
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SynthConfig::validate() const {
  std::vector<std::string> bad;
  if (num_domains < 1) bad.emplace_back("num_domains");
  if (items_per_domain < 1) bad.emplace_back("items_per_domain");
  if (users_per_domain < 1) bad.emplace_back("users_per_domain");
  if (num_topics < 1) bad.emplace_back("num_topics");
  if (!(shared_topic_fraction >= 0.0 && shared_topic_fraction <= 1.0)) bad.emplace_back("shared_topic_fraction");
  if (title_len_min < 1 || title_len_max < title_len_min) bad.emplace_back("title_len_range");
  if (seq_len_min < 1 || seq_len_max < seq_len_min) bad.emplace_back("seq_len_range");
  if (words_per_topic < 1) bad.emplace_back("words_per_topic");
  if (!(preference_concentration > 0.0)) bad.emplace_back("preference_concentration");
  if (!(stop_word_prob >= 0.0 && stop_word_prob <= 1.0)) bad.emplace_back("stop_word_prob");
  if (!bad.empty()) {
    std::string msg = "invalid synthetic config:";
    for (const auto& b : bad) msg += " " + b;
    throw ConfigError(msg);
  }
}

const std::vector<std::string>& stop_words() {
  static const std::vector<std::string> words{"the", "and", "for", "with", "set"};
  return words;
}

namespace {

double standard_normal(Rng& rng) {
  // Box-Muller on engine bits; std::normal_distribution is library-specific.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Marsaglia-Tsang, with the alpha < 1 boost.
double gamma_draw(Rng& rng, double alpha) {
  if (alpha < 1.0) {
    const double u = 1.0 - uniform01(rng);
    return gamma_draw(rng, alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x;
    double v;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - uniform01(rng);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

std::string make_word(Rng& rng) {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  const std::size_t syllables = 2 + uniform_index(rng, 2);
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += consonants[uniform_index(rng, consonants.size())];
    w += vowels[uniform_index(rng, vowels.size())];
  }
  return w;
}

std::vector<std::string> make_bag(Rng& rng, int n, std::set<std::string>& used) {
  std::vector<std::string> bag;
  while (static_cast<int>(bag.size()) < n) {
    std::string w = make_word(rng);
    if (used.insert(w).second) bag.push_back(std::move(w));
  }
  return bag;
}

std::size_t weighted_pick(Rng& rng, const std::vector<double>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) return uniform_index(rng, w.size());
  double r = uniform01(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (r < w[i]) return i;
    r -= w[i];
  }
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0.0) return i;
  return 0;
}

}  // namespace

Corpus generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng words_rng = make_rng(cfg.seed, "synth.words");
  Rng items_rng = make_rng(cfg.seed, "synth.items");
  Rng users_rng = make_rng(cfg.seed, "synth.users");

  const int n_shared = static_cast<int>(std::lround(cfg.shared_topic_fraction * cfg.num_topics));
  std::set<std::string> used(stop_words().begin(), stop_words().end());

  // bags[d][t]: vocabulary of topic t as written in domain d.
  std::vector<std::vector<std::vector<std::string>>> bags(static_cast<std::size_t>(cfg.num_domains));
  std::vector<std::vector<std::string>> shared_bags;
  for (int t = 0; t < n_shared; ++t) shared_bags.push_back(make_bag(words_rng, cfg.words_per_topic, used));
  for (int d = 0; d < cfg.num_domains; ++d) {
    auto& db = bags[static_cast<std::size_t>(d)];
    for (int t = 0; t < cfg.num_topics; ++t)
      db.push_back(t < n_shared ? shared_bags[static_cast<std::size_t>(t)]
                                : make_bag(words_rng, cfg.words_per_topic, used));
  }

  Corpus c;
  for (int d = 0; d < cfg.num_domains; ++d) {
    c.domains.push_back({d, "domain" + std::to_string(d)});
    auto& items = c.items.emplace_back();
    auto& topics = c.latent_topics.emplace_back();
    std::vector<double> popularity;

    std::vector<int> topic_of(static_cast<std::size_t>(cfg.items_per_domain));
    for (int i = 0; i < cfg.items_per_domain; ++i) topic_of[static_cast<std::size_t>(i)] = i % cfg.num_topics;
    for (std::size_t i = topic_of.size(); i > 1; --i) std::swap(topic_of[i - 1], topic_of[uniform_index(items_rng, i)]);

    for (int i = 0; i < cfg.items_per_domain; ++i) {
      const int t = topic_of[static_cast<std::size_t>(i)];
      std::vector<std::string> bag = bags[static_cast<std::size_t>(d)][static_cast<std::size_t>(t)];
      const int len = std::min(cfg.title_len_min + static_cast<int>(uniform_index(
                                   items_rng, static_cast<std::size_t>(cfg.title_len_max - cfg.title_len_min + 1))),
                               static_cast<int>(bag.size()));
      std::string title;
      for (int k = 0; k < len; ++k) {
        const std::size_t j = k + uniform_index(items_rng, bag.size() - static_cast<std::size_t>(k));
        std::swap(bag[static_cast<std::size_t>(k)], bag[j]);
        if (k) title += ' ';
        title += bag[static_cast<std::size_t>(k)];
      }
      if (uniform01(items_rng) < cfg.stop_word_prob)
        title += " " + stop_words()[uniform_index(items_rng, stop_words().size())];
      items.push_back({d, i, title});
      topics.push_back(t);
      popularity.push_back(uniform(items_rng, 0.5, 1.5));
    }

    for (int u = 0; u < cfg.users_per_domain; ++u) {
      std::vector<double> pref(static_cast<std::size_t>(cfg.num_topics));
      for (auto& p : pref) p = gamma_draw(users_rng, cfg.preference_concentration);
      const int len = cfg.seq_len_min +
                      static_cast<int>(uniform_index(users_rng, static_cast<std::size_t>(cfg.seq_len_max - cfg.seq_len_min + 1)));
      std::vector<double> weight(static_cast<std::size_t>(cfg.items_per_domain));
      for (int i = 0; i < cfg.items_per_domain; ++i)
        weight[static_cast<std::size_t>(i)] =
            pref[static_cast<std::size_t>(topic_of[static_cast<std::size_t>(i)])] * popularity[static_cast<std::size_t>(i)];
      UserSequence s;
      s.domain = d;
      s.user_id = u;
      s.user_key = c.domains.back().name + "/u" + std::to_string(u);
      for (int k = 0; k < len && k < cfg.items_per_domain; ++k) {
        const std::size_t pick = weighted_pick(users_rng, weight);
        weight[pick] = 0.0;
        // Zero weight marks the item as consumed even when the fallback picked it.
        s.events.push_back({static_cast<int>(pick), static_cast<std::int64_t>(k)});
        if (std::all_of(weight.begin(), weight.end(), [](double w) { return w == 0.0; })) {
          for (int i = 0; i < cfg.items_per_domain; ++i) {
            const bool taken = std::any_of(s.events.begin(), s.events.end(),
                                           [&](const Interaction& e) { return e.item_id == i; });
            weight[static_cast<std::size_t>(i)] = taken ? 0.0 : 1e-12;
          }
        }
      }
      c.sequences.push_back(std::move(s));
    }
  }
  c.target_domain = cfg.num_domains - 1;
  return c;
}

// ---------------------------------------------------------------------------
// On-disk cache

void save_corpus(const std::filesystem::path& dir, const Corpus& c, const std::string& meta_json) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "items.jsonl", std::ios::binary);
    for (const auto& items : c.items)
      for (const auto& it : items)
        out << json{{"domain", it.domain}, {"item", it.item_id}, {"title", it.title}}.dump() << '\n';
  }
  {
    std::ofstream out(dir / "sequences.jsonl", std::ios::binary);
    for (const auto& s : c.sequences) {
      json items = json::array();
      json ts = json::array();
      for (const auto& e : s.events) {
        items.push_back(e.item_id);
        ts.push_back(e.ts);
      }
      out << json{{"domain", s.domain}, {"user", s.user_id}, {"items", items}, {"ts", ts}}.dump() << '\n';
    }
  }
  json meta = json::parse(meta_json);
  json names = json::array();
  json users = json::array();
  json items = json::array();
  for (const auto& d : c.domains) {
    names.push_back(d.name);
    users.push_back(c.num_users(d.id));
    items.push_back(c.num_items(d.id));
  }
  meta["domains"] = names;
  meta["target_domain"] = c.target_domain;
  meta["users_per_domain"] = users;
  meta["items_per_domain"] = items;
  meta["interactions"] = c.num_interactions();
  {
    std::ofstream out(dir / "meta.json", std::ios::binary);
    out << meta.dump(2) << '\n';
  }
  if (!c.latent_topics.empty()) {
    std::ofstream out(dir / "latent_topics.json", std::ios::binary);
    out << json(c.latent_topics).dump() << '\n';
  }
}

Corpus load_corpus(const std::filesystem::path& dir) {
  auto open = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) throw DataError("corpus cache is missing " + (dir / name).string());
    return in;
  };
  Corpus c;
  json meta;
  {
    auto in = open("meta.json");
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw DataError("unreadable meta.json: " + std::string(e.what()));
    }
  }
  try {
    for (const auto& name : meta.at("domains")) {
      const int id = c.num_domains();
      c.domains.push_back({id, name.get<std::string>()});
    }
    c.target_domain = meta.at("target_domain").get<int>();
    c.items.resize(c.domains.size());
    std::string line;
    std::size_t line_no = 0;
    {
      auto in = open("items.jsonl");
      while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const json j = json::parse(line);
        ItemRecord r{j.at("domain").get<int>(), j.at("item").get<int>(), j.at("title").get<std::string>()};
        auto& bucket = c.items.at(static_cast<std::size_t>(r.domain));
        if (r.item_id != static_cast<int>(bucket.size()))
          throw DataError("items.jsonl:" + std::to_string(line_no) + ": item ids must be dense and ordered");
        bucket.push_back(std::move(r));
      }
    }
    line_no = 0;
    {
      auto in = open("sequences.jsonl");
      while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const json j = json::parse(line);
        UserSequence s;
        s.domain = j.at("domain").get<int>();
        s.user_id = j.at("user").get<int>();
        const auto ids = j.at("items").get<std::vector<int>>();
        const auto ts = j.at("ts").get<std::vector<std::int64_t>>();
        if (ids.size() != ts.size())
          throw DataError("sequences.jsonl:" + std::to_string(line_no) + ": items and ts differ in length");
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (ids[k] < 0 || ids[k] >= c.num_items(s.domain))
            throw DataError("sequences.jsonl:" + std::to_string(line_no) + ": unknown item id");
          s.events.push_back({ids[k], ts[k]});
        }
        c.sequences.push_back(std::move(s));
      }
    }
  } catch (const json::exception& e) {
    throw DataError("malformed corpus cache in " + dir.string() + ": " + e.what());
  }
  if (std::filesystem::exists(dir / "latent_topics.json")) {
    std::ifstream in(dir / "latent_topics.json");
    c.latent_topics = json::parse(in).get<std::vector<std::vector<int>>>();
  }
  return c;
}

}  // namespace xdrec
