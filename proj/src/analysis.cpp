#include "xdrec/analysis.hpp"

#include <json.hpp>

#include <sstream>
#include <stdexcept>

namespace xdrec {

namespace {

double cosine_distance(const RowVector& a, const RowVector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("distance analysis: zero-norm embedding");
  return 1.0 - a.dot(b) / (na * nb);
}

struct Item {
  int domain;
  Index row;
};

}  // namespace

double DistanceReport::get(const std::string& model, const std::string& group) const {
  for (const auto& c : cells)
    if (c.model == model && c.group == group) return c.mean_distance;
  throw std::out_of_range("no distance cell " + model + "/" + group);
}

std::string DistanceReport::to_json() const {
  nlohmann::json cells_json = nlohmann::json::array();
  for (const auto& c : cells)
    cells_json.push_back({{"model", c.model}, {"group", c.group}, {"mean_distance", c.mean_distance}, {"pairs", c.pairs}});
  return nlohmann::json{{"seed", seed}, {"max_pairs", max_pairs}, {"cells", cells_json}, {"warnings", warnings}}.dump(2);
}

std::string DistanceReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "model,group,mean_distance,pairs\n";
  for (const auto& c : cells) out << c.model << ',' << c.group << ',' << c.mean_distance << ',' << c.pairs << '\n';
  return out.str();
}

DistanceReport distance_analysis(const std::vector<EmbeddingSet>& models, const std::vector<std::string>& domain_names,
                                 int max_pairs, std::uint64_t seed) {
  if (max_pairs < 1) throw ConfigError("max_pairs must be >= 1");
  DistanceReport report;
  report.seed = seed;
  report.max_pairs = max_pairs;
  const auto budget = static_cast<std::size_t>(max_pairs);

  for (const auto& set : models) {
    if (set.domains.size() != domain_names.size()) throw DataError("embedding set " + set.model + " misses domains");
    Rng rng = make_rng(seed, "pairs." + set.model);

    for (std::size_t d = 0; d < set.domains.size(); ++d) {
      const Matrix& e = set.domains[d];
      const std::string group = "intra:" + domain_names[d];
      const auto m = static_cast<std::size_t>(e.rows());
      if (m < 2) {
        report.warnings.push_back(set.model + "/" + group + ": fewer than 2 items, cell omitted");
        continue;
      }
      double total = 0.0;
      std::size_t count = 0;
      if (m * (m - 1) / 2 <= budget) {
        for (Index i = 0; i < e.rows(); ++i)
          for (Index j = i + 1; j < e.rows(); ++j, ++count) total += cosine_distance(e.row(i), e.row(j));
      } else {
        for (; count < budget; ++count) {
          const auto i = static_cast<Index>(uniform_index(rng, m));
          auto j = static_cast<Index>(uniform_index(rng, m - 1));
          if (j >= i) ++j;
          total += cosine_distance(e.row(i), e.row(j));
        }
      }
      report.cells.push_back({set.model, group, total / static_cast<double>(count), count});
    }

    std::vector<Item> all;
    std::size_t same_domain_pairs = 0;
    for (std::size_t d = 0; d < set.domains.size(); ++d) {
      const auto m = static_cast<std::size_t>(set.domains[d].rows());
      same_domain_pairs += m * (m > 0 ? m - 1 : 0) / 2;
      for (Index r = 0; r < set.domains[d].rows(); ++r) all.push_back({static_cast<int>(d), r});
    }
    const std::size_t n = all.size();
    const std::size_t cross_pairs = n * (n > 0 ? n - 1 : 0) / 2 - same_domain_pairs;
    if (cross_pairs == 0) {
      report.warnings.push_back(set.model + "/inter: no cross-domain pairs, cell omitted");
      continue;
    }
    auto row = [&](const Item& it) -> RowVector { return set.domains[static_cast<std::size_t>(it.domain)].row(it.row); };
    double total = 0.0;
    std::size_t count = 0;
    if (cross_pairs <= budget) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          if (all[i].domain != all[j].domain) {
            total += cosine_distance(row(all[i]), row(all[j]));
            ++count;
          }
    } else {
      // Rejection keeps the draw uniform over cross-domain pairs.
      while (count < budget) {
        const Item& a = all[uniform_index(rng, n)];
        const Item& b = all[uniform_index(rng, n)];
        if (a.domain == b.domain) continue;
        total += cosine_distance(row(a), row(b));
        ++count;
      }
    }
    report.cells.push_back({set.model, "inter", total / static_cast<double>(count), count});
  }
  return report;
}

}  // namespace xdrec
