#pragma once

#include "xdrec/config.hpp"
#include "xdrec/model.hpp"
#include "xdrec/training.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace testing {

using namespace xdrec;

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double limit = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -limit, limit);
  return m;
}

inline RowVector random_row(Index n, Rng& rng, double limit = 1.0) { return random_matrix(1, n, rng, limit); }

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("xdrec_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Small synthetic corpus that trains in well under a second.
inline RunConfig tiny_config(std::uint64_t seed = 3) {
  RunConfig c;
  c.seed = seed;
  c.data.synth.num_domains = 2;
  c.data.synth.items_per_domain = 20;
  c.data.synth.users_per_domain = 30;
  c.data.synth.num_topics = 4;
  c.data.filter.min_seq_len = 3;
  c.data.filter.min_item_freq = 2;
  c.model.encoder.d_model = 8;
  c.model.encoder.d_ff = 16;
  c.pretrain.learning_rate = c.tune.learning_rate = 1e-3;
  c.pretrain.epochs = c.tune.epochs = 1;
  c.id_baseline.train.epochs = 1;
  c.ks = {5, 10};
  return c;
}

inline ModelConfig tiny_model_config(int vocab = 12, int d = 8) {
  ModelConfig mc;
  mc.encoder.vocab_size = vocab;
  mc.encoder.d_model = d;
  mc.encoder.n_heads = 2;
  mc.encoder.d_ff = 2 * d;
  mc.encoder.max_tokens = 16;
  return mc;
}

}  // namespace testing
