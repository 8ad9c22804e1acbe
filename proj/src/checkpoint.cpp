#include "xdrec/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace xdrec {

namespace fs = std::filesystem;

namespace {

void put_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

double get_f64(const std::string& in, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)]);
  return std::bit_cast<double>(bits);
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_tensors(const fs::path& dir, const std::vector<TensorRef>& tensors, const CheckpointInfo& info) {
  fs::create_directories(dir);
  std::string blob;
  Json entries = Json::array();
  for (const auto& t : tensors) {
    const std::size_t offset = blob.size();
    const auto m = t.map();
    for (Index r = 0; r < t.rows; ++r)
      for (Index c = 0; c < t.cols; ++c) put_f64(blob, m(r, c));
    entries.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", offset}, {"bytes", blob.size() - offset}});
  }
  Json manifest{{"format", "xdrec-checkpoint-1"},
                {"dtype", "float64-le"},
                {"layout", "row-major"},
                {"kind", info.kind},
                {"stage", info.stage},
                {"seed", info.seed},
                {"vocab_digest", info.vocab_digest},
                {"config_digest", info.config_digest},
                {"variant", info.variant},
                {"total_bytes", blob.size()},
                {"tensors", entries}};
  if (!info.model_config.is_null()) manifest["model_config"] = info.model_config;
  write_file(dir / kCheckpointBlob, blob);
  write_file(dir / kCheckpointManifest, manifest.dump(2) + "\n");
}

TensorFile load_tensors(const fs::path& dir) {
  TensorFile out;
  Json manifest;
  try {
    manifest = Json::parse(read_file(dir / kCheckpointManifest));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  const std::string blob = read_file(dir / kCheckpointBlob);
  try {
    if (manifest.at("format") != "xdrec-checkpoint-1") throw DataError("unknown checkpoint format");
    out.info.kind = manifest.at("kind").get<std::string>();
    out.info.stage = manifest.at("stage").get<std::string>();
    out.info.seed = manifest.at("seed").get<std::uint64_t>();
    out.info.vocab_digest = manifest.at("vocab_digest").get<std::string>();
    out.info.config_digest = manifest.at("config_digest").get<std::string>();
    out.info.variant = manifest.at("variant").get<std::string>();
    if (manifest.contains("model_config")) out.info.model_config = manifest.at("model_config");

    std::size_t expected = 0;
    for (const auto& e : manifest.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto rows = e.at("shape").at(0).get<Index>();
      const auto cols = e.at("shape").at(1).get<Index>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto bytes = e.at("bytes").get<std::size_t>();
      if (offset != expected || bytes != static_cast<std::size_t>(rows * cols) * 8)
        throw DataError("checkpoint manifest offsets do not tile the blob at " + name);
      expected += bytes;
      if (expected > blob.size()) throw DataError("checkpoint blob shorter than its manifest");
      Matrix m(rows, cols);
      std::size_t pos = offset;
      for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c, pos += 8) m(r, c) = get_f64(blob, pos);
      if (!out.tensors.emplace(name, std::move(m)).second) throw DataError("duplicate tensor " + name);
      out.order.push_back(name);
    }
    if (expected != blob.size() || manifest.at("total_bytes").get<std::size_t>() != blob.size())
      throw DataError("checkpoint blob size does not match its manifest");
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  return out;
}

void save_model(const fs::path& dir, const Model& model, CheckpointInfo info) {
  info.kind = "model";
  info.model_config = to_json(model.config());
  save_tensors(dir, tensors(model), info);
}

LoadedModel load_model(const fs::path& dir) {
  TensorFile file = load_tensors(dir);
  if (file.info.kind != "model") throw DataError("checkpoint at " + dir.string() + " is not a text model");
  LoadedModel out{Model::zeros(model_config_from_json(file.info.model_config)), file.info};
  const auto refs = tensors(out.model);
  if (refs.size() != file.tensors.size()) throw DataError("checkpoint tensor set does not match its model config");
  for (const auto& ref : refs) {
    auto it = file.tensors.find(ref.name);
    if (it == file.tensors.end()) throw DataError("checkpoint lacks tensor " + ref.name);
    if (it->second.rows() != ref.rows || it->second.cols() != ref.cols)
      throw DataError("checkpoint tensor " + ref.name + " has the wrong shape");
    ref.map() = it->second;
  }
  return out;
}

void save_id_baseline(const fs::path& dir, const IdBaseline& model, CheckpointInfo info) {
  info.kind = "id_baseline";
  info.model_config = Json();
  save_tensors(dir, model.tensors(), info);
}

IdBaseline load_id_baseline(const fs::path& dir, CheckpointInfo* info) {
  TensorFile file = load_tensors(dir);
  if (file.info.kind != "id_baseline") throw DataError("checkpoint at " + dir.string() + " is not an id baseline");
  IdBaseline out;
  for (std::size_t d = 0;; ++d) {
    auto it = file.tensors.find("id.domain" + std::to_string(d) + ".items");
    if (it == file.tensors.end()) break;
    out.tables.push_back(it->second);
  }
  if (out.tables.size() != file.tensors.size()) throw DataError("id baseline checkpoint has unexpected tensors");
  if (info) *info = file.info;
  return out;
}

void require_vocab(const CheckpointInfo& info, const std::string& vocab_digest) {
  if (info.vocab_digest != vocab_digest)
    throw DataError("vocabulary digest mismatch: checkpoint " + info.vocab_digest + ", data " + vocab_digest);
}

}  // namespace xdrec
