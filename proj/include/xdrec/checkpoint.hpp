#pragma once

#include "xdrec/baseline.hpp"
#include "xdrec/config.hpp"
#include "xdrec/model.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace xdrec {

inline constexpr const char* kCheckpointBlob = "checkpoint.bin";
inline constexpr const char* kCheckpointManifest = "checkpoint.manifest.json";

struct CheckpointInfo {
  std::string kind = "model";  // "model" or "id_baseline"
  std::string stage;           // "pretrain", "tune" or "init"
  std::uint64_t seed = 0;
  std::string vocab_digest;
  std::string config_digest;
  std::string variant;
  Json model_config;  // kind == "model" only
};

/// Writes `dir`/checkpoint.bin (little-endian f64, each tensor row-major,
/// tensors back to back) and `dir`/checkpoint.manifest.json.
void save_tensors(const std::filesystem::path& dir, const std::vector<TensorRef>& tensors, const CheckpointInfo& info);

struct TensorFile {
  CheckpointInfo info;
  std::vector<std::string> order;  // manifest order
  std::map<std::string, Matrix> tensors;
};

/// Reads and validates a checkpoint: offsets must tile the blob exactly.
TensorFile load_tensors(const std::filesystem::path& dir);

void save_model(const std::filesystem::path& dir, const Model& model, CheckpointInfo info);

struct LoadedModel {
  Model model;
  CheckpointInfo info;
};

LoadedModel load_model(const std::filesystem::path& dir);

void save_id_baseline(const std::filesystem::path& dir, const IdBaseline& model, CheckpointInfo info);
IdBaseline load_id_baseline(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

/// Throws DataError naming both digests when they differ.
void require_vocab(const CheckpointInfo& info, const std::string& vocab_digest);

}  // namespace xdrec
