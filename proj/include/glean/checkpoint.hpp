#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "glean/blocks.hpp"

namespace glean {

inline constexpr int kCheckpointFormatVersion = 1;

/// A checkpoint on disk is `<prefix>.manifest.json` plus `<prefix>.blob`:
/// the blob holds little-endian float32 arrays back to back in manifest
/// order; the manifest records name, shape, dtype, byte offset, element
/// count and CRC-32 of every parameter, plus a config snapshot.
struct CheckpointData {
  std::string kind;
  nlohmann::json config;
  nlohmann::json metadata;
  std::vector<std::string> order;
  std::map<std::string, Tensor> tensors;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  /// Throws CheckpointError when absent or when `expected` shape differs.
  const Tensor& get(const std::string& name, const Shape& expected) const;
};

struct CheckpointPaths {
  std::filesystem::path manifest;
  std::filesystem::path blob;
};

/// Accepts `dir/name`, `dir/name.manifest.json` or `dir/name.blob`.
CheckpointPaths checkpoint_paths(const std::filesystem::path& path);

std::uint32_t crc32_bytes(const void* data, std::size_t size);

void write_checkpoint(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& config,
                      const nlohmann::json& metadata, const ParamList& params);

CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into `params` by name; every name must be present with matching shape.
void assign_parameters(const CheckpointData& data, const ParamList& params);

}  // namespace glean
