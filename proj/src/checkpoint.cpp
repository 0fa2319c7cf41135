#include "glean/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "glean/errors.hpp"

namespace glean {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

namespace {
constexpr std::string_view kManifestSuffix = ".manifest.json";
constexpr std::string_view kBlobSuffix = ".blob";

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}
}  // namespace

const Tensor& CheckpointData::get(const std::string& name, const Shape& expected) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw CheckpointError("checkpoint is missing parameter '" + name + "'");
  if (it->second.shape() != expected) {
    throw CheckpointError("parameter '" + name + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                          shape_str(expected));
  }
  return it->second;
}

CheckpointPaths checkpoint_paths(const std::filesystem::path& path) {
  std::string base = path.string();
  if (ends_with(base, kManifestSuffix)) base.resize(base.size() - kManifestSuffix.size());
  else if (ends_with(base, kBlobSuffix)) base.resize(base.size() - kBlobSuffix.size());
  return {base + std::string(kManifestSuffix), base + std::string(kBlobSuffix)};
}

std::uint32_t crc32_bytes(const void* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (size > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void write_checkpoint(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& config,
                      const nlohmann::json& metadata, const ParamList& params) {
  const auto paths = checkpoint_paths(path);
  if (paths.manifest.has_parent_path()) std::filesystem::create_directories(paths.manifest.parent_path());

  nlohmann::json entries = nlohmann::json::array();
  std::set<std::string> names;
  std::ofstream blob(paths.blob, std::ios::binary | std::ios::trunc);
  if (!blob) throw IoError("cannot open " + paths.blob.string() + " for writing");
  std::uint64_t offset = 0;
  for (const auto& [name, var] : params) {
    if (!names.insert(name).second) throw CheckpointError("duplicate parameter name '" + name + "'");
    const Tensor& t = var.value();
    const std::size_t bytes = t.numel() * sizeof(float);
    blob.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(bytes));
    entries.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"dtype", "float32"},
                       {"offset", offset},
                       {"count", t.numel()},
                       {"crc32", crc32_bytes(t.data(), bytes)}});
    offset += bytes;
  }
  blob.close();
  if (!blob) throw IoError("failed writing " + paths.blob.string());

  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["kind"] = kind;
  manifest["config"] = config;
  manifest["metadata"] = metadata;
  manifest["blob"] = paths.blob.filename().string();
  manifest["blob_bytes"] = offset;
  manifest["parameters"] = std::move(entries);

  std::ofstream out(paths.manifest, std::ios::trunc);
  if (!out) throw IoError("cannot open " + paths.manifest.string() + " for writing");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + paths.manifest.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  const auto paths = checkpoint_paths(path);
  std::ifstream in(paths.manifest);
  if (!in) throw CheckpointError("cannot open checkpoint manifest " + paths.manifest.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt manifest " + paths.manifest.string() + ": " + e.what());
  }

  CheckpointData data;
  try {
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw CheckpointError("unsupported checkpoint format version");
    }
    data.kind = manifest.at("kind").get<std::string>();
    data.config = manifest.at("config");
    data.metadata = manifest.value("metadata", nlohmann::json::object());

    std::ifstream blob(paths.blob, std::ios::binary);
    if (!blob) throw CheckpointError("missing checkpoint blob " + paths.blob.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
    if (bytes.size() != manifest.at("blob_bytes").get<std::uint64_t>()) {
      throw CheckpointError("blob size " + std::to_string(bytes.size()) + " does not match manifest");
    }

    for (const auto& e : manifest.at("parameters")) {
      const auto name = e.at("name").get<std::string>();
      if (e.at("dtype").get<std::string>() != "float32") throw CheckpointError("unsupported dtype for '" + name + "'");
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto count = e.at("count").get<std::uint64_t>();
      if (count != shape_numel(shape)) throw CheckpointError("count/shape mismatch for '" + name + "'");
      const std::uint64_t nbytes = count * sizeof(float);
      if (offset + nbytes > bytes.size()) throw CheckpointError("parameter '" + name + "' extends past blob end");
      if (crc32_bytes(bytes.data() + offset, nbytes) != e.at("crc32").get<std::uint32_t>()) {
        throw CheckpointError("checksum mismatch for parameter '" + name + "'");
      }
      Tensor t(shape);
      std::memcpy(t.data(), bytes.data() + offset, nbytes);
      if (!data.tensors.emplace(name, std::move(t)).second) throw CheckpointError("duplicate parameter '" + name + "'");
      data.order.push_back(name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed manifest " + paths.manifest.string() + ": " + e.what());
  }
  return data;
}

void assign_parameters(const CheckpointData& data, const ParamList& params) {
  for (const auto& [name, var] : params) {
    ag::Var v = var;
    v.mutable_value() = data.get(name, var.shape());
  }
}

}  // namespace glean
