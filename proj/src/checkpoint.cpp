#include "cdistill/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "cdistill/config.hpp"
#include "cdistill/error.hpp"

namespace cdistill {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'D', 'I', 'S', 'T', 'C', 'K', 'P'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::string encode_payload(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 8);
  for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

std::vector<double> decode_payload(const char* p, std::size_t count) {
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<double>(get_u64(p + 8 * i));
  return values;
}

std::string sha256_hex(const char* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data, size, digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoFailure, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

ordered_json write_file(const std::filesystem::path& path, ordered_json manifest,
                        const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::string payloads;
  ordered_json entries = ordered_json::array();
  for (const auto& [name, t] : tensors) {
    std::string bytes = encode_payload(t.data());
    entries.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"offset", payloads.size()},
                       {"nbytes", bytes.size()},
                       {"sha256", sha256_hex(bytes.data(), bytes.size())}});
    payloads += bytes;
  }
  manifest["tensors"] = std::move(entries);
  const std::string header = manifest.dump();

  std::string blob(kMagic.begin(), kMagic.end());
  put_u64(blob, header.size());
  blob += header;
  blob += payloads;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open '" + path.string() + "' for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "write to '" + path.string() + "' failed");
  return manifest;
}

struct RawCheckpoint {
  json manifest;
  std::string payloads;
};

RawCheckpoint read_raw(const std::filesystem::path& path, bool with_payloads) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  char head[16];
  if (!in.read(head, 16) || std::memcmp(head, kMagic.data(), kMagic.size()) != 0) {
    throw Error(ErrorCode::IoFailure, "'" + path.string() + "' is not a checkpoint");
  }
  const std::uint64_t header_size = get_u64(head + 8);
  std::string header(header_size, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_size))) {
    throw Error(ErrorCode::IoFailure, "truncated manifest in '" + path.string() + "'");
  }
  RawCheckpoint raw;
  try {
    raw.manifest = json::parse(header);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoFailure, "malformed manifest in '" + path.string() + "': " + e.what());
  }
  const int version = raw.manifest.value("format_version", 0);
  if (version > kCheckpointFormatVersion || version < 1) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                " is not supported (this build reads up to " +
                                                std::to_string(kCheckpointFormatVersion) + ")");
  }
  if (with_payloads) {
    raw.payloads.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return raw;
}

std::vector<std::pair<std::string, Tensor>> read_tensors(const RawCheckpoint& raw, const std::filesystem::path& path) {
  std::vector<std::pair<std::string, Tensor>> tensors;
  try {
    for (const auto& e : raw.manifest.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto nbytes = e.at("nbytes").get<std::size_t>();
      if (nbytes != numel_of(shape) * 8 || offset + nbytes > raw.payloads.size()) {
        throw Error(ErrorCode::IoFailure, "tensor '" + name + "' lies outside the payload of '" + path.string() + "'");
      }
      const char* p = raw.payloads.data() + offset;
      if (sha256_hex(p, nbytes) != e.at("sha256").get<std::string>()) {
        throw Error(ErrorCode::DigestMismatch, "payload digest mismatch for tensor '" + name + "' in '" +
                                                   path.string() + "'");
      }
      tensors.emplace_back(name, Tensor::from(shape, decode_payload(p, nbytes / 8)));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoFailure, "malformed manifest in '" + path.string() + "': " + e.what());
  }
  return tensors;
}

std::string expect_kind(const json& manifest, const std::string& kind, const std::filesystem::path& path) {
  const auto found = manifest.value("kind", std::string());
  if (found != kind) {
    throw Error(ErrorCode::IoFailure, "'" + path.string() + "' holds a '" + found + "' checkpoint, expected '" +
                                          kind + "'");
  }
  return found;
}

}  // namespace

ordered_json save_checkpoint(const EncoderModel& model, const std::filesystem::path& path,
                             const CheckpointInfo& info) {
  ordered_json manifest = {{"format_version", kCheckpointFormatVersion},
                           {"kind", "encoder"},
                           {"model", to_json(model.config())},
                           {"embeddings_frozen", model.embeddings_frozen()},
                           {"stage_index", info.stage_index},
                           {"step_count", info.step_count}};
  return write_file(path, std::move(manifest), model.named_parameters());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  RawCheckpoint raw = read_raw(path, true);
  expect_kind(raw.manifest, "encoder", path);
  auto tensors = read_tensors(raw, path);
  try {
    const ModelConfig config = model_config_from_json(raw.manifest.at("model"));
    LoadedCheckpoint out{
        EncoderModel::from_named_parameters(config, tensors, raw.manifest.at("embeddings_frozen").get<bool>()),
        {raw.manifest.at("stage_index").get<std::size_t>(), raw.manifest.at("step_count").get<std::size_t>()}};
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoFailure, "malformed manifest in '" + path.string() + "': " + e.what());
  }
}

ordered_json save_head_checkpoint(const ClassifierHead& head, const std::filesystem::path& path) {
  ordered_json manifest = {{"format_version", kCheckpointFormatVersion},
                           {"kind", "head"},
                           {"hidden_dim", head.pooler_weight.dim(0)},
                           {"num_classes", head.num_classes()}};
  return write_file(path, std::move(manifest), head.named_parameters());
}

ClassifierHead load_head_checkpoint(const std::filesystem::path& path) {
  RawCheckpoint raw = read_raw(path, true);
  expect_kind(raw.manifest, "head", path);
  return ClassifierHead::from_named_parameters(read_tensors(raw, path));
}

json read_checkpoint_manifest(const std::filesystem::path& path) { return read_raw(path, false).manifest; }

}  // namespace cdistill
