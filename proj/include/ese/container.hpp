// Copyright 2026 The ese-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Manifest + blob container shared by every on-disk artifact: a JSON manifest
// (`<name>.json`) describing tensors, and one little-endian binary blob
// (`<name>.bin`) holding their bytes back to back.

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ese/error.hpp"
#include "json.hpp"

namespace ese {

using json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

inline std::string sha256_hex(std::span<const std::uint8_t> data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline json read_json(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  try {
    return json::parse(b.begin(), b.end());
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Little-endian element codecs.

template <typename T>
void put_le(Bytes& out, T v) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                    std::conditional_t<sizeof(T) == 8, std::int64_t, std::int32_t>, T>>;
  U u;
  std::memcpy(&u, &v, sizeof(T));
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                    std::conditional_t<sizeof(T) == 8, std::int64_t, std::int32_t>, T>>;
  U u = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) u |= static_cast<U>(p[b]) << (8 * b);
  T v;
  std::memcpy(&v, &u, sizeof(T));
  return v;
}

template <typename T>
Bytes encode_le(std::span<const T> values) {
  Bytes out;
  out.reserve(values.size() * sizeof(T));
  for (T v : values) put_le(out, v);
  return out;
}

template <typename T>
std::vector<T> decode_le(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % sizeof(T) != 0) throw CorruptionError("byte length is not a multiple of the element size");
  std::vector<T> out(bytes.size() / sizeof(T));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_le<T>(bytes.data() + i * sizeof(T));
  return out;
}

/// Packs booleans LSB-first into bytes.
inline Bytes pack_bits(const std::vector<bool>& bits) {
  Bytes out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return out;
}

inline std::vector<bool> unpack_bits(std::span<const std::uint8_t> bytes, std::size_t n) {
  if (bytes.size() != (n + 7) / 8) throw ShapeError("bit-packed blob has wrong length");
  std::vector<bool> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (bytes[i / 8] >> (i % 8)) & 1u;
  return out;
}

/// Size in bytes of one element of a manifest dtype; 0 for bit-packed "bool".
inline std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f64") return 8;
  if (dtype == "i32" || dtype == "u32") return 4;
  if (dtype == "u16") return 2;
  if (dtype == "bool") return 0;
  throw ValidationError("unknown dtype '" + dtype + "'");
}

inline std::uint64_t expected_byte_len(const std::string& dtype, std::span<const std::uint64_t> dims) {
  const std::uint64_t n = std::accumulate(dims.begin(), dims.end(), std::uint64_t{1}, std::multiplies<>());
  const std::size_t es = dtype_size(dtype);
  return es == 0 ? (n + 7) / 8 : n * es;
}

/// Accumulates tensors into a blob and emits their manifest records.
class BlobWriter {
 public:
  json add(const std::string& name, std::vector<std::uint64_t> dims, const std::string& dtype, const Bytes& bytes) {
    if (bytes.size() != expected_byte_len(dtype, dims)) {
      throw ShapeError("tensor " + name + ": byte length disagrees with dims");
    }
    json rec = {{"name", name},
                {"dims", dims},
                {"dtype", dtype},
                {"offset", blob_.size()},
                {"byte_len", bytes.size()},
                {"sha256", sha256_hex(bytes)}};
    blob_.insert(blob_.end(), bytes.begin(), bytes.end());
    return rec;
  }

  const Bytes& blob() const noexcept { return blob_; }

 private:
  Bytes blob_;
};

/// Writes `<stem>.json` with a "blob" field pointing at `<stem>.bin`.
inline void write_container(const std::filesystem::path& manifest_path, json manifest, const Bytes& blob) {
  auto blob_path = manifest_path;
  blob_path.replace_extension(".bin");
  manifest["blob"] = blob_path.filename().string();
  manifest["blob_sha256"] = sha256_hex(blob);
  write_file(blob_path, blob);
  write_json(manifest_path, manifest);
}

/// Opens a container and serves checked tensor reads.
class ContainerReader {
 public:
  explicit ContainerReader(const std::filesystem::path& manifest_path) : manifest_(read_json(manifest_path)) {
    if (!manifest_.contains("blob")) throw ValidationError(manifest_path.string() + ": manifest has no blob field");
    blob_path_ = manifest_path.parent_path() / manifest_["blob"].get<std::string>();
    if (!std::filesystem::exists(blob_path_)) throw IoError("missing blob file " + blob_path_.string());
    blob_ = read_file(blob_path_);
  }

  const json& manifest() const noexcept { return manifest_; }

  /// Returns the bytes of one tensor record after shape, bounds and checksum checks.
  std::span<const std::uint8_t> bytes(const json& rec) const {
    const auto name = rec.at("name").get<std::string>();
    const auto dims = rec.at("dims").get<std::vector<std::uint64_t>>();
    const auto dtype = rec.at("dtype").get<std::string>();
    const auto offset = rec.at("offset").get<std::uint64_t>();
    const auto len = rec.at("byte_len").get<std::uint64_t>();
    if (len != expected_byte_len(dtype, dims)) {
      throw ShapeError("tensor " + name + ": manifest dims need " + std::to_string(expected_byte_len(dtype, dims)) +
                       " bytes but byte_len is " + std::to_string(len));
    }
    if (offset + len > blob_.size()) {
      throw IoError("blob " + blob_path_.string() + " truncated: tensor " + name + " spans bytes [" +
                    std::to_string(offset) + ", " + std::to_string(offset + len) + ") but file ends at byte offset " +
                    std::to_string(blob_.size()));
    }
    std::span<const std::uint8_t> out(blob_.data() + offset, len);
    if (rec.contains("sha256") && sha256_hex(out) != rec.at("sha256").get<std::string>()) {
      throw CorruptionError("tensor " + name + ": checksum mismatch");
    }
    return out;
  }

 private:
  json manifest_;
  std::filesystem::path blob_path_;
  Bytes blob_;
};

inline std::vector<std::uint64_t> dims_of(const json& rec) { return rec.at("dims").get<std::vector<std::uint64_t>>(); }

}  // namespace ese
