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

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ese/container.hpp"
#include "ese/lstm.hpp"

namespace ese {

/// A stack of LSTM layers, first layer consumes the model input.
using Model = std::vector<LstmParams>;

inline json config_to_json(const LayerConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden_dim", c.hidden_dim},
          {"proj_dim", c.proj_dim},
          {"has_peephole", c.has_peephole},
          {"has_projection", c.has_projection}};
}

inline LayerConfig config_from_json(const json& j) {
  LayerConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.proj_dim = j.at("proj_dim").get<std::size_t>();
  c.has_peephole = j.at("has_peephole").get<bool>();
  c.has_projection = j.at("has_projection").get<bool>();
  c.validate();
  return c;
}

/// Saves a float model: every tensor as little-endian f64.
inline void save_model(std::span<const LstmParams> layers, const std::filesystem::path& manifest_path) {
  BlobWriter blob;
  json jl = json::array();
  for (const auto& p : layers) {
    p.validate();
    json tensors = json::array();
    LstmParams::for_each_matrix(p, [&](const std::string& name, const DenseMatrix& m) {
      tensors.push_back(blob.add(name, {m.rows(), m.cols()}, "f64", encode_le<double>(m.values())));
    });
    LstmParams::for_each_vector(p, [&](const std::string& name, const Vector& v) {
      tensors.push_back(blob.add(name, {v.size()}, "f64", encode_le<double>(std::span<const double>(v))));
    });
    jl.push_back({{"config", config_to_json(p.config)}, {"tensors", tensors}});
  }
  json manifest = {{"format", "ese-model"}, {"version", 1}, {"layers", jl}};
  write_container(manifest_path, manifest, blob.blob());
}

namespace detail {

inline std::map<std::string, json> index_tensors(const json& layer) {
  std::map<std::string, json> out;
  for (const auto& rec : layer.at("tensors")) out[rec.at("name").get<std::string>()] = rec;
  return out;
}

inline const json& find_tensor(const std::map<std::string, json>& idx, const std::string& name) {
  auto it = idx.find(name);
  if (it == idx.end()) throw ValidationError("manifest lacks tensor " + name);
  return it->second;
}

}  // namespace detail

inline Model load_model(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path)) throw IoError("no such model: " + manifest_path.string());
  ContainerReader reader(manifest_path);
  const json& man = reader.manifest();
  if (man.value("format", "") != "ese-model") throw ValidationError(manifest_path.string() + " is not an ese-model");
  Model layers;
  for (const auto& jl : man.at("layers")) {
    const auto cfg = config_from_json(jl.at("config"));
    auto p = LstmParams::zeros(cfg);
    const auto idx = detail::index_tensors(jl);
    LstmParams::for_each_matrix(p, [&](const std::string& name, DenseMatrix& m) {
      const json& rec = detail::find_tensor(idx, name);
      const auto dims = dims_of(rec);
      if (dims.size() != 2 || dims[0] != m.rows() || dims[1] != m.cols()) {
        throw ShapeError("tensor " + name + " dims disagree with layer config");
      }
      auto values = decode_le<double>(reader.bytes(rec));
      m = DenseMatrix(m.rows(), m.cols(), std::move(values));
    });
    LstmParams::for_each_vector(p, [&](const std::string& name, Vector& v) {
      const json& rec = detail::find_tensor(idx, name);
      const auto dims = dims_of(rec);
      if (dims.size() != 1 || dims[0] != v.size()) throw ShapeError("tensor " + name + " dims disagree with config");
      v = decode_le<double>(reader.bytes(rec));
    });
    p.validate();
    layers.push_back(std::move(p));
  }
  return layers;
}

}  // namespace ese
