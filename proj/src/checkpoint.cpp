/*
 *  Copyright 2026 The fseg Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#include "fseg/checkpoint.hpp"

#include <span>

#include "fseg/binary_io.hpp"

namespace fseg {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'E', 'G'};

void put_tensor(ByteWriter& out, const std::string& name, std::span<const Index> dims, std::span<const float> data) {
  out.put_string(name);
  out.put(static_cast<std::uint32_t>(dims.size()));
  for (Index d : dims) out.put(static_cast<std::uint32_t>(d));
  out.put_array(data);
}

void get_tensor(ByteReader& in, const std::string& name, std::span<const Index> dims, std::span<float> data) {
  const std::string got = in.get_string();
  if (got != name) throw FormatError("checkpoint tensor '" + got + "' where '" + name + "' was expected");
  const auto rank = in.get<std::uint32_t>();
  if (rank != dims.size()) throw FormatError("checkpoint tensor '" + name + "' has rank " + std::to_string(rank));
  for (Index d : dims) {
    const auto got_dim = in.get<std::uint32_t>();
    if (got_dim != static_cast<std::uint32_t>(d)) {
      throw FormatError("checkpoint tensor '" + name + "' dimension " + std::to_string(got_dim) + " expected " +
                        std::to_string(d));
    }
  }
  in.get_array(data);
}

void put_range(ByteWriter& out, const StatRange& r) {
  out.put(r.low);
  out.put(r.high);
  out.put(r.sigma);
}

StatRange get_range(ByteReader& in) {
  StatRange r;
  r.low = in.get<double>();
  r.high = in.get<double>();
  r.sigma = in.get<double>();
  return r;
}

std::uint8_t kind_code(ActivationKind k) { return static_cast<std::uint8_t>(k); }

ActivationKind kind_from_code(std::uint8_t v) {
  if (v > static_cast<std::uint8_t>(ActivationKind::ReLUMax)) {
    throw FormatError("checkpoint activation code " + std::to_string(v) + " unknown");
  }
  return static_cast<ActivationKind>(v);
}

}  // namespace

std::string encode_checkpoint(const Model& model) {
  ByteWriter out;
  out.put_raw(std::string_view(kMagic, 4));
  out.put(kCheckpointVersion);
  const ModelConfig& c = model.config;
  out.put(static_cast<std::uint32_t>(c.num_classes));
  out.put(static_cast<std::uint32_t>(c.base_channels));
  out.put(static_cast<std::uint32_t>(c.depth));
  out.put(kind_code(c.activation_kind));
  out.put(static_cast<std::uint8_t>(c.fault_aware_training ? 1 : 0));
  out.put(c.fat_probability);
  out.put(model.seed);

  std::uint32_t tensors = 0;
  for (const LayerSpec& l : model.layers) {
    if (l.kind == LayerKind::Conv2d || l.kind == LayerKind::Logits1x1) tensors += 2;
  }
  out.put(tensors);
  for (const LayerSpec& l : model.layers) {
    if (l.kind != LayerKind::Conv2d && l.kind != LayerKind::Logits1x1) continue;
    const Shape& s = l.conv.weight.shape();
    const Index wdims[4] = {s.n, s.c, s.h, s.w};
    const Index bdims[1] = {l.conv.out_c};
    put_tensor(out, l.name + ".weight", wdims,
               std::span<const float>(l.conv.weight.data().data(), static_cast<std::size_t>(s.size())));
    put_tensor(out, l.name + ".bias", bdims,
               std::span<const float>(l.conv.bias.data(), static_cast<std::size_t>(l.conv.bias.size())));
  }

  out.put(static_cast<std::uint32_t>(model.slots.size()));
  for (const HardeningState& s : model.slots) {
    out.put(kind_code(s.kind));
    out.put(s.running_max);
  }

  out.put(static_cast<std::uint8_t>(model.amms ? 1 : 0));
  if (model.amms) {
    out.put(static_cast<std::uint32_t>(model.amms->layers.size()));
    for (const LayerAmmsStats& l : model.amms->layers) {
      put_range(out, l.average);
      put_range(out, l.minimum);
      put_range(out, l.maximum);
      put_range(out, l.stddev);
    }
  }
  out.put(static_cast<std::uint8_t>(model.uncertainty_threshold ? 1 : 0));
  if (model.uncertainty_threshold) out.put(*model.uncertainty_threshold);
  return out.bytes();
}

Model decode_checkpoint(std::string_view bytes) {
  ByteReader in(bytes, "checkpoint");
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kMagic, 4)) throw MagicError("not a checkpoint");
  in.get_raw(4);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig c;
  c.num_classes = static_cast<int>(in.get<std::uint32_t>());
  c.base_channels = static_cast<int>(in.get<std::uint32_t>());
  c.depth = static_cast<int>(in.get<std::uint32_t>());
  c.activation_kind = kind_from_code(in.get<std::uint8_t>());
  c.fault_aware_training = in.get<std::uint8_t>() != 0;
  c.fat_probability = in.get<double>();
  const auto seed = in.get<std::uint64_t>();
  if (c.depth < 1 || c.depth > 16 || c.base_channels < 1 || c.base_channels > 4096) {
    throw FormatError("checkpoint model config out of range");
  }
  Model model;
  try {
    model = build_model(c, seed);
  } catch (const ValueError& e) {
    throw FormatError(std::string("checkpoint model config invalid: ") + e.what());
  }

  const auto tensors = in.get<std::uint32_t>();
  std::uint32_t expected = 0;
  for (LayerSpec& l : model.layers) {
    if (l.kind != LayerKind::Conv2d && l.kind != LayerKind::Logits1x1) continue;
    expected += 2;
    if (expected > tensors) throw FormatError("checkpoint holds fewer tensors than the model needs");
    const Shape& s = l.conv.weight.shape();
    const Index wdims[4] = {s.n, s.c, s.h, s.w};
    const Index bdims[1] = {l.conv.out_c};
    get_tensor(in, l.name + ".weight", wdims,
               std::span<float>(l.conv.weight.data().data(), static_cast<std::size_t>(s.size())));
    get_tensor(in, l.name + ".bias", bdims,
               std::span<float>(l.conv.bias.data(), static_cast<std::size_t>(l.conv.bias.size())));
  }
  if (tensors != expected) throw FormatError("checkpoint holds more tensors than the model needs");

  const auto slots = in.get<std::uint32_t>();
  if (slots != model.slots.size()) throw FormatError("checkpoint slot count mismatch");
  for (HardeningState& s : model.slots) {
    s.kind = kind_from_code(in.get<std::uint8_t>());
    s.running_max = in.get<float>();
  }

  if (in.get<std::uint8_t>() != 0) {
    const auto layers = in.get<std::uint32_t>();
    if (layers != model.slots.size()) throw FormatError("checkpoint AMMS layer count mismatch");
    AmmsStats stats;
    for (std::uint32_t i = 0; i < layers; ++i) {
      LayerAmmsStats l;
      l.average = get_range(in);
      l.minimum = get_range(in);
      l.maximum = get_range(in);
      l.stddev = get_range(in);
      stats.layers.push_back(l);
    }
    model.amms = std::move(stats);
  }
  if (in.get<std::uint8_t>() != 0) model.uncertainty_threshold = in.get<double>();
  if (!in.at_end()) throw FormatError("checkpoint has trailing bytes");
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace fseg
