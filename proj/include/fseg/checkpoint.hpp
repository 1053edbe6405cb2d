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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fseg/segnet.hpp"

namespace fseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian layout:
///   "FSEG" | u32 version | config | u64 seed
///   | u32 tensor count | per tensor: u32-prefixed name, u32 rank, u32 dims..., f32 data
///   | u32 slot count | per slot: u8 kind, f32 running_max
///   | u8 has_amms [| u32 layers | per layer 4 x (f64 low, f64 high, f64 sigma)]
///   | u8 has_u_star [| f64 u_star]
/// config = u32 num_classes, u32 base_channels, u32 depth, u8 activation, u8 fat, f64 fat_probability
std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Throws MagicError ("not a checkpoint"), VersionError or TruncatedError on bad files.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace fseg
