// Copyright 2026 The ffattn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FFATTN_CHECKPOINT_H_
#define FFATTN_CHECKPOINT_H_

// Binary checkpoint, all integers little-endian:
//
//   "FFATTNCK"            8-byte tag
//   u32 version           currently 1
//   u64 n, n bytes        model config as canonical text
//   u64 count             number of blobs
//   per blob:
//     u32 n, n bytes      parameter name
//     u8 dtype            0 = f32, 1 = f64 (IEEE-754)
//     u32 rank, u64 dims
//     raw values

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ffattn/model.h"

namespace ffattn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointBlob {
  std::string name;
  Shape shape;
  // Values widened to double regardless of the stored dtype.
  std::vector<double> values;
  bool stored_f64 = false;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;
  std::vector<CheckpointBlob> blobs;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model);

// Throws DataError on a bad tag, unsupported version or truncated file.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Rebuilds the model from the stored config and loads every parameter by
// name, converting element types as needed.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace ffattn

#endif  // FFATTN_CHECKPOINT_H_
