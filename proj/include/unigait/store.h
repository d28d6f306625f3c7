// Copyright 2026 The unigait Authors
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

// Binary dataset (MLDS) and checkpoint (MLCK) files.
//
// Both share one layout: 4-byte magic, u32 LE version, u32 LE header length,
// a UTF-8 JSON header, then a payload of little-endian float32 values. The
// header records the payload size and its FNV-1a 64 hash, so any truncation
// or flipped byte is caught on load.

#ifndef UNIGAIT_STORE_H_
#define UNIGAIT_STORE_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unigait/alignment.h"
#include "unigait/edm.h"
#include "unigait/tensor.h"

namespace unigait {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

using Bytes = std::vector<std::uint8_t>;

// Throw FormatError on bad magic/version, truncation or hash mismatch.
Bytes EncodeDataset(const UnifiedDataset& dataset);
UnifiedDataset DecodeDataset(std::span<const std::uint8_t> bytes);

// Throw InputError naming the path if it cannot be opened or written.
void WriteDataset(const UnifiedDataset& dataset, const std::filesystem::path& path);
UnifiedDataset ReadDataset(const std::filesystem::path& path);

enum class CheckpointKind { kDiffusion, kResidual };

std::string CheckpointKindName(CheckpointKind kind);

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::kDiffusion;
  // Echo of the configuration needed to rebuild the model.
  nlohmann::json config;
  NormStats stats;
  std::uint64_t seed = 0;
  // Stored in this order; the manifest mirrors it.
  std::vector<NamedTensor> tensors;

  const Tensor& tensor(const std::string& name) const;
};

Bytes EncodeCheckpoint(const Checkpoint& checkpoint);
// Throws FormatError on a kind other than `expected`, a manifest with gaps or
// overlaps, or any of the dataset error cases.
Checkpoint DecodeCheckpoint(std::span<const std::uint8_t> bytes,
                            CheckpointKind expected);

void WriteCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint ReadCheckpoint(const std::filesystem::path& path, CheckpointKind expected);

// Serving weights, frequency bank and everything needed to rebuild the net.
Checkpoint DiffusionCheckpoint(const DiffusionModel& model);
// Throws FormatError if the tensors do not match the echoed architecture.
DiffusionModel DiffusionFromCheckpoint(const Checkpoint& checkpoint);

Bytes ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace unigait

#endif  // UNIGAIT_STORE_H_
