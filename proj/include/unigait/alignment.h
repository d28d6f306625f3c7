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

// Unified padded observation/action spaces shared by every embodiment, the
// action validity mask, and quantile MinMax normalisation.

#ifndef UNIGAIT_ALIGNMENT_H_
#define UNIGAIT_ALIGNMENT_H_

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace unigait {

inline constexpr int kDefaultObsHorizon = 10;
inline constexpr int kDefaultPredHorizon = 4;
inline constexpr int kCommandDim = 3;

struct EmbodimentSpec {
  int id = 0;
  std::string name;
  int obs_dim = 0;
  int action_dim = 0;
  int command_dim = kCommandDim;
  int privileged_dim = 0;

  bool operator==(const EmbodimentSpec&) const = default;
};

struct UnifiedDims {
  int obs_dim = 0;
  int action_dim = 0;

  bool operator==(const UnifiedDims&) const = default;
};

// Elementwise maxima of the native dimensions. Throws on an empty list or on
// embodiments that disagree about the command dimension.
UnifiedDims ComputeUnifiedDims(std::span<const EmbodimentSpec> specs);

// Copies `native` into the leading entries of a zero vector of length
// `target_dim`.
std::vector<float> Pad(std::span<const float> native, int target_dim);
// Inverse of Pad: the leading `native_dim` entries.
std::vector<float> Unpad(std::span<const float> unified, int native_dim);

// 1 = valid action dimension, 0 = padding. Always `action_dim` leading ones.
class ValidityMask {
 public:
  ValidityMask() = default;
  ValidityMask(int valid, int unified_dim);
  static ValidityMask For(const EmbodimentSpec& spec, int unified_action_dim);

  int size() const { return static_cast<int>(values_.size()); }
  int valid_count() const { return valid_; }
  bool valid(int i) const { return i < valid_; }
  // 0.0 / 1.0 per dimension, convenient for masking float buffers.
  std::span<const float> values() const { return values_; }

  bool operator==(const ValidityMask&) const = default;

 private:
  int valid_ = 0;
  std::vector<float> values_;
};

// Per-dimension 5% / 95% quantiles for one space.
struct QuantileRange {
  std::vector<float> q05;
  std::vector<float> q95;

  int dim() const { return static_cast<int>(q05.size()); }
  bool constant(int d) const { return q05[d] == q95[d]; }
  bool operator==(const QuantileRange&) const = default;
};

struct NormStats {
  QuantileRange obs;
  QuantileRange action;
  QuantileRange command;

  bool operator==(const NormStats&) const = default;
};

// One training record. Buffers are time-major: obs_window holds
// obs_horizon rows of unified_obs_dim values, action_chunk holds
// pred_horizon rows of unified_action_dim values. Padded entries are zero.
struct UnifiedSample {
  std::vector<float> obs_window;
  std::vector<float> action_chunk;
  std::vector<float> command;
  int embodiment_id = 0;

  bool operator==(const UnifiedSample&) const = default;
};

// A set of samples plus everything needed to interpret them.
struct UnifiedDataset {
  std::vector<EmbodimentSpec> specs;
  UnifiedDims dims;
  int obs_horizon = kDefaultObsHorizon;
  int pred_horizon = kDefaultPredHorizon;
  int command_dim = kCommandDim;
  NormStats stats;
  std::uint64_t seed = 0;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<UnifiedSample> samples;

  const EmbodimentSpec& spec(int embodiment_id) const;
  ValidityMask mask(int embodiment_id) const;
  int condition_dim() const { return obs_horizon * dims.obs_dim + command_dim; }
  // Throws InputError if any sample has the wrong buffer sizes, an unknown
  // embodiment, or non-zero padding.
  void Validate() const;
};

// Empirical quantile of unsorted values with linear interpolation between
// order statistics.
double Quantile(std::vector<float> values, double q);

// Fits per-dimension quantiles. Native dims of each embodiment are fitted
// separately and merged by min(q05) / max(q95) across embodiments sharing a
// unified dim. Every embodiment present needs at least kMinNormSamples
// samples.
inline constexpr int kMinNormSamples = 20;
NormStats FitNormStats(const UnifiedDataset& dataset);

// 2 (x - q05) / (q95 - q05) - 1, no clipping; constant dims map to 0.
std::vector<float> Normalize(std::span<const float> x, const QuantileRange& range);
// Inverse of Normalize; constant dims map to the constant.
std::vector<float> Denormalize(std::span<const float> x,
                               const QuantileRange& range);

// Applies Normalize to every row of a time-major buffer.
std::vector<float> NormalizeRows(std::span<const float> rows,
                                 const QuantileRange& range);
std::vector<float> DenormalizeRows(std::span<const float> rows,
                                   const QuantileRange& range);

// flatten(normalized obs_window) ++ normalized command.
std::vector<float> BuildCondition(std::span<const float> obs_window,
                                  std::span<const float> command,
                                  const NormStats& stats);

// Normalized action chunk with padded dims forced back to zero.
std::vector<float> NormalizeActionChunk(std::span<const float> chunk,
                                        const ValidityMask& mask,
                                        const NormStats& stats);

// Sliding window of the last `horizon` unified observations. The first
// observation after Reset fills the whole window.
class ObservationHistory {
 public:
  ObservationHistory(int horizon, int unified_obs_dim);

  void Reset(std::span<const float> first_obs);
  void Push(std::span<const float> obs);
  // Oldest first, horizon * unified_obs_dim values.
  std::vector<float> Window() const;
  bool empty() const { return frames_.empty(); }

 private:
  int horizon_;
  int dim_;
  std::deque<std::vector<float>> frames_;
};

void to_json(nlohmann::json& j, const EmbodimentSpec& spec);
void from_json(const nlohmann::json& j, EmbodimentSpec& spec);
void to_json(nlohmann::json& j, const QuantileRange& range);
void from_json(const nlohmann::json& j, QuantileRange& range);
void to_json(nlohmann::json& j, const NormStats& stats);
void from_json(const nlohmann::json& j, NormStats& stats);

}  // namespace unigait

#endif  // UNIGAIT_ALIGNMENT_H_
