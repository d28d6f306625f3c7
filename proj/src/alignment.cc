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

#include "unigait/alignment.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "unigait/error.h"

namespace unigait {

UnifiedDims ComputeUnifiedDims(std::span<const EmbodimentSpec> specs) {
  if (specs.empty()) throw InputError("unified dims of an empty spec list");
  UnifiedDims dims;
  for (const auto& s : specs) {
    if (s.obs_dim <= 0 || s.action_dim <= 0 || s.command_dim <= 0) {
      throw InputError("embodiment " + s.name + " has a non-positive dimension");
    }
    if (s.command_dim != specs.front().command_dim) {
      throw InputError("embodiments disagree on command dimension");
    }
    dims.obs_dim = std::max(dims.obs_dim, s.obs_dim);
    dims.action_dim = std::max(dims.action_dim, s.action_dim);
  }
  return dims;
}

std::vector<float> Pad(std::span<const float> native, int target_dim) {
  if (static_cast<int>(native.size()) > target_dim) {
    throw InputError("cannot pad length " + std::to_string(native.size()) +
                     " into " + std::to_string(target_dim));
  }
  std::vector<float> out(target_dim, 0.0f);
  std::copy(native.begin(), native.end(), out.begin());
  return out;
}

std::vector<float> Unpad(std::span<const float> unified, int native_dim) {
  if (native_dim > static_cast<int>(unified.size()) || native_dim < 0) {
    throw InputError("cannot unpad to a larger dimension");
  }
  return std::vector<float>(unified.begin(), unified.begin() + native_dim);
}

ValidityMask::ValidityMask(int valid, int unified_dim) : valid_(valid) {
  if (valid < 0 || valid > unified_dim) {
    throw InputError("mask with " + std::to_string(valid) +
                     " valid dims does not fit " + std::to_string(unified_dim));
  }
  values_.assign(unified_dim, 0.0f);
  std::fill_n(values_.begin(), valid, 1.0f);
}

ValidityMask ValidityMask::For(const EmbodimentSpec& spec,
                               int unified_action_dim) {
  return ValidityMask(spec.action_dim, unified_action_dim);
}

const EmbodimentSpec& UnifiedDataset::spec(int embodiment_id) const {
  for (const auto& s : specs) {
    if (s.id == embodiment_id) return s;
  }
  throw InputError("unknown embodiment id " + std::to_string(embodiment_id));
}

ValidityMask UnifiedDataset::mask(int embodiment_id) const {
  return ValidityMask::For(spec(embodiment_id), dims.action_dim);
}

void UnifiedDataset::Validate() const {
  const std::size_t obs_len = static_cast<std::size_t>(obs_horizon) * dims.obs_dim;
  const std::size_t act_len =
      static_cast<std::size_t>(pred_horizon) * dims.action_dim;
  for (const auto& s : samples) {
    const EmbodimentSpec& es = spec(s.embodiment_id);
    if (s.obs_window.size() != obs_len || s.action_chunk.size() != act_len ||
        s.command.size() != static_cast<std::size_t>(command_dim)) {
      throw InputError("sample buffer size mismatch");
    }
    for (int t = 0; t < obs_horizon; ++t) {
      for (int d = es.obs_dim; d < dims.obs_dim; ++d) {
        if (s.obs_window[t * dims.obs_dim + d] != 0.0f) {
          throw InputError("non-zero observation padding");
        }
      }
    }
    for (int t = 0; t < pred_horizon; ++t) {
      for (int d = es.action_dim; d < dims.action_dim; ++d) {
        if (s.action_chunk[t * dims.action_dim + d] != 0.0f) {
          throw InputError("non-zero action padding");
        }
      }
    }
  }
}

double Quantile(std::vector<float> values, double q) {
  if (values.empty()) throw InputError("quantile of empty data");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (static_cast<double>(values[hi]) - values[lo]);
}

namespace {

// `columns` maps unified dim -> one value series per embodiment that owns it.
void FitRange(const std::map<int, std::vector<std::vector<float>>>& columns,
              QuantileRange& range) {
  const int dim = range.dim();
  std::vector<bool> seen(dim, false);
  for (const auto& [d, per_embodiment] : columns) {
    for (const auto& values : per_embodiment) {
      const float lo = static_cast<float>(Quantile(values, 0.05));
      const float hi = static_cast<float>(Quantile(values, 0.95));
      if (!seen[d]) {
        range.q05[d] = lo;
        range.q95[d] = hi;
        seen[d] = true;
      } else {
        range.q05[d] = std::min(range.q05[d], lo);
        range.q95[d] = std::max(range.q95[d], hi);
      }
    }
  }
}

}  // namespace

NormStats FitNormStats(const UnifiedDataset& dataset) {
  const UnifiedDims& dims = dataset.dims;
  NormStats stats;
  stats.obs.q05.assign(dims.obs_dim, 0.0f);
  stats.obs.q95.assign(dims.obs_dim, 0.0f);
  stats.action.q05.assign(dims.action_dim, 0.0f);
  stats.action.q95.assign(dims.action_dim, 0.0f);
  stats.command.q05.assign(dataset.command_dim, 0.0f);
  stats.command.q95.assign(dataset.command_dim, 0.0f);

  std::map<int, std::vector<const UnifiedSample*>> by_embodiment;
  for (const auto& s : dataset.samples) by_embodiment[s.embodiment_id].push_back(&s);
  if (by_embodiment.empty()) throw InputError("cannot fit stats on empty dataset");

  std::map<int, std::vector<std::vector<float>>> obs_cols, act_cols, cmd_cols;
  for (const auto& [id, samples] : by_embodiment) {
    if (static_cast<int>(samples.size()) < kMinNormSamples) {
      throw InputError("embodiment " + std::to_string(id) + " has only " +
                       std::to_string(samples.size()) +
                       " samples; quantiles need at least " +
                       std::to_string(kMinNormSamples));
    }
    const EmbodimentSpec& es = dataset.spec(id);
    for (int d = 0; d < es.obs_dim; ++d) {
      std::vector<float> col;
      col.reserve(samples.size() * dataset.obs_horizon);
      for (const UnifiedSample* s : samples) {
        for (int t = 0; t < dataset.obs_horizon; ++t) {
          col.push_back(s->obs_window[t * dims.obs_dim + d]);
        }
      }
      obs_cols[d].push_back(std::move(col));
    }
    for (int d = 0; d < es.action_dim; ++d) {
      std::vector<float> col;
      col.reserve(samples.size() * dataset.pred_horizon);
      for (const UnifiedSample* s : samples) {
        for (int t = 0; t < dataset.pred_horizon; ++t) {
          col.push_back(s->action_chunk[t * dims.action_dim + d]);
        }
      }
      act_cols[d].push_back(std::move(col));
    }
    for (int d = 0; d < dataset.command_dim; ++d) {
      std::vector<float> col;
      for (const UnifiedSample* s : samples) col.push_back(s->command[d]);
      cmd_cols[d].push_back(std::move(col));
    }
  }
  FitRange(obs_cols, stats.obs);
  FitRange(act_cols, stats.action);
  FitRange(cmd_cols, stats.command);
  return stats;
}

std::vector<float> Normalize(std::span<const float> x, const QuantileRange& range) {
  if (static_cast<int>(x.size()) != range.dim()) {
    throw InputError("normalize: vector length " + std::to_string(x.size()) +
                     " vs stats dim " + std::to_string(range.dim()));
  }
  std::vector<float> out(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double lo = range.q05[d], hi = range.q95[d];
    out[d] = lo == hi ? 0.0f
                      : static_cast<float>(2.0 * (x[d] - lo) / (hi - lo) - 1.0);
  }
  return out;
}

std::vector<float> Denormalize(std::span<const float> x,
                               const QuantileRange& range) {
  if (static_cast<int>(x.size()) != range.dim()) {
    throw InputError("denormalize: vector length " + std::to_string(x.size()) +
                     " vs stats dim " + std::to_string(range.dim()));
  }
  std::vector<float> out(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double lo = range.q05[d], hi = range.q95[d];
    out[d] = lo == hi ? range.q05[d]
                      : static_cast<float>((x[d] + 1.0) * 0.5 * (hi - lo) + lo);
  }
  return out;
}

std::vector<float> NormalizeRows(std::span<const float> rows,
                                 const QuantileRange& range) {
  const std::size_t dim = range.dim();
  if (dim == 0 || rows.size() % dim != 0) {
    throw InputError("buffer length is not a multiple of the stats dim");
  }
  std::vector<float> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); r += dim) {
    auto n = Normalize(rows.subspan(r, dim), range);
    out.insert(out.end(), n.begin(), n.end());
  }
  return out;
}

std::vector<float> DenormalizeRows(std::span<const float> rows,
                                   const QuantileRange& range) {
  const std::size_t dim = range.dim();
  if (dim == 0 || rows.size() % dim != 0) {
    throw InputError("buffer length is not a multiple of the stats dim");
  }
  std::vector<float> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); r += dim) {
    auto n = Denormalize(rows.subspan(r, dim), range);
    out.insert(out.end(), n.begin(), n.end());
  }
  return out;
}

std::vector<float> BuildCondition(std::span<const float> obs_window,
                                  std::span<const float> command,
                                  const NormStats& stats) {
  if (static_cast<int>(command.size()) != stats.command.dim()) {
    throw InputError("condition: command dimension mismatch");
  }
  std::vector<float> out = NormalizeRows(obs_window, stats.obs);
  auto c = Normalize(command, stats.command);
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<float> NormalizeActionChunk(std::span<const float> chunk,
                                        const ValidityMask& mask,
                                        const NormStats& stats) {
  if (mask.size() != stats.action.dim()) {
    throw InputError("mask does not match action stats");
  }
  std::vector<float> out = NormalizeRows(chunk, stats.action);
  const int dim = mask.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask.valid(static_cast<int>(i % dim))) out[i] = 0.0f;
  }
  return out;
}

ObservationHistory::ObservationHistory(int horizon, int unified_obs_dim)
    : horizon_(horizon), dim_(unified_obs_dim) {
  if (horizon <= 0) throw InputError("observation horizon must be positive");
}

void ObservationHistory::Reset(std::span<const float> first_obs) {
  if (static_cast<int>(first_obs.size()) != dim_) {
    throw InputError("observation history dimension mismatch");
  }
  frames_.assign(horizon_, std::vector<float>(first_obs.begin(), first_obs.end()));
}

void ObservationHistory::Push(std::span<const float> obs) {
  if (frames_.empty()) {
    Reset(obs);
    return;
  }
  if (static_cast<int>(obs.size()) != dim_) {
    throw InputError("observation history dimension mismatch");
  }
  frames_.pop_front();
  frames_.emplace_back(obs.begin(), obs.end());
}

std::vector<float> ObservationHistory::Window() const {
  if (frames_.empty()) throw InputError("observation history not initialised");
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(horizon_) * dim_);
  for (const auto& f : frames_) out.insert(out.end(), f.begin(), f.end());
  return out;
}

void to_json(nlohmann::json& j, const EmbodimentSpec& s) {
  j = {{"id", s.id},
       {"name", s.name},
       {"obs_dim", s.obs_dim},
       {"action_dim", s.action_dim},
       {"command_dim", s.command_dim},
       {"privileged_dim", s.privileged_dim}};
}

void from_json(const nlohmann::json& j, EmbodimentSpec& s) {
  s.id = j.at("id").get<int>();
  s.name = j.at("name").get<std::string>();
  s.obs_dim = j.at("obs_dim").get<int>();
  s.action_dim = j.at("action_dim").get<int>();
  s.command_dim = j.value("command_dim", kCommandDim);
  s.privileged_dim = j.value("privileged_dim", 0);
}

void to_json(nlohmann::json& j, const QuantileRange& r) {
  j = {{"q05", r.q05}, {"q95", r.q95}};
}

void from_json(const nlohmann::json& j, QuantileRange& r) {
  r.q05 = j.at("q05").get<std::vector<float>>();
  r.q95 = j.at("q95").get<std::vector<float>>();
  if (r.q05.size() != r.q95.size()) throw FormatError("quantile length mismatch");
  for (std::size_t i = 0; i < r.q05.size(); ++i) {
    if (r.q05[i] > r.q95[i]) throw FormatError("q05 exceeds q95");
  }
}

void to_json(nlohmann::json& j, const NormStats& s) {
  j = {{"obs", s.obs}, {"action", s.action}, {"command", s.command}};
}

void from_json(const nlohmann::json& j, NormStats& s) {
  s.obs = j.at("obs").get<QuantileRange>();
  s.action = j.at("action").get<QuantileRange>();
  s.command = j.at("command").get<QuantileRange>();
}

}  // namespace unigait
