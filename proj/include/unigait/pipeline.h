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

// Run configuration and the pipeline stages behind the command-line tool:
// data generation, diffusion training, residual training, evaluation and
// the two ablation sweeps. Every stage writes a CSV with a fixed schema.

#ifndef UNIGAIT_PIPELINE_H_
#define UNIGAIT_PIPELINE_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unigait/denoiser.h"
#include "unigait/edm.h"
#include "unigait/envsim.h"
#include "unigait/rladapt.h"

namespace unigait {

struct EmbodimentEntry {
  ToyEnvConfig env;
  bool active = true;
  // Share of the generated dataset; all zero keeps every segment.
  double ratio = 0.0;
};

struct EvalSettings {
  int episodes = 2;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  // Denoising steps at evaluation; 0 uses the checkpoint's setting.
  int sample_steps = 0;
  std::vector<int> steps_list = {3, 5, 10, 15};
  std::vector<double> fractions = {0.01, 0.10, 0.25, 0.50, 1.00};
  // Held-out expert episodes per embodiment for action MSE, and the number
  // of windows scored from them.
  int heldout_episodes = 1;
  int heldout_samples = 256;
};

struct RunPaths {
  std::string dataset = "dataset.mlds";
  std::string diffusion = "diffusion.mlck";
  std::string residual = "residual.mlck";
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::vector<EmbodimentEntry> embodiments;
  DatasetOptions dataset;
  // Samples drawn across embodiments by ratio; 0 takes the most the
  // generated episodes allow.
  int total_samples = 0;
  DenoiserConfig denoiser;
  EdmConfig edm;
  DiffusionTrainConfig train;
  PpoConfig residual;
  EvalSettings eval;
  RunPaths paths;
  // Relative paths resolve against this directory.
  std::string out_dir = ".";

  // Small settings that finish on a laptop CPU.
  static RunConfig Desk();

  std::vector<ToyEnvConfig> ActiveEnvs() const;
  std::vector<double> ActiveRatios() const;
  std::string Resolve(const std::string& path) const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
// Missing keys keep the Desk() value. Throws InputError on bad values.
void from_json(const nlohmann::json& j, RunConfig& c);

// Applies "a.b.0.c=value" to a JSON document. The value is parsed as JSON
// when possible, otherwise taken as a string. Throws InputError on a
// malformed assignment or a path through a non-container.
void ApplyOverride(nlohmann::json& doc, const std::string& assignment);

// "10/30/30/30" -> {0.1, 0.3, 0.3, 0.3}; a JSON array is taken as-is.
// Throws InputError unless the ratios are non-negative and sum to 1.
std::vector<double> ParseRatios(const nlohmann::json& value);

// Integer counts summing to `total` with each within 1 of ratio * total.
std::vector<int> RatioCounts(const std::vector<double>& ratios, int total);

// Config file (optional) + overrides + seed. Seed precedence: `seed`
// argument, then the MULTILOCO_SEED environment variable, then the file.
RunConfig LoadRunConfig(const std::optional<std::string>& path,
                        const std::vector<std::string>& overrides,
                        std::optional<std::uint64_t> seed);

UnifiedDataset GenerateConfiguredDataset(const RunConfig& config);

// Fresh expert episodes from the training distribution under a disjoint
// seed, with the training dims and stats applied.
UnifiedDataset HeldOutDataset(const RunConfig& config, const DiffusionModel& model);

struct ActionMse {
  std::vector<int> ids;
  // Native-unit mean squared error over valid dims of whole chunks.
  std::vector<double> per_embodiment;
  double pooled = 0.0;
};

// Samples the prior on held-out windows and scores it against the
// recorded chunks.
ActionMse HeldOutActionMse(const DiffusionModel& model, const UnifiedDataset& heldout,
                           int steps, std::uint64_t seed);

// Fixed-precision CSV field formatting shared by every writer.
std::string CsvNumber(double value);

// --- commands; each returns the CSV path it wrote -------------------------

std::string RunGenData(const RunConfig& config, std::ostream& log);
std::string RunTrainDiffusion(const RunConfig& config, std::ostream& log);
std::string RunTrainResidual(const RunConfig& config, std::ostream& log);
// Evaluates the residual checkpoint when `with_residual`, else prior only.
std::string RunEval(const RunConfig& config, bool with_residual, std::ostream& log);
std::string RunAblateSteps(const RunConfig& config, std::ostream& log);
std::string RunAblateDatasize(const RunConfig& config, std::ostream& log);

// Reads a checkpoint file as a diffusion model; InputError names the path.
DiffusionModel LoadDiffusion(const std::string& path);

}  // namespace unigait

#endif  // UNIGAIT_PIPELINE_H_
