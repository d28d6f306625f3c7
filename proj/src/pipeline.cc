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

#include "unigait/pipeline.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "unigait/error.h"
#include "unigait/store.h"

namespace unigait {
namespace {

namespace fs = std::filesystem;

using Clock = std::chrono::steady_clock;

double MsSince(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::uint64_t Mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : path_(path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot write '" + path + "'");
    Row(header);
  }

  void Row(const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
    out_ << '\n';
    out_.flush();
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

void RequireFile(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw InputError(std::string(what) + " not found: '" + path + "'");
}

std::vector<std::string> MetricFields(const EvalReport& rep, int index) {
  std::vector<std::string> f;
  for (auto field : {&EpisodeMetrics::ar, &EpisodeMetrics::mel, &EpisodeMetrics::lvt,
                     &EpisodeMetrics::avt}) {
    auto [mean, sd] = rep.Stat(index, field);
    f.push_back(CsvNumber(mean));
    f.push_back(CsvNumber(sd));
  }
  return f;
}

EvalOptions MakeEvalOptions(const EvalSettings& e, int sample_steps) {
  EvalOptions o;
  o.episodes = e.episodes;
  o.seeds = e.seeds;
  o.sample_steps = sample_steps;
  return o;
}

// Active envs restricted to the embodiments a checkpoint was trained on.
std::vector<ToyEnvConfig> EnvsFor(const RunConfig& config, const DiffusionModel& model) {
  std::vector<ToyEnvConfig> out;
  for (const auto& e : config.ActiveEnvs()) {
    for (const auto& s : model.specs) {
      if (s.id == e.id) out.push_back(e);
    }
  }
  if (out.empty()) {
    throw InputError("no active embodiment in the config matches the checkpoint");
  }
  return out;
}

}  // namespace

RunConfig RunConfig::Desk() {
  RunConfig c;
  for (const auto& e : DefaultEmbodiments()) c.embodiments.push_back({e, true, 0.25});
  c.dataset.episodes = 10;
  c.dataset.episode_steps = 500;
  c.dataset.demo_noise = 0.4;
  c.dataset.command_interval = 50;
  c.train.epochs = 30;
  c.train.batch_size = 64;
  c.residual.envs_per_embodiment = 32;
  c.residual.actor_hidden = {256, 128};
  c.residual.critic_hidden = {256, 128};
  c.residual.max_iterations = 400;
  // Fresh critics give noise for advantages; let them fit before the actor moves.
  c.residual.critic_warmup = 50;
  return c;
}

std::vector<ToyEnvConfig> RunConfig::ActiveEnvs() const {
  std::vector<ToyEnvConfig> out;
  for (const auto& e : embodiments) {
    if (e.active) out.push_back(e.env);
  }
  return out;
}

std::vector<double> RunConfig::ActiveRatios() const {
  std::vector<double> out;
  for (const auto& e : embodiments) {
    if (e.active) out.push_back(e.ratio);
  }
  return out;
}

std::string RunConfig::Resolve(const std::string& path) const {
  fs::path p(path);
  if (p.is_absolute()) return p.string();
  return (fs::path(out_dir) / p).string();
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  nlohmann::json embodiments = nlohmann::json::array();
  for (const auto& e : c.embodiments) {
    nlohmann::json item = e.env;
    item["active"] = e.active;
    item["ratio"] = e.ratio;
    embodiments.push_back(item);
  }
  nlohmann::json dataset = c.dataset;
  dataset["total_samples"] = c.total_samples;
  j = {{"seed", c.seed},
       {"embodiments", embodiments},
       {"dataset", dataset},
       {"diffusion", {{"denoiser", c.denoiser}, {"edm", c.edm}, {"train", c.train}}},
       {"residual", c.residual},
       {"eval",
        {{"episodes", c.eval.episodes},
         {"seeds", c.eval.seeds},
         {"sample_steps", c.eval.sample_steps},
         {"steps_list", c.eval.steps_list},
         {"fractions", c.eval.fractions},
         {"heldout_episodes", c.eval.heldout_episodes},
         {"heldout_samples", c.eval.heldout_samples}}},
       {"paths",
        {{"dataset", c.paths.dataset},
         {"diffusion", c.paths.diffusion},
         {"residual", c.paths.residual}}}};
}

namespace {

// Rejects keys the reference document does not have, so a misspelled
// override fails instead of being ignored. Array elements are checked
// against the reference's first element.
void CheckKnownKeys(const nlohmann::json& doc, const nlohmann::json& ref,
                    const std::string& prefix) {
  if (doc.is_object() && ref.is_object()) {
    for (const auto& [key, value] : doc.items()) {
      const std::string path = prefix.empty() ? key : prefix + "." + key;
      if (path == "dataset.ratios") continue;
      if (!ref.contains(key)) throw InputError("unknown config key '" + path + "'");
      // Reward coefficients are a sparse map; the env config checks names.
      if (key == "coefficients") continue;
      CheckKnownKeys(value, ref.at(key), path);
    }
  } else if (doc.is_array() && ref.is_array() && !ref.empty()) {
    for (size_t i = 0; i < doc.size(); ++i) {
      CheckKnownKeys(doc[i], ref[0], prefix + "." + std::to_string(i));
    }
  }
}

}  // namespace

void from_json(const nlohmann::json& in, RunConfig& c) {
  c = RunConfig::Desk();
  CheckKnownKeys(in, nlohmann::json(c), "");
  // Nested sections parse from their own struct defaults, so fill partial
  // documents from the desk values first.
  nlohmann::json j = c;
  j.merge_patch(in);
  c.seed = j.value("seed", c.seed);
  if (j.contains("embodiments")) {
    c.embodiments.clear();
    for (const auto& item : j.at("embodiments")) {
      EmbodimentEntry e;
      nlohmann::json env = item;
      e.active = env.value("active", true);
      e.ratio = env.value("ratio", 0.0);
      env.erase("active");
      env.erase("ratio");
      e.env = env.get<ToyEnvConfig>();
      c.embodiments.push_back(std::move(e));
    }
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    c.dataset = d.get<DatasetOptions>();
    c.total_samples = d.value("total_samples", 0);
    if (d.contains("ratios")) {
      std::vector<double> r = ParseRatios(d.at("ratios"));
      std::vector<EmbodimentEntry*> active;
      for (auto& e : c.embodiments) {
        if (e.active) active.push_back(&e);
      }
      if (r.size() != active.size()) {
        throw InputError("dataset.ratios has " + std::to_string(r.size()) +
                         " entries for " + std::to_string(active.size()) +
                         " active embodiments");
      }
      for (size_t i = 0; i < r.size(); ++i) active[i]->ratio = r[i];
    }
  }
  if (j.contains("diffusion")) {
    const auto& d = j.at("diffusion");
    if (d.contains("denoiser")) c.denoiser = d.at("denoiser").get<DenoiserConfig>();
    if (d.contains("edm")) c.edm = d.at("edm").get<EdmConfig>();
    if (d.contains("train")) c.train = d.at("train").get<DiffusionTrainConfig>();
  }
  if (j.contains("residual")) c.residual = j.at("residual").get<PpoConfig>();
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval.episodes = e.value("episodes", c.eval.episodes);
    c.eval.seeds = e.value("seeds", c.eval.seeds);
    c.eval.sample_steps = e.value("sample_steps", c.eval.sample_steps);
    c.eval.steps_list = e.value("steps_list", c.eval.steps_list);
    c.eval.fractions = e.value("fractions", c.eval.fractions);
    c.eval.heldout_episodes = e.value("heldout_episodes", c.eval.heldout_episodes);
    c.eval.heldout_samples = e.value("heldout_samples", c.eval.heldout_samples);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    c.paths.dataset = p.value("dataset", c.paths.dataset);
    c.paths.diffusion = p.value("diffusion", c.paths.diffusion);
    c.paths.residual = p.value("residual", c.paths.residual);
  }

  if (c.embodiments.empty()) throw InputError("config lists no embodiments");
  std::vector<int> ids;
  for (const auto& e : c.embodiments) {
    if (std::find(ids.begin(), ids.end(), e.env.id) != ids.end()) {
      throw InputError("duplicate embodiment id " + std::to_string(e.env.id));
    }
    ids.push_back(e.env.id);
    if (e.ratio < 0.0) throw InputError("embodiment '" + e.env.name + "' has a negative ratio");
  }
  if (c.total_samples < 0) throw InputError("dataset.total_samples must be >= 0");
  if (c.eval.episodes <= 0 || c.eval.seeds.empty()) {
    throw InputError("eval needs at least one episode and one seed");
  }
  if (c.eval.heldout_episodes <= 0 || c.eval.heldout_samples <= 0) {
    throw InputError("eval.heldout_episodes and eval.heldout_samples must be positive");
  }
  for (int s : c.eval.steps_list) {
    if (s <= 0) throw InputError("eval.steps_list entries must be positive");
  }
  for (double f : c.eval.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw InputError("eval.fractions entries must lie in (0, 1]");
  }
  c.edm.Validate();
}

void ApplyOverride(nlohmann::json& doc, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InputError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  nlohmann::json* node = &doc;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) throw InputError("override key '" + key + "' has an empty component");
    path.push_back(part);
  }
  for (size_t i = 0; i < path.size(); ++i) {
    const std::string& p = path[i];
    const bool last = i + 1 == path.size();
    if (node->is_array()) {
      size_t index = 0;
      auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), index);
      if (ec != std::errc() || ptr != p.data() + p.size() || index >= node->size()) {
        throw InputError("override key '" + key + "': '" + p + "' is not a valid index");
      }
      node = &(*node)[index];
    } else if (node->is_object() || node->is_null()) {
      node = &(*node)[p];
    } else {
      throw InputError("override key '" + key + "' descends into a non-container at '" + p +
                       "'");
    }
    if (last) *node = value;
  }
}

std::vector<double> ParseRatios(const nlohmann::json& value) {
  std::vector<double> r;
  if (value.is_string()) {
    std::stringstream in(value.get<std::string>());
    std::string part;
    while (std::getline(in, part, '/')) {
      char* end = nullptr;
      const double v = std::strtod(part.c_str(), &end);
      if (part.empty() || end != part.c_str() + part.size()) {
        throw InputError("bad ratio preset '" + value.get<std::string>() + "'");
      }
      r.push_back(v / 100.0);
    }
  } else if (value.is_array()) {
    for (const auto& v : value) {
      if (!v.is_number()) throw InputError("ratios must be numbers");
      r.push_back(v.get<double>());
    }
  } else {
    throw InputError("ratios must be a list or a preset such as \"10/30/30/30\"");
  }
  double sum = 0.0;
  for (double v : r) {
    if (v < 0.0) throw InputError("ratios must be non-negative");
    sum += v;
  }
  if (r.empty() || std::abs(sum - 1.0) > 1e-6) {
    throw InputError("ratios must sum to 1 (got " + std::to_string(sum) + ")");
  }
  return r;
}

std::vector<int> RatioCounts(const std::vector<double>& ratios, int total) {
  std::vector<int> counts(ratios.size());
  std::vector<std::pair<double, size_t>> remainders;
  int assigned = 0;
  for (size_t i = 0; i < ratios.size(); ++i) {
    const double exact = ratios[i] * total;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.push_back({exact - counts[i], i});
  }
  // Largest remainder; ties go to the earlier embodiment.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t k = 0; assigned < total && k < remainders.size(); ++k, ++assigned) {
    ++counts[remainders[k].second];
  }
  return counts;
}

RunConfig LoadRunConfig(const std::optional<std::string>& path,
                        const std::vector<std::string>& overrides,
                        std::optional<std::uint64_t> seed) {
  nlohmann::json doc = RunConfig::Desk();
  if (path) {
    RequireFile(*path, "config");
    std::ifstream in(*path);
    nlohmann::json user = nlohmann::json::parse(in, nullptr, false);
    if (user.is_discarded() || !user.is_object()) {
      throw InputError("config '" + *path + "' is not a JSON object");
    }
    doc.merge_patch(user);
  }
  for (const auto& o : overrides) ApplyOverride(doc, o);
  if (const char* env = std::getenv("MULTILOCO_SEED"); env != nullptr && *env != '\0') {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), v);
    if (ec != std::errc() || *ptr != '\0') {
      throw InputError(std::string("MULTILOCO_SEED is not an unsigned integer: '") + env + "'");
    }
    doc["seed"] = v;
  }
  if (seed) doc["seed"] = *seed;
  try {
    return doc.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

UnifiedDataset GenerateConfiguredDataset(const RunConfig& config) {
  std::vector<ToyEnvConfig> envs;
  std::vector<double> ratios;
  const auto all = config.ActiveEnvs();
  const auto all_ratios = config.ActiveRatios();
  const bool weighted = std::any_of(all_ratios.begin(), all_ratios.end(),
                                    [](double r) { return r > 0.0; });
  for (size_t i = 0; i < all.size(); ++i) {
    if (weighted && all_ratios[i] == 0.0) continue;
    envs.push_back(all[i]);
    ratios.push_back(all_ratios[i]);
  }
  if (envs.empty()) throw InputError("no active embodiments to generate data for");
  std::vector<int> counts;
  if (weighted) {
    const double sum = std::accumulate(ratios.begin(), ratios.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-6) {
      throw InputError("active embodiment ratios sum to " + std::to_string(sum) + ", not 1");
    }
    int per_env = config.dataset.episodes *
                  SegmentCount(config.dataset.episode_steps, config.dataset.obs_horizon,
                               config.dataset.pred_horizon);
    if (config.dataset.max_samples > 0) per_env = std::min(per_env, config.dataset.max_samples);
    int total = config.total_samples;
    if (total == 0) {
      double cap = std::numeric_limits<double>::infinity();
      for (double r : ratios) cap = std::min(cap, per_env / r);
      total = static_cast<int>(std::floor(cap + 1e-9));
    }
    counts = RatioCounts(ratios, total);
  }
  return GenerateDataset(envs, config.dataset, config.seed, counts);
}

UnifiedDataset HeldOutDataset(const RunConfig& config, const DiffusionModel& model) {
  UnifiedDataset ds;
  ds.specs = model.specs;
  ds.dims = model.dims;
  ds.obs_horizon = model.obs_horizon;
  ds.pred_horizon = model.pred_horizon;
  ds.command_dim = model.command_dim;
  ds.stats = model.stats;
  ds.seed = Mix(config.seed, 0x68656c64);
  DatasetOptions opt = config.dataset;
  opt.episodes = config.eval.heldout_episodes;
  opt.max_samples = 0;
  opt.obs_horizon = model.obs_horizon;
  opt.pred_horizon = model.pred_horizon;
  // Keyed by embodiment id so models trained on different embodiment sets
  // are scored on the same episodes.
  for (const auto& env : EnvsFor(config, model)) {
    const std::uint64_t env_seed = Mix(ds.seed, static_cast<std::uint64_t>(env.id));
    auto samples = GenerateSamples(env, opt, model.dims, env_seed);
    std::mt19937_64 sub(Mix(env_seed, 1));
    for (int k : SubsampleIndices(static_cast<int>(samples.size()),
                                  config.eval.heldout_samples, sub)) {
      ds.samples.push_back(std::move(samples[k]));
    }
  }
  return ds;
}

ActionMse HeldOutActionMse(const DiffusionModel& model, const UnifiedDataset& heldout,
                           int steps, std::uint64_t seed) {
  const DenoiserNet net = MakeNet(model);
  std::mt19937_64 rng(seed);
  const int n = static_cast<int>(heldout.samples.size());
  const int h = model.pred_horizon, a = model.dims.action_dim;
  std::map<int, std::pair<double, std::int64_t>> acc;
  constexpr int kBatch = 256;
  for (int lo = 0; lo < n; lo += kBatch) {
    const int hi = std::min(n, lo + kBatch);
    Tensor cond(hi - lo, model.denoiser.cond_dim);
    std::vector<int> ids;
    for (int i = lo; i < hi; ++i) {
      const auto& s = heldout.samples[i];
      auto c = BuildCondition(s.obs_window, s.command, model.stats);
      std::copy(c.begin(), c.end(), cond.row(i - lo).begin());
      ids.push_back(s.embodiment_id);
    }
    Tensor chunks = SampleActions(model, net, cond, ids, rng, steps);
    for (int i = lo; i < hi; ++i) {
      const auto& s = heldout.samples[i];
      const int valid = heldout.spec(s.embodiment_id).action_dim;
      auto& [sum, count] = acc[s.embodiment_id];
      for (int t = 0; t < h; ++t) {
        for (int d = 0; d < valid; ++d) {
          const double diff = chunks((i - lo) * h + t, d) - s.action_chunk[t * a + d];
          sum += diff * diff;
          ++count;
        }
      }
    }
  }
  ActionMse out;
  double total = 0.0;
  std::int64_t total_count = 0;
  for (const auto& [id, v] : acc) {
    out.ids.push_back(id);
    out.per_embodiment.push_back(v.first / v.second);
    total += v.first;
    total_count += v.second;
  }
  out.pooled = total_count ? total / total_count : 0.0;
  return out;
}

std::string CsvNumber(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", value);
  return buf;
}

DiffusionModel LoadDiffusion(const std::string& path) {
  RequireFile(path, "diffusion checkpoint");
  return DiffusionFromCheckpoint(ReadCheckpoint(path, CheckpointKind::kDiffusion));
}

std::string RunGenData(const RunConfig& config, std::ostream& log) {
  UnifiedDataset ds = GenerateConfiguredDataset(config);
  const std::string path = config.Resolve(config.paths.dataset);
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  WriteDataset(ds, path);
  CsvWriter csv(config.Resolve("gen-data.csv"),
                {"embodiment_id", "name", "kind", "ratio", "samples"});
  for (const auto& e : config.embodiments) {
    if (!e.active) continue;
    int count = 0;
    for (const auto& s : ds.samples) count += s.embodiment_id == e.env.id;
    csv.Row({std::to_string(e.env.id), e.env.name, KindName(e.env.kind), CsvNumber(e.ratio),
             std::to_string(count)});
    log << e.env.name << ": " << count << " samples\n";
  }
  log << "wrote " << ds.samples.size() << " samples to " << path << "\n";
  return csv.path();
}

std::string RunTrainDiffusion(const RunConfig& config, std::ostream& log) {
  const std::string data_path = config.Resolve(config.paths.dataset);
  RequireFile(data_path, "dataset");
  UnifiedDataset ds = ReadDataset(data_path);
  CsvWriter csv(config.Resolve("train-diffusion.csv"), {"epoch", "loss", "lr", "wall_ms"});
  DiffusionModel model =
      TrainDiffusion(ds, config.denoiser, config.edm, config.train, config.seed,
                     [&](const EpochLog& e) {
                       csv.Row({std::to_string(e.epoch), CsvNumber(e.loss), CsvNumber(e.lr),
                                CsvNumber(e.wall_ms)});
                       log << "epoch " << e.epoch << " loss " << e.loss << "\n";
                     });
  const std::string path = config.Resolve(config.paths.diffusion);
  WriteCheckpoint(DiffusionCheckpoint(model), path);
  log << "wrote " << path << "\n";
  return csv.path();
}

std::string RunTrainResidual(const RunConfig& config, std::ostream& log) {
  DiffusionModel prior = LoadDiffusion(config.Resolve(config.paths.diffusion));
  std::vector<ToyEnvConfig> envs = EnvsFor(config, prior);
  std::vector<std::string> header = {"iteration", "AR",         "MEL", "LVT", "AVT",
                                     "policy_loss", "value_loss", "kl",  "lr"};
  for (const auto& e : envs) header.push_back("AR_" + e.name);
  header.push_back("wall_ms");
  CsvWriter csv(config.Resolve("train-residual.csv"), header);
  ResidualPolicy policy =
      TrainResidual(prior, envs, config.residual, config.seed, [&](const IterationLog& l) {
        std::vector<std::string> row = {std::to_string(l.iteration), CsvNumber(l.ar),
                                        CsvNumber(l.mel),           CsvNumber(l.lvt),
                                        CsvNumber(l.avt),           CsvNumber(l.policy_loss),
                                        CsvNumber(l.value_loss),    CsvNumber(l.kl),
                                        CsvNumber(l.lr)};
        for (double v : l.embodiment_ar) row.push_back(CsvNumber(v));
        row.push_back(CsvNumber(l.wall_ms));
        csv.Row(row);
        log << "iteration " << l.iteration << " AR " << l.ar << " kl " << l.kl << "\n";
      });
  const std::string path = config.Resolve(config.paths.residual);
  WriteCheckpoint(ResidualCheckpoint(policy, prior), path);
  log << "wrote " << path << "\n";
  return csv.path();
}

std::string RunEval(const RunConfig& config, bool with_residual, std::ostream& log) {
  EvalReport rep;
  if (with_residual) {
    const std::string path = config.Resolve(config.paths.residual);
    RequireFile(path, "residual checkpoint");
    auto [policy, prior] = ResidualFromCheckpoint(ReadCheckpoint(path, CheckpointKind::kResidual));
    rep = EvaluatePolicy(prior, &policy, EnvsFor(config, prior),
                         MakeEvalOptions(config.eval, config.eval.sample_steps));
  } else {
    DiffusionModel prior = LoadDiffusion(config.Resolve(config.paths.diffusion));
    rep = EvaluatePolicy(prior, nullptr, EnvsFor(config, prior),
                         MakeEvalOptions(config.eval, config.eval.sample_steps));
  }
  CsvWriter csv(config.Resolve("eval.csv"),
                {"embodiment_id", "name", "episodes", "AR_mean", "AR_std", "MEL_mean", "MEL_std",
                 "LVT_mean", "LVT_std", "AVT_mean", "AVT_std"});
  int pooled_episodes = 0;
  auto report = [&](int index, const std::string& id, const std::string& name, int episodes) {
    std::vector<std::string> row = {id, name, std::to_string(episodes)};
    auto m = MetricFields(rep, index);
    row.insert(row.end(), m.begin(), m.end());
    csv.Row(row);
    log << name << ": AR " << m[0] << " +- " << m[1] << ", MEL " << m[2] << " +- " << m[3]
        << ", LVT " << m[4] << " +- " << m[5] << ", AVT " << m[6] << " +- " << m[7] << "\n";
  };
  for (size_t k = 0; k < rep.ids.size(); ++k) {
    const int episodes = static_cast<int>(rep.episodes[k].size());
    pooled_episodes += episodes;
    report(static_cast<int>(k), std::to_string(rep.ids[k]), rep.names[k], episodes);
  }
  report(-1, "-1", "pooled", pooled_episodes);
  return csv.path();
}

std::string RunAblateSteps(const RunConfig& config, std::ostream& log) {
  DiffusionModel prior = LoadDiffusion(config.Resolve(config.paths.diffusion));
  const UnifiedDataset heldout = HeldOutDataset(config, prior);
  const std::vector<ToyEnvConfig> envs = EnvsFor(config, prior);
  CsvWriter csv(config.Resolve("ablate-steps.csv"),
                {"sample_steps", "deployment_default", "action_mse", "action_mse_std", "AR_mean",
                 "AR_std", "MEL_mean", "LVT_mean", "AVT_mean", "sample_ms"});
  for (int steps : config.eval.steps_list) {
    std::vector<double> mse;
    double sample_ms = 0.0;
    for (std::uint64_t seed : config.eval.seeds) {
      const auto t0 = Clock::now();
      mse.push_back(HeldOutActionMse(prior, heldout, steps, seed).pooled);
      sample_ms += MsSince(t0);
    }
    sample_ms /= static_cast<double>(config.eval.seeds.size());
    const double mean = std::accumulate(mse.begin(), mse.end(), 0.0) / mse.size();
    double var = 0.0;
    for (double v : mse) var += (v - mean) * (v - mean);
    const double sd = mse.size() > 1 ? std::sqrt(var / (mse.size() - 1)) : 0.0;
    EvalReport rep = EvaluatePolicy(prior, nullptr, envs, MakeEvalOptions(config.eval, steps));
    auto m = MetricFields(rep, -1);
    csv.Row({std::to_string(steps), steps == prior.edm.sample_steps ? "1" : "0",
             CsvNumber(mean), CsvNumber(sd), m[0], m[1], m[2], m[4], m[6],
             CsvNumber(sample_ms)});
    log << "steps " << steps << ": action mse " << mean << ", AR " << m[0] << "\n";
  }
  return csv.path();
}

std::string RunAblateDatasize(const RunConfig& config, std::ostream& log) {
  const std::string data_path = config.Resolve(config.paths.dataset);
  RequireFile(data_path, "dataset");
  const UnifiedDataset full = ReadDataset(data_path);
  const int total = static_cast<int>(full.samples.size());
  std::vector<int> sizes;
  for (double f : config.eval.fractions) {
    const int n = static_cast<int>(std::lround(f * total));
    if (n < config.train.batch_size) {
      throw InputError("fraction " + CsvNumber(f) + " yields " + std::to_string(n) +
                       " samples, fewer than one batch of " +
                       std::to_string(config.train.batch_size));
    }
    sizes.push_back(n);
  }
  CsvWriter csv(config.Resolve("ablate-datasize.csv"),
                {"fraction", "samples", "final_loss", "action_mse", "AR_mean", "AR_std",
                 "MEL_mean", "LVT_mean", "AVT_mean", "train_ms"});
  for (size_t i = 0; i < sizes.size(); ++i) {
    UnifiedDataset ds = full;
    std::mt19937_64 rng(Mix(config.seed, 0x73756273));
    ds.samples.clear();
    for (int k : SubsampleIndices(total, sizes[i], rng)) ds.samples.push_back(full.samples[k]);
    double final_loss = 0.0;
    const auto t0 = Clock::now();
    DiffusionModel model =
        TrainDiffusion(ds, config.denoiser, config.edm, config.train, config.seed,
                       [&](const EpochLog& e) { final_loss = e.loss; });
    const double train_ms = MsSince(t0);
    const UnifiedDataset heldout = HeldOutDataset(config, model);
    double mse = 0.0;
    for (std::uint64_t seed : config.eval.seeds) {
      mse += HeldOutActionMse(model, heldout, config.eval.sample_steps, seed).pooled;
    }
    mse /= static_cast<double>(config.eval.seeds.size());
    EvalReport rep = EvaluatePolicy(model, nullptr, EnvsFor(config, model),
                                    MakeEvalOptions(config.eval, config.eval.sample_steps));
    auto m = MetricFields(rep, -1);
    csv.Row({CsvNumber(config.eval.fractions[i]), std::to_string(sizes[i]),
             CsvNumber(final_loss), CsvNumber(mse), m[0], m[1], m[2], m[4], m[6],
             CsvNumber(train_ms)});
    log << "fraction " << config.eval.fractions[i] << ": " << sizes[i] << " samples, mse "
        << mse << ", AR " << m[0] << "\n";
  }
  return csv.path();
}

}  // namespace unigait
