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

// Python bindings. Configs cross the boundary as JSON text; the package's
// __init__ converts to and from dicts.

#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "unigait/edm.h"
#include "unigait/envsim.h"
#include "unigait/error.h"
#include "unigait/pipeline.h"
#include "unigait/rladapt.h"
#include "unigait/store.h"

namespace py = pybind11;

namespace unigait {
namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FloatArray ToArray(const Tensor& t) {
  FloatArray out({t.rows(), t.cols()});
  std::copy(t.vec().begin(), t.vec().end(), out.mutable_data());
  return out;
}

FloatArray ToArray(const std::vector<float>& v) {
  FloatArray out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<float> ToVector(const FloatArray& a) {
  return std::vector<float>(a.data(), a.data() + a.size());
}

RunConfig ConfigFromJson(const std::string& text, const std::string& out_dir) {
  nlohmann::json doc = RunConfig::Desk();
  if (!text.empty()) doc.merge_patch(nlohmann::json::parse(text));
  RunConfig c = doc.get<RunConfig>();
  c.out_dir = out_dir;
  return c;
}

std::string RunCommand(const std::string& command, const std::string& config_json,
                       const std::string& out_dir, bool with_residual) {
  RunConfig c = ConfigFromJson(config_json, out_dir);
  std::ostringstream log;
  if (command == "gen-data") return RunGenData(c, log);
  if (command == "train-diffusion") return RunTrainDiffusion(c, log);
  if (command == "train-residual") return RunTrainResidual(c, log);
  if (command == "eval") return RunEval(c, with_residual, log);
  if (command == "ablate-steps") return RunAblateSteps(c, log);
  if (command == "ablate-datasize") return RunAblateDatasize(c, log);
  throw InputError("unknown command '" + command + "'");
}

class PyEnv {
 public:
  explicit PyEnv(const std::string& config_json)
      : env_(nlohmann::json::parse(config_json).get<ToyEnvConfig>()) {}

  FloatArray Reset(std::uint64_t seed) { return ToArray(env_.Reset(seed)); }

  py::tuple Step(const FloatArray& action) {
    StepResult r = env_.Step(ToVector(action));
    py::dict terms;
    const auto& names = RewardTermNames();
    for (size_t i = 0; i < names.size(); ++i) terms[py::str(names[i])] = r.reward.terms[i];
    return py::make_tuple(ToArray(r.obs), r.reward.total, r.done, terms);
  }

  FloatArray ExpertAction() const { return ToArray(env_.ExpertAction()); }
  FloatArray PrivilegedState() const { return ToArray(env_.PrivilegedState()); }
  int obs_dim() const { return env_.spec().obs_dim; }
  int action_dim() const { return env_.spec().action_dim; }
  std::vector<double> command() const { return {env_.command().vx, env_.command().vy, env_.command().wz}; }

 private:
  ToyEnv env_;
};

class PyPrior {
 public:
  explicit PyPrior(const std::string& path) : model_(LoadDiffusion(path)), net_(MakeNet(model_)) {}

  int cond_dim() const { return model_.denoiser.cond_dim; }
  int action_dim() const { return model_.dims.action_dim; }
  int pred_horizon() const { return model_.pred_horizon; }
  std::uint64_t params_hash() const { return model_.params.Hash(); }

  FloatArray Sample(const FloatArray& condition, const std::vector<int>& ids, int steps,
                    std::uint64_t seed) const {
    if (condition.ndim() != 2 || condition.shape(1) != cond_dim() ||
        condition.shape(0) != static_cast<py::ssize_t>(ids.size())) {
      throw InputError("condition must be [len(ids), " + std::to_string(cond_dim()) + "]");
    }
    Tensor cond(static_cast<int>(condition.shape(0)), cond_dim(), ToVector(condition));
    std::mt19937_64 rng(seed);
    return ToArray(SampleActions(model_, net_, cond, ids, rng, steps));
  }

 private:
  DiffusionModel model_;
  DenoiserNet net_;
};

}  // namespace
}  // namespace unigait

PYBIND11_MODULE(_core, m) {
  using namespace unigait;
  m.doc() = "unigait C++ core";

  // Translators run most-recent first, so the derived type goes last.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);

  m.def("default_config_json", [] { return nlohmann::json(RunConfig::Desk()).dump(); });
  m.def("run_command", &RunCommand, py::arg("command"), py::arg("config_json"),
        py::arg("out_dir"), py::arg("with_residual") = false,
        py::call_guard<py::gil_scoped_release>());

  m.def(
      "precondition",
      [](double sigma, double sigma_data) {
        PreconditionCoeffs c = Precondition(sigma, sigma_data);
        return py::dict(py::arg("c_skip") = c.c_skip, py::arg("c_out") = c.c_out,
                        py::arg("c_in") = c.c_in, py::arg("c_noise") = c.c_noise);
      },
      py::arg("sigma"), py::arg("sigma_data") = 0.5);
  m.def(
      "karras_schedule",
      [](int steps) { return KarrasSchedule(steps, EdmConfig()); }, py::arg("steps"));
  m.def(
      "gae",
      [](const std::vector<double>& rewards, const std::vector<double>& values,
         const std::vector<std::uint8_t>& dones, double gamma, double lambda) {
        GaeResult g = Gae(rewards, values, dones, gamma, lambda);
        return py::make_tuple(g.advantages, g.returns);
      },
      py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("gamma") = 0.99,
      py::arg("lam") = 0.95);
  m.def("kl_adaptive_lr", &KlAdaptiveLr, py::arg("approx_kl"), py::arg("lr"),
        py::arg("desired_kl") = 0.01);
  m.def(
      "compose_action",
      [](const std::vector<float>& prior, const std::vector<float>& residual, double coef,
         const std::vector<float>& mask) { return ComposeAction(prior, residual, coef, mask); },
      py::arg("prior"), py::arg("residual"), py::arg("coef") = 0.2, py::arg("mask"));
  m.def("embodiments_json", [] { return nlohmann::json(DefaultEmbodiments()).dump(); });

  py::class_<PyEnv>(m, "ToyEnv")
      .def(py::init<const std::string&>(), py::arg("config_json"))
      .def("reset", &PyEnv::Reset, py::arg("seed"))
      .def("step", &PyEnv::Step, py::arg("action"))
      .def("expert_action", &PyEnv::ExpertAction)
      .def("privileged_state", &PyEnv::PrivilegedState)
      .def_property_readonly("obs_dim", &PyEnv::obs_dim)
      .def_property_readonly("action_dim", &PyEnv::action_dim)
      .def_property_readonly("command", &PyEnv::command);

  py::class_<PyPrior>(m, "DiffusionPrior")
      .def(py::init<const std::string&>(), py::arg("path"))
      .def_property_readonly("cond_dim", &PyPrior::cond_dim)
      .def_property_readonly("action_dim", &PyPrior::action_dim)
      .def_property_readonly("pred_horizon", &PyPrior::pred_horizon)
      .def_property_readonly("params_hash", &PyPrior::params_hash)
      .def("sample", &PyPrior::Sample, py::arg("condition"), py::arg("embodiment_ids"),
           py::arg("steps") = 0, py::arg("seed") = 0);

  m.def(
      "read_dataset",
      [](const std::string& path) {
        UnifiedDataset ds = ReadDataset(path);
        const int n = static_cast<int>(ds.samples.size());
        const int w = ds.obs_horizon * ds.dims.obs_dim, c = ds.pred_horizon * ds.dims.action_dim;
        FloatArray obs({n, w}), act({n, c}), cmd({n, ds.command_dim});
        py::array_t<std::int32_t> ids(std::vector<py::ssize_t>{n});
        for (int i = 0; i < n; ++i) {
          const auto& s = ds.samples[i];
          std::copy(s.obs_window.begin(), s.obs_window.end(), obs.mutable_data() + i * w);
          std::copy(s.action_chunk.begin(), s.action_chunk.end(), act.mutable_data() + i * c);
          std::copy(s.command.begin(), s.command.end(), cmd.mutable_data() + i * ds.command_dim);
          ids.mutable_at(i) = s.embodiment_id;
        }
        return py::dict(py::arg("obs_windows") = obs, py::arg("action_chunks") = act,
                        py::arg("commands") = cmd, py::arg("embodiment_ids") = ids,
                        py::arg("specs_json") = nlohmann::json(ds.specs).dump());
      },
      py::arg("path"));
}
