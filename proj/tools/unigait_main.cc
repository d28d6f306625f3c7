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

// unigait: data generation, training, evaluation and ablations.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad input.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "unigait/error.h"
#include "unigait/pipeline.h"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::string> overrides;
};

void AddCommon(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "Seed; overrides MULTILOCO_SEED and the config");
  cmd->add_option("--out", f.out, "Directory for outputs and relative paths");
  cmd->add_option("--set", f.overrides, "Dotted-path override, e.g. residual.lr=1e-4")
      ->take_all();
}

unigait::RunConfig Load(const CommonFlags& f) {
  std::optional<std::string> path;
  if (!f.config.empty()) path = f.config;
  unigait::RunConfig c = unigait::LoadRunConfig(path, f.overrides, f.seed);
  c.out_dir = f.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unigait: cross-embodiment diffusion locomotion pipeline"};
  app.require_subcommand(1);
  CommonFlags flags;
  bool with_residual = false;
  bool dump_config = false;

  struct Command {
    const char* name;
    const char* help;
    std::string (*run)(const unigait::RunConfig&, std::ostream&);
  };
  const std::vector<Command> commands = {
      {"gen-data", "Roll out experts and write a dataset", unigait::RunGenData},
      {"train-diffusion", "Train the diffusion prior", unigait::RunTrainDiffusion},
      {"train-residual", "Train the residual policy on a frozen prior",
       unigait::RunTrainResidual},
      {"ablate-steps", "Sweep denoising steps", unigait::RunAblateSteps},
      {"ablate-datasize", "Retrain on dataset fractions", unigait::RunAblateDatasize},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    AddCommon(sub, flags);
    subs.push_back(sub);
  }
  CLI::App* eval = app.add_subcommand("eval", "Evaluate the prior or the composed policy");
  AddCommon(eval, flags);
  eval->add_flag("--residual", with_residual, "Evaluate the residual checkpoint");
  CLI::App* show = app.add_subcommand("config", "Print the resolved configuration");
  AddCommon(show, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    unigait::RunConfig config = Load(flags);
    std::string csv;
    if (show->parsed()) {
      dump_config = true;
    } else if (eval->parsed()) {
      csv = unigait::RunEval(config, with_residual, std::cerr);
    } else {
      for (size_t i = 0; i < commands.size(); ++i) {
        if (subs[i]->parsed()) csv = commands[i].run(config, std::cerr);
      }
    }
    if (dump_config) {
      std::cout << nlohmann::json(config).dump(2) << "\n";
    } else {
      std::cout << csv << "\n";
    }
    return 0;
  } catch (const unigait::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
