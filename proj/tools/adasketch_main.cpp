// Copyright 2026 The adasketch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "adasketch/cli.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;

int run_mode(const std::string& config_path,
             adasketch::ExperimentConfig::Mode mode, const char* mode_name) {
  adasketch::ExperimentConfig cfg;
  try {
    const adasketch::ConfigFile file = adasketch::ConfigFile::load(config_path);
    cfg = adasketch::parse_experiment(file);
    if (cfg.mode != mode) {
      std::cerr << "config-error: config mode does not match subcommand '"
                << mode_name << "'\n";
      return kExitConfigError;
    }
  } catch (const adasketch::ConfigError& e) {
    std::cerr << "config-error: " << e.what() << '\n';
    return kExitConfigError;
  }

  // The only environment override: the master seed.
  if (const char* env_seed = std::getenv("ADASKETCH_MASTER_SEED")) {
    cfg.seeds = {std::strtoull(env_seed, nullptr, 10)};
  }

  std::ofstream file_out;
  std::ostream* out = &std::cout;
  if (!cfg.output_path.empty()) {
    file_out.open(cfg.output_path);
    if (!file_out) {
      std::cerr << "runtime-error: cannot open output " << cfg.output_path
                << '\n';
      return kExitRuntimeError;
    }
    out = &file_out;
  }

  try {
    adasketch::run_experiment(cfg, *out);
  } catch (const adasketch::ConfigError& e) {
    std::cerr << "config-error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    // Rows produced before the failure have already been flushed.
    std::cerr << "runtime-error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
  if (!cfg.output_path.empty()) {
    std::cout << "wrote " << cfg.output_path << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Private federated mean estimation with autotuned sketching"};
  app.require_subcommand(1);

  std::string fme_config;
  std::string fedopt_config;
  std::string sweep_config;
  CLI::App* fme = app.add_subcommand("fme", "Run a mean-estimation experiment");
  fme->add_option("--config", fme_config, "Config file")->required();
  CLI::App* fedopt =
      app.add_subcommand("fedopt", "Run a federated optimization experiment");
  fedopt->add_option("--config", fedopt_config, "Config file")->required();
  CLI::App* sweep = app.add_subcommand("sweep", "Run a grid sweep");
  sweep->add_option("--config", sweep_config, "Config file")->required();
  app.add_subcommand("selftest", "Run the fast invariant subset");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("selftest")) {
    return adasketch::run_selftest(std::cout);
  }
  if (app.got_subcommand(fme)) {
    return run_mode(fme_config, adasketch::ExperimentConfig::Mode::kFme, "fme");
  }
  if (app.got_subcommand(fedopt)) {
    return run_mode(fedopt_config, adasketch::ExperimentConfig::Mode::kFedopt,
                    "fedopt");
  }
  return run_mode(sweep_config, adasketch::ExperimentConfig::Mode::kSweep,
                  "sweep");
}
