// Copyright 2026 The NIRec Lab Authors.
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

// nirec: staged driver for the interference-aware steering lab.
//
//   nirec prepare  --config run.json
//   nirec simulate --config run.json
//   nirec train    --config run.json
//   nirec steer    --config run.json --workers 8
//   nirec report   --config run.json
//   nirec all      --config run.json
//
// Exit codes: 0 ok, 2 input error, 3 convergence or diagnostic failure.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nirec/common.h"
#include "nirec/pipeline.h"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int workers = 1;
  std::size_t max_specs = 0;
};

nirec::RunConfig Resolve(const Flags& flags) {
  nirec::RunConfig config = flags.config.empty()
                                ? nirec::ParseRunConfig("{}")
                                : nirec::LoadRunConfig(flags.config);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.out) config.out_dir = *flags.out;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interference-aware exposure steering lab"};
  app.require_subcommand(1);
  Flags flags;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config, "Run configuration (JSON)");
    cmd->add_option("--seed", flags.seed, "Override the run seed");
    cmd->add_option("--out", flags.out, "Override the output directory");
    cmd->add_option("--workers", flags.workers, "Worker threads for steer")
        ->check(CLI::PositiveNumber);
  };
  auto* prepare = app.add_subcommand("prepare", "Load, k-core filter and persist the corpus");
  auto* simulate = app.add_subcommand("simulate", "Build the oracle, exposures, feedback and targets");
  auto* train = app.add_subcommand("train", "Train the estimator, backbones and experience model");
  auto* steer = app.add_subcommand("steer", "Optimize exposures over the gamma grid");
  auto* report = app.add_subcommand("report", "Aggregate sweeps into curves and plots");
  auto* all = app.add_subcommand("all", "Run every stage in order");
  auto* config_cmd = app.add_subcommand("config", "Print the resolved configuration");
  for (auto* cmd : {prepare, simulate, train, steer, report, all, config_cmd}) add_common(cmd);
  steer->add_option("--max-specs", flags.max_specs,
                    "Stop after this many specs; a later call resumes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage mistakes are input errors; --help still exits 0.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const nirec::RunConfig config = Resolve(flags);
    nirec::RunOptions options;
    options.workers = flags.workers;
    options.max_specs = flags.max_specs;
    options.log = &std::cerr;
    if (*prepare) nirec::CmdPrepare(config, options);
    if (*simulate) nirec::CmdSimulate(config, options);
    if (*train) nirec::CmdTrain(config, options);
    if (*steer && !nirec::CmdSteer(config, options)) {
      std::cerr << "steer stopped early; rerun to resume\n";
    }
    if (*report) nirec::CmdReport(config, options);
    if (*all) nirec::CmdAll(config, options);
    if (*config_cmd) std::cout << nirec::RunConfigToJson(config) << '\n';
  } catch (const nirec::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nirec::ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
