// Copyright (C) 2026 the apreid authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance
// with the License. You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under the License.

#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"attribute-person recognition: dataset tooling, training, retrieval evaluation"};
  app.require_subcommand(1);

  struct Shared {
    std::string config_path;
    std::string out;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
    std::int64_t threads = -1;
  };

  struct Pending {
    Shared shared;
    std::function<void(const apreid::cli::RunConfig&)> run;
  } pending;

  auto add = [&](const char* name, const char* desc,
                 void (*fn)(const apreid::cli::RunConfig&)) {
    auto* sub = app.add_subcommand(name, desc);
    auto shared = std::make_shared<Shared>();
    sub->add_option("--config", shared->config_path, "flat key=value config file");
    sub->add_option("--out", shared->out, "output directory");
    sub->add_option("--seed", shared->seed, "top-level seed");
    sub->add_option("--threads", shared->threads, "worker count (0 = logical cores)");
    sub->add_option("--set", shared->overrides, "override a config key (key=value)");
    sub->callback([&pending, shared, fn] {
      pending.shared = *shared;
      pending.run = fn;
    });
    return sub;
  };

  add("synth", "generate a synthetic dataset on disk", apreid::cli::cmd_synth);
  add("stats", "attribute distribution and correlation reports", apreid::cli::cmd_stats);
  add("train", "train a model and write checkpoint + log", apreid::cli::cmd_train);
  add("eval", "retrieval + attribute evaluation of a checkpoint", apreid::cli::cmd_eval);
  add("sweep", "train once per lambda and tabulate validation accuracy", apreid::cli::cmd_sweep);
  add("ablate", "leave-one-attribute-out retraining", apreid::cli::cmd_ablate);
  add("scale", "gallery-size scaling with appended distractors", apreid::cli::cmd_scale);

  CLI11_PARSE(app, argc, argv);

  try {
    apreid::cli::RunConfig config;
    if (!pending.shared.config_path.empty()) config.load_file(pending.shared.config_path);
    config.apply_overrides(pending.shared.overrides);
    if (!pending.shared.out.empty()) config.out = pending.shared.out;
    if (pending.shared.seed >= 0) config.seed = static_cast<std::uint64_t>(pending.shared.seed);
    if (pending.shared.threads >= 0)
      config.threads = static_cast<std::size_t>(pending.shared.threads);
    pending.run(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
