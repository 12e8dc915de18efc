// Copyright (c) 2026 CodeEnhance Authors. All Rights Reserved.
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

// codeenhance: train, enhance, eval, inspect and serve.
//
// Exit codes: 0 success, 1 runtime or per-file failure, 2 usage or
// configuration error, 3 training divergence.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "codeenhance/checkpoint.hpp"
#include "codeenhance/inference.hpp"
#include "codeenhance/service.hpp"
#include "codeenhance/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace codeenhance;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

struct Args {
  int stage = 1;
  std::string config;
  std::vector<std::string> checkpoints;
  std::string out;
  double omega1 = 1.0;
  double omega2 = 1.0;
  std::string reference;
  std::optional<std::uint64_t> seed;
  std::string host;
  std::optional<int> port;
  std::vector<std::string> inputs;
  std::string dataset;
};

RunConfig resolve_config(const Args& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  cfg.validate();
  return cfg;
}

Checkpoint require_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigurationError("--checkpoint is required");
  if (!fs::exists(path)) throw ConfigurationError("missing checkpoint '" + path + "'");
  return load_checkpoint(path);
}

std::optional<Image> load_reference(const Args& a) {
  if (a.reference.empty()) return std::nullopt;
  if (!fs::exists(a.reference)) throw ConfigurationError("missing reference image '" + a.reference + "'");
  return read_png(a.reference);
}

void check_omegas(const Args& a) {
  for (auto [name, v] : {std::pair{"--omega1", a.omega1}, std::pair{"--omega2", a.omega2}}) {
    if (!(v >= kOmegaMin && v <= kOmegaMax)) {
      throw ConfigurationError(fmt::format("{} must be within [{}, {}]", name, kOmegaMin, kOmegaMax));
    }
  }
}

int cmd_train(const Args& a) {
  RunConfig cfg = resolve_config(a);
  StageRunOptions opts;
  opts.out_dir = a.out.empty() ? fs::path(cfg.output_dir) : fs::path(a.out);
  opts.log = &std::cout;
  if (!a.checkpoints.empty()) {
    if (a.checkpoints.size() > 1) throw ConfigurationError("train takes a single --checkpoint");
    const fs::path p = a.checkpoints.front();
    if (!fs::exists(p)) throw ConfigurationError("missing checkpoint '" + p.string() + "'");
    const Checkpoint ckpt = load_checkpoint(p);
    if (ckpt.stage == a.stage) {
      opts.resume_from = p;
    } else if (a.stage == 2 && ckpt.stage == 1) {
      opts.stage1_checkpoint = p;
    } else {
      throw ConfigurationError(fmt::format("checkpoint '{}' is stage {}, cannot train stage {} from it", p.string(),
                                           ckpt.stage, a.stage));
    }
  }
  try {
    auto result = run_stage(cfg, a.stage, opts);
    std::cout << "wrote " << result.checkpoint_path.string() << "\n";
  } catch (const NonFiniteLoss& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDiverged;
  }
  return 0;
}

int cmd_enhance(const Args& a) {
  if (a.checkpoints.size() != 1) throw ConfigurationError("enhance takes exactly one --checkpoint");
  if (a.out.empty()) throw ConfigurationError("--out is required");
  check_omegas(a);
  const Enhancer model(require_checkpoint(a.checkpoints.front()));
  EnhanceOptions opts;
  opts.omega1 = a.omega1;
  opts.omega2 = a.omega2;
  opts.reference = load_reference(a);
  fs::create_directories(a.out);
  std::vector<std::string> failures;
  for (const auto& input : a.inputs) {
    try {
      const Image ll = read_png(input);
      const auto out = model.enhance(ll, opts);
      const fs::path stem = fs::path(a.out) / fs::path(input).stem();
      write_png(stem.string() + ".png", out.image);
      json sidecar = {{"input", input},
                      {"model_id", model.model_id()},
                      {"omega1", out.omega1},
                      {"omega2", out.omega2},
                      {"reference", a.reference.empty() ? json("neutral") : json(a.reference)},
                      {"width", image_width(out.image)},
                      {"height", image_height(out.image)}};
      std::ofstream(stem.string() + ".json") << sidecar.dump(2) << "\n";
      std::cout << "enhanced " << input << " -> " << stem.string() << ".png\n";
    } catch (const std::exception& e) {
      failures.push_back(input + ": " + e.what());
    }
  }
  if (!failures.empty()) {
    std::cerr << failures.size() << " of " << a.inputs.size() << " inputs failed:\n";
    for (const auto& f : failures) std::cerr << "  " << f << "\n";
    return kExitFailure;
  }
  return 0;
}

int cmd_eval(const Args& a) {
  if (a.checkpoints.empty() || a.checkpoints.size() > 3) {
    throw ConfigurationError("eval takes one Stage II --checkpoint, optionally with a Stage I --checkpoint");
  }
  if (a.out.empty()) throw ConfigurationError("--out is required");
  check_omegas(a);
  std::optional<Checkpoint> stage1, stage2;
  for (const auto& p : a.checkpoints) {
    Checkpoint c = require_checkpoint(p);
    auto& slot = c.stage == 1 ? stage1 : stage2;
    if (slot) throw ConfigurationError(fmt::format("more than one stage {} checkpoint given", c.stage));
    slot = std::move(c);
  }
  if (!stage2) throw ConfigurationError("eval needs a Stage II checkpoint");
  if (!fs::exists(a.dataset)) throw ConfigurationError("missing dataset '" + a.dataset + "'");
  const auto pairs = fs::is_regular_file(a.dataset)
                         ? load_pairs(fs::path(a.dataset).parent_path(), fs::path(a.dataset))
                         : load_pairs(a.dataset);
  if (pairs.empty()) throw ConfigurationError("dataset '" + a.dataset + "' has no image pairs");

  const Enhancer model(*stage2);
  EnhanceOptions opts;
  opts.omega1 = a.omega1;
  opts.omega2 = a.omega2;
  opts.reference = load_reference(a);
  MetricReport report = evaluate_pairs(model, pairs, opts, model.model_id());
  if (stage1) report.usage = usage_report(*stage1, model, pairs);

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream(out) << report.to_json() << "\n";
  fs::path text = out;
  text.replace_extension(".txt");
  std::ofstream(text) << report.to_text();
  std::cout << report.to_text();
  return 0;
}

int cmd_inspect(const Args& a) {
  if (a.checkpoints.size() != 1) throw ConfigurationError("inspect takes exactly one --checkpoint");
  const Checkpoint c = require_checkpoint(a.checkpoints.front());
  std::cout << "format_version " << c.format_version << "\n"
            << "stage          " << c.stage << "\n"
            << "iteration      " << c.iteration << "\n"
            << "model_id       " << c.model_id() << "\n";
  const auto params = c.parameters();
  std::cout << "parameters     " << params.numel() << "\n";
  for (const char* group : {"encoder.", "decoder.", "codebook.", "disc.", "sem.", "tft.", "hq_encoder."}) {
    const auto n = params.numel(group);
    if (n > 0) std::cout << fmt::format("  {:<12} {}\n", group, n);
  }
  std::cout << "tensors\n";
  for (const auto& t : c.tensors) {
    std::cout << fmt::format("  {:<48} [{}]{}\n", t.name, shape_str(t.value.shape()), t.trainable ? " trainable" : "");
  }
  std::cout << "config " << json::parse(c.config.to_json()).dump(2) << "\n";
  return 0;
}

EnhanceService* g_service = nullptr;

void handle_signal(int) {
  if (g_service) g_service->stop();
}

int cmd_serve(const Args& a) {
  if (a.checkpoints.size() != 1) throw ConfigurationError("serve takes exactly one --checkpoint");
  const RunConfig cfg = resolve_config(a);
  auto model = std::make_shared<const Enhancer>(require_checkpoint(a.checkpoints.front()));
  ServiceOptions opts;
  opts.host = a.host.empty() ? cfg.service.host : a.host;
  opts.port = a.port.value_or(cfg.service.port);
  opts.max_megapixels = cfg.service.max_megapixels;
  opts.workers = cfg.service.workers;
  EnhanceService service(model, opts);
  const int port = service.bind();
  g_service = &service;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::cout << "serving " << model->model_id() << " on http://" << opts.host << ":" << port << std::endl;
  service.listen();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-light image enhancement with codebook priors"};
  app.require_subcommand(1);
  Args a;

  auto add_seed = [&a](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&a](std::uint64_t s) { a.seed = s; }, "Random seed");
  };
  auto add_omegas = [&a](CLI::App* sub) {
    sub->add_option("--omega1", a.omega1, "Contrast weight in [0, 2]");
    sub->add_option("--omega2", a.omega2, "Brightness weight in [0, 2]");
    sub->add_option("--reference", a.reference, "Reference PNG (default: built-in neutral reference)");
  };

  auto* train = app.add_subcommand("train", "Run Stage I or Stage II training");
  train->add_option("--stage", a.stage, "Training stage")->check(CLI::IsMember({1, 2}));
  train->add_option("--config", a.config, "Config file");
  train->add_option("--checkpoint", a.checkpoints,
                    "Stage I checkpoint for Stage II, or a same-stage checkpoint to resume");
  train->add_option("--out", a.out, "Output directory (default: output.dir from the config)");
  add_seed(train);

  auto* enhance = app.add_subcommand("enhance", "Enhance PNG images");
  enhance->add_option("inputs", a.inputs, "Input PNG files")->required();
  enhance->add_option("--checkpoint", a.checkpoints, "Stage II checkpoint")->required();
  enhance->add_option("--out", a.out, "Output directory")->required();
  add_omegas(enhance);
  add_seed(enhance);

  auto* eval = app.add_subcommand("eval", "Score enhancement on a paired dataset");
  eval->add_option("dataset", a.dataset, "Dataset root (low/ + high/) or manifest file")->required();
  eval->add_option("--checkpoint", a.checkpoints, "Stage II checkpoint, plus Stage I for the usage report")
      ->required();
  eval->add_option("--out", a.out, "Report path (.json; a .txt table is written alongside)")->required();
  add_omegas(eval);
  add_seed(eval);

  auto* inspect = app.add_subcommand("inspect", "Describe a checkpoint");
  inspect->add_option("--checkpoint", a.checkpoints, "Checkpoint file")->required();
  add_seed(inspect);

  auto* serve = app.add_subcommand("serve", "Run the HTTP enhancement service");
  serve->add_option("--checkpoint", a.checkpoints, "Stage II checkpoint")->required();
  serve->add_option("--config", a.config, "Config file for [service] settings");
  serve->add_option("--host", a.host, "Bind address");
  serve->add_option_function<int>("--port", [&a](int p) { a.port = p; }, "Port (0 = ephemeral)");
  add_seed(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(a);
    if (*enhance) return cmd_enhance(a);
    if (*eval) return cmd_eval(a);
    if (*inspect) return cmd_inspect(a);
    if (*serve) return cmd_serve(a);
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IntegrityError& e) {
    std::cerr << "invalid checkpoint (" << e.field() << "): " << e.what() << "\n";
    return kExitUsage;
  } catch (const PairingError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
