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

// Two-stage training.
//
// Stage I learns the encoder, decoder, codebook and discriminator on clean
// images. Stage II starts from a Stage I checkpoint, freezes the decoder, the
// codes and a copy of the encoder ("hq_encoder"), and trains the encoder,
// SEM, codebook shift, TFT and discriminator on low-light/clean pairs.
//
// Every iteration runs one discriminator update on detached generator output
// followed by one generator update against the refreshed discriminator.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "codeenhance/checkpoint.hpp"
#include "codeenhance/config.hpp"
#include "codeenhance/data.hpp"
#include "codeenhance/networks.hpp"

namespace codeenhance {

class Adam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(Options opt, std::vector<std::string> names, const ParameterStore<float>& store);

  /// One update of every managed parameter from its accumulated gradient.
  void step(ParameterStore<float>& store);
  void zero_grad(ParameterStore<float>& store) const;

  const std::vector<std::string>& names() const { return names_; }
  std::int64_t steps() const { return steps_; }
  std::int64_t state_numel() const;

  void export_state(const std::string& prefix, std::vector<TensorEntry>& out) const;
  void import_state(const std::string& prefix, const Checkpoint& ckpt, std::int64_t steps);

 private:
  struct Moments {
    Tensor<float> m;
    Tensor<float> v;
  };
  Options opt_;
  std::vector<std::string> names_;
  std::map<std::string, Moments> moments_;
  std::int64_t steps_ = 0;
};

/// Parameter groups per stage, as name prefixes ("encoder." or an exact name).
struct FreezePlan {
  std::vector<std::string> generator;
  std::vector<std::string> discriminator;

  static FreezePlan for_stage(int stage, const ModelToggles& toggles);

  bool trains(const std::string& name) const;
  std::vector<std::string> generator_params(const ParameterStore<float>& store) const;
  std::vector<std::string> discriminator_params(const ParameterStore<float>& store) const;
  std::vector<std::string> frozen_params(const ParameterStore<float>& store) const;
  /// Sets requires_grad on every parameter according to the plan.
  void apply(ParameterStore<float>& store) const;
  /// FNV-1a over the frozen parameters.
  std::uint64_t frozen_checksum(const ParameterStore<float>& store) const;
};

struct LossRecord {
  std::int64_t iteration = 0;
  std::vector<std::pair<std::string, double>> terms;

  double get(const std::string& name) const;
  bool all_finite() const;
  std::string describe() const;
};

struct TrainState {
  int stage = 1;
  RunConfig config;
  ParameterStore<float> params;
  FreezePlan plan;
  Adam generator_opt;
  Adam disc_opt;
  std::mt19937_64 rng;
  std::int64_t iteration = 0;
  std::shared_ptr<const SemanticExtractor<float>> extractor;
  std::optional<LossRecord> last_finite;
};

/// Fresh Stage I state seeded from config.train.seed.
TrainState init_stage1(const RunConfig& config);
/// Stage II state on top of a Stage I checkpoint.
TrainState init_stage2(const RunConfig& config, const Checkpoint& stage1);

/// One iteration on a [B, 3, H, W] batch of clean images.
LossRecord train_stage1_step(TrainState& state, const Tensor<float>& clean);
/// One iteration on aligned [B, 3, H, W] low-light and clean batches; the
/// clean image doubles as the CPT reference.
LossRecord train_stage2_step(TrainState& state, const Tensor<float>& low_light, const Tensor<float>& clean);

Checkpoint make_checkpoint(const TrainState& state);
/// Rebuilds a state (parameters, optimizer moments, RNG) for resumption.
TrainState restore_state(const Checkpoint& ckpt);

struct TrainingData {
  std::vector<ImagePair> pairs;
};

/// Synthetic scenes with sampled degradations, or pairs loaded from disk.
TrainingData load_training_data(const DataConfig& data);
/// Synthetic set with explicit degradation per pair.
TrainingData synthetic_training_data(int count, int size, std::uint64_t seed, const DegradeRanges& ranges);

struct Batch {
  Tensor<float> low_light;
  Tensor<float> clean;
};

/// Draws `batch` random pairs, crops and flips them with the state's RNG.
Batch sample_batch(TrainState& state, const TrainingData& data);

/// Observer called after every step; returning false stops the run.
using StepObserver = std::function<bool(const TrainState&, const LossRecord&)>;

/// Advances `state` until `until_iteration`. Throws NonFiniteLoss on divergence.
std::vector<LossRecord> run_training(TrainState& state, const TrainingData& data, std::int64_t until_iteration,
                                     const StepObserver& observer = {});

/// Full stage run: trains, logs a loss CSV and writes stage<N>.ckpt under
/// `out_dir`. Stage II reads `stage1` (default out_dir/stage1.ckpt).
struct StageRunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> stage1_checkpoint;
  std::optional<std::filesystem::path> resume_from;
  std::ostream* log = nullptr;
};

struct StageRunResult {
  std::filesystem::path checkpoint_path;
  std::vector<LossRecord> history;
};

StageRunResult run_stage(const RunConfig& config, int stage, const StageRunOptions& options);

}  // namespace codeenhance
