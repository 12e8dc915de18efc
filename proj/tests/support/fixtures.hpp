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


#pragma once

#include "codeenhance/config.hpp"
#include "codeenhance/training.hpp"
#include "oracles.hpp"

namespace codeenhance::testing {

/// Run configuration small enough for a training step in milliseconds.
inline RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.network = tiny_config();
  cfg.train.crop = 16;
  cfg.train.batch = 2;
  cfg.train.stage1_iters = 4;
  cfg.train.stage2_iters = 4;
  cfg.train.lr = 1e-3;
  cfg.train.log_every = 1;
  cfg.train.seed = 3;
  cfg.data.synthetic_count = 4;
  cfg.data.synthetic_size = 16;
  cfg.data.synthetic_seed = 7;
  return cfg;
}

/// Stage I checkpoint after a few iterations of `tiny_run_config()`.
inline Checkpoint tiny_stage1_checkpoint(const RunConfig& cfg = tiny_run_config(), std::int64_t iters = 2) {
  auto state = init_stage1(cfg);
  run_training(state, load_training_data(cfg.data), iters);
  return make_checkpoint(state);
}

/// Stage II checkpoint trained on top of `tiny_stage1_checkpoint`.
inline Checkpoint tiny_stage2_checkpoint(const RunConfig& cfg = tiny_run_config(), std::int64_t iters = 2) {
  auto state = init_stage2(cfg, tiny_stage1_checkpoint(cfg));
  run_training(state, load_training_data(cfg.data), iters);
  return make_checkpoint(state);
}

}  // namespace codeenhance::testing
