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

#include "codeenhance/training.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "codeenhance/losses.hpp"
#include "json.hpp"

namespace codeenhance {

using ag::Var;
using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(Options opt, std::vector<std::string> names, const ParameterStore<float>& store)
    : opt_(opt), names_(std::move(names)) {
  for (const auto& n : names_) {
    const auto& shape = store.get(n).shape();
    moments_.emplace(n, Moments{Tensor<float>(shape), Tensor<float>(shape)});
  }
}

void Adam::step(ParameterStore<float>& store) {
  ++steps_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(steps_));
  const auto b1 = static_cast<float>(opt_.beta1), b2 = static_cast<float>(opt_.beta2);
  const auto step_size = static_cast<float>(opt_.lr / c1);
  const auto inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<float>(opt_.eps);
  for (const auto& n : names_) {
    auto& p = store.get(n);
    auto& mom = moments_.at(n);
    const auto& g = p.grad();
    auto& w = p.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mom.m[i] = b1 * mom.m[i] + (1.0f - b1) * g[i];
      mom.v[i] = b2 * mom.v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step_size * mom.m[i] / (std::sqrt(mom.v[i]) * inv_sqrt_c2 + eps);
    }
  }
}

void Adam::zero_grad(ParameterStore<float>& store) const {
  for (const auto& n : names_) store.get(n).zero_grad();
}

std::int64_t Adam::state_numel() const {
  std::int64_t n = 0;
  for (const auto& [_, m] : moments_) n += static_cast<std::int64_t>(m.m.size() + m.v.size());
  return n;
}

void Adam::export_state(const std::string& prefix, std::vector<TensorEntry>& out) const {
  for (const auto& n : names_) {
    const auto& mom = moments_.at(n);
    out.push_back(TensorEntry{prefix + ".m." + n, mom.m, false});
    out.push_back(TensorEntry{prefix + ".v." + n, mom.v, false});
  }
}

void Adam::import_state(const std::string& prefix, const Checkpoint& ckpt, std::int64_t steps) {
  for (const auto& n : names_) {
    auto& mom = moments_.at(n);
    for (auto [suffix, target] : {std::pair{".m.", &mom.m}, std::pair{".v.", &mom.v}}) {
      const auto& entry = ckpt.at(prefix + suffix + n);
      if (entry.value.shape() != target->shape()) {
        throw IntegrityError(entry.name, "optimizer state shape does not match its parameter");
      }
      *target = entry.value;
    }
  }
  steps_ = steps;
}

// ---------------------------------------------------------------------------
// FreezePlan

FreezePlan FreezePlan::for_stage(int stage, const ModelToggles& toggles) {
  FreezePlan plan;
  plan.discriminator = {"disc."};
  if (stage == 1) {
    plan.generator = {"encoder.", "decoder.", "codebook.codes"};
  } else if (stage == 2) {
    plan.generator = {"encoder."};
    if (toggles.use_sem) plan.generator.push_back("sem.");
    if (toggles.use_cs) plan.generator.push_back("codebook.shift");
    if (toggles.use_tft) plan.generator.push_back("tft.");
  } else {
    throw ConfigurationError(fmt::format("stage must be 1 or 2, got {}", stage));
  }
  return plan;
}

namespace {

bool matches(const std::string& name, const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes) {
    if (p.back() == '.' ? ParameterStore<float>::has_prefix(name, p) : name == p) return true;
  }
  return false;
}

}  // namespace

bool FreezePlan::trains(const std::string& name) const {
  return matches(name, generator) || matches(name, discriminator);
}

std::vector<std::string> FreezePlan::generator_params(const ParameterStore<float>& store) const {
  std::vector<std::string> out;
  for (const auto& n : store.names()) {
    if (matches(n, generator)) out.push_back(n);
  }
  return out;
}

std::vector<std::string> FreezePlan::discriminator_params(const ParameterStore<float>& store) const {
  std::vector<std::string> out;
  for (const auto& n : store.names()) {
    if (matches(n, discriminator)) out.push_back(n);
  }
  return out;
}

std::vector<std::string> FreezePlan::frozen_params(const ParameterStore<float>& store) const {
  std::vector<std::string> out;
  for (const auto& n : store.names()) {
    if (!trains(n)) out.push_back(n);
  }
  return out;
}

void FreezePlan::apply(ParameterStore<float>& store) const {
  for (const auto& n : store.names()) store.get(n).set_requires_grad(trains(n));
}

std::uint64_t FreezePlan::frozen_checksum(const ParameterStore<float>& store) const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& n : frozen_params(store)) {
    const std::uint64_t part = store.checksum(n);
    h ^= part;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// LossRecord

double LossRecord::get(const std::string& name) const {
  for (const auto& [k, v] : terms) {
    if (k == name) return v;
  }
  throw ContractViolation("loss record has no term '" + name + "'");
}

bool LossRecord::all_finite() const {
  for (const auto& [_, v] : terms) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string LossRecord::describe() const {
  std::string s = fmt::format("iter {}", iteration);
  for (const auto& [k, v] : terms) s += fmt::format(" {}={:.6g}", k, v);
  return s;
}

// ---------------------------------------------------------------------------
// State construction

namespace {

Adam::Options adam_options(const TrainConfig& t) { return Adam::Options{t.lr, t.adam_beta1, t.adam_beta2, t.adam_eps}; }

void build_optimizers(TrainState& s) {
  s.plan.apply(s.params);
  const auto opt = adam_options(s.config.train);
  s.generator_opt = Adam(opt, s.plan.generator_params(s.params), s.params);
  s.disc_opt = Adam(opt, s.plan.discriminator_params(s.params), s.params);
}

void check_finite(TrainState& s, const LossRecord& rec) {
  if (rec.all_finite()) return;
  std::string msg = "non-finite loss at " + rec.describe();
  if (s.last_finite) msg += "; last finite: " + s.last_finite->describe();
  throw NonFiniteLoss(msg);
}

Var<float> disc_logits(const TrainState& s, const Var<float>& image) {
  return discriminate(s.params, "disc", image);
}

// Discriminator update on detached generator output.
double discriminator_step(TrainState& s, const Var<float>& real, const Var<float>& fake) {
  const auto gamma = static_cast<float>(s.config.loss.gamma);
  Var<float> d_loss = loss_adv_d(disc_logits(s, real), disc_logits(s, ag::detach(fake)), gamma);
  const double value = d_loss.item();
  if (!std::isfinite(value)) return value;
  s.disc_opt.zero_grad(s.params);
  ag::backward(d_loss);
  s.disc_opt.step(s.params);
  return value;
}

void set_disc_trainable(TrainState& s, bool on) {
  for (const auto& n : s.disc_opt.names()) s.params.get(n).set_requires_grad(on);
}

}  // namespace

TrainState init_stage1(const RunConfig& config) {
  config.validate();
  TrainState s;
  s.stage = 1;
  s.config = config;
  s.rng.seed(config.train.seed);
  const auto& net = config.network;
  init_encoder(s.params, "encoder", net, s.rng);
  init_decoder(s.params, "decoder", net, s.rng);
  init_codebook(s.params, net, s.rng);
  init_discriminator(s.params, "disc", net, s.rng);
  s.plan = FreezePlan::for_stage(1, config.toggles);
  build_optimizers(s);
  return s;
}

TrainState init_stage2(const RunConfig& config, const Checkpoint& stage1) {
  config.validate();
  if (stage1.stage != 1) {
    throw ConfigurationError(fmt::format("Stage II needs a Stage I checkpoint, got a stage {} checkpoint", stage1.stage));
  }
  check_compatible(stage1, config.network);
  TrainState s;
  s.stage = 2;
  s.config = config;
  s.rng.seed(config.train.seed);
  const auto& net = config.network;
  for (const auto& t : stage1.tensors) {
    if (ParameterStore<float>::has_prefix(t.name, "optim.")) continue;
    s.params.add(t.name, t.value, false);
  }
  s.params.get("codebook.shift").mutable_value().fill(0.0f);
  s.params.copy_prefix("encoder", "hq_encoder", false);
  init_sem(s.params, "sem", net, s.rng);
  init_tft(s.params, "tft", net);
  s.plan = FreezePlan::for_stage(2, config.toggles);
  build_optimizers(s);
  s.extractor = std::make_shared<PyramidExtractor<float>>(net);
  return s;
}

// ---------------------------------------------------------------------------
// Steps

LossRecord train_stage1_step(TrainState& s, const Tensor<float>& clean) {
  if (s.stage != 1) throw ContractViolation("train_stage1_step on a stage 2 state");
  const auto& cfg = s.config;
  const auto beta = static_cast<float>(cfg.loss.beta), gamma = static_cast<float>(cfg.loss.gamma);
  Var<float> x = ag::constant(clean);
  auto f = stage1_forward(s.params, cfg.network, x);

  LossRecord rec;
  rec.iteration = s.iteration;
  const double d_value = discriminator_step(s, x, f.reconstruction);

  set_disc_trainable(s, false);
  Var<float> l1 = loss_l1(x, f.reconstruction);
  Var<float> cma = loss_cma(f.latent, f.code_rows, beta);
  Var<float> adv = loss_adv_g(disc_logits(s, f.reconstruction));
  Var<float> total = ag::add(ag::add(l1, cma), ag::scale(adv, gamma));
  rec.terms = {{"l1", l1.item()}, {"cma", cma.item()}, {"adv_g", adv.item()}, {"total_g", total.item()},
               {"adv_d", d_value}};
  try {
    check_finite(s, rec);
  } catch (...) {
    set_disc_trainable(s, true);
    throw;
  }
  s.generator_opt.zero_grad(s.params);
  ag::backward(total);
  s.generator_opt.step(s.params);
  set_disc_trainable(s, true);

  s.last_finite = rec;
  ++s.iteration;
  return rec;
}

LossRecord train_stage2_step(TrainState& s, const Tensor<float>& low_light, const Tensor<float>& clean) {
  if (s.stage != 2) throw ContractViolation("train_stage2_step on a stage 1 state");
  if (low_light.shape() != clean.shape()) throw ContractViolation("train_stage2_step: batch shapes differ");
  const auto& cfg = s.config;
  const auto& net = cfg.network;
  const auto beta = static_cast<float>(cfg.loss.beta), gamma = static_cast<float>(cfg.loss.gamma);
  Var<float> ll = ag::constant(low_light);
  Var<float> gt = ag::constant(clean);

  auto hq = encode(s.params, "hq_encoder", net, gt);
  const auto& codes = s.params.get("codebook.codes");
  Var<float> gt_target = ag::constant(quantize(hq.latent.value(), codes.value()).quantized);
  auto f = stage2_forward(s.params, net, cfg.toggles, ll, hq.skip, static_cast<float>(cfg.train.omega1),
                          static_cast<float>(cfg.train.omega2), *s.extractor);

  LossRecord rec;
  rec.iteration = s.iteration;
  const double d_value = discriminator_step(s, gt, f.image);

  set_disc_trainable(s, false);
  FeatureFn<float> psi = [&](const Var<float>& img) {
    return img.node() == gt.node() ? hq.latent : encode(s.params, "hq_encoder", net, img).latent;
  };
  Stage2LossParts<float> parts;
  parts.fema = loss_fema(f.see_latent, hq.latent, gt_target, beta);
  parts.rec = loss_rec(gt, f.image, psi);
  Var<float> adv = loss_adv_g(disc_logits(s, f.image));
  parts.adv = ag::scale(adv, gamma);
  const auto& shift = s.params.get("codebook.shift");
  Var<float> total = loss_total_stage2(parts, shift, cfg.loss);
  rec.terms = {{"fema", parts.fema.item()}, {"rec", parts.rec.item()}, {"adv_g", adv.item()},
               {"reg", loss_reg(shift).item()}, {"total_g", total.item()}, {"adv_d", d_value}};
  try {
    check_finite(s, rec);
  } catch (...) {
    set_disc_trainable(s, true);
    throw;
  }
  s.generator_opt.zero_grad(s.params);
  ag::backward(total);
  s.generator_opt.step(s.params);
  set_disc_trainable(s, true);

  s.last_finite = rec;
  ++s.iteration;
  return rec;
}

// ---------------------------------------------------------------------------
// Checkpoint conversion

Checkpoint make_checkpoint(const TrainState& s) {
  Checkpoint ckpt;
  ckpt.stage = s.stage;
  ckpt.iteration = s.iteration;
  ckpt.config = s.config;
  for (const auto& [name, var] : s.params.entries()) {
    ckpt.tensors.push_back(TensorEntry{name, var.value(), s.plan.trains(name)});
  }
  s.generator_opt.export_state("optim.generator", ckpt.tensors);
  s.disc_opt.export_state("optim.disc", ckpt.tensors);
  std::ostringstream rng;
  rng << s.rng;
  json state = {{"rng", rng.str()},
                {"generator_steps", s.generator_opt.steps()},
                {"disc_steps", s.disc_opt.steps()}};
  ckpt.state_json = state.dump();
  return ckpt;
}

TrainState restore_state(const Checkpoint& ckpt) {
  TrainState s;
  s.stage = ckpt.stage;
  s.config = ckpt.config;
  s.config.validate();
  s.iteration = ckpt.iteration;
  s.params = ckpt.parameters();
  s.plan = FreezePlan::for_stage(s.stage, s.config.toggles);
  build_optimizers(s);
  json state;
  try {
    state = json::parse(ckpt.state_json);
    std::istringstream rng(state.at("rng").get<std::string>());
    rng >> s.rng;
    if (!rng) throw IntegrityError("state.rng", "cannot restore the RNG state");
    s.generator_opt.import_state("optim.generator", ckpt, state.at("generator_steps").get<std::int64_t>());
    s.disc_opt.import_state("optim.disc", ckpt, state.at("disc_steps").get<std::int64_t>());
  } catch (const json::exception& e) {
    throw IntegrityError("state", std::string("malformed trainer state: ") + e.what());
  }
  if (s.stage == 2) s.extractor = std::make_shared<PyramidExtractor<float>>(s.config.network);
  return s;
}

// ---------------------------------------------------------------------------
// Data and loop

TrainingData synthetic_training_data(int count, int size, std::uint64_t seed, const DegradeRanges& ranges) {
  TrainingData data;
  const auto scenes = synth_scenes(count, size, seed);
  for (int i = 0; i < count; ++i) {
    auto rng = item_rng(seed ^ 0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(i));
    const auto params = sample_degrade_params(ranges, rng);
    data.pairs.push_back(synth_lowlight(scenes[static_cast<std::size_t>(i)], params, rng, fmt::format("scene{:03d}", i)));
  }
  return data;
}

TrainingData load_training_data(const DataConfig& data) {
  if (data.synthetic()) {
    return synthetic_training_data(data.synthetic_count, data.synthetic_size, data.synthetic_seed, data.degrade);
  }
  TrainingData out;
  out.pairs = load_pairs(data.root, data.manifest.empty() ? std::nullopt : std::optional<fs::path>(data.manifest));
  if (out.pairs.empty()) throw ConfigurationError("dataset '" + data.root + "' has no image pairs");
  return out;
}

Batch sample_batch(TrainState& s, const TrainingData& data) {
  if (data.pairs.empty()) throw ConfigurationError("training data is empty");
  std::uniform_int_distribution<std::size_t> pick(0, data.pairs.size() - 1);
  std::vector<Image> ll, gt;
  for (int i = 0; i < s.config.train.batch; ++i) {
    auto pair = augment_pair(data.pairs[pick(s.rng)], s.config.train.crop, s.rng);
    ll.push_back(std::move(pair.ll));
    gt.push_back(std::move(pair.gt));
  }
  return Batch{to_batch(ll), to_batch(gt)};
}

std::vector<LossRecord> run_training(TrainState& s, const TrainingData& data, std::int64_t until_iteration,
                                     const StepObserver& observer) {
  std::vector<LossRecord> history;
  while (s.iteration < until_iteration) {
    Batch b = sample_batch(s, data);
    LossRecord rec = s.stage == 1 ? train_stage1_step(s, b.clean) : train_stage2_step(s, b.low_light, b.clean);
    history.push_back(rec);
    if (observer && !observer(s, rec)) break;
  }
  return history;
}

StageRunResult run_stage(const RunConfig& config, int stage, const StageRunOptions& options) {
  config.validate();
  TrainState state;
  if (options.resume_from) {
    state = restore_state(load_checkpoint(*options.resume_from));
    if (state.stage != stage) {
      throw ConfigurationError(fmt::format("resume checkpoint is stage {}, requested stage {}", state.stage, stage));
    }
  } else if (stage == 1) {
    state = init_stage1(config);
  } else if (stage == 2) {
    const fs::path s1 = options.stage1_checkpoint.value_or(options.out_dir / "stage1.ckpt");
    if (!fs::exists(s1)) throw ConfigurationError("missing Stage I checkpoint '" + s1.string() + "'");
    state = init_stage2(config, load_checkpoint(s1));
  } else {
    throw ConfigurationError(fmt::format("stage must be 1 or 2, got {}", stage));
  }

  const TrainingData data = load_training_data(state.config.data);
  fs::create_directories(options.out_dir);
  const fs::path ckpt_path = options.out_dir / fmt::format("stage{}.ckpt", stage);
  const fs::path log_path = options.out_dir / fmt::format("losses_stage{}.csv", stage);
  std::ofstream csv(log_path, options.resume_from ? std::ios::app : std::ios::trunc);
  if (!csv) throw IoError("cannot write loss log '" + log_path.string() + "'");
  bool header_written = options.resume_from.has_value();

  const auto& t = state.config.train;
  StageRunResult result;
  result.checkpoint_path = ckpt_path;
  auto observer = [&](const TrainState& st, const LossRecord& rec) {
    if (!header_written) {
      csv << "iteration";
      for (const auto& [k, _] : rec.terms) csv << "," << k;
      csv << "\n";
      header_written = true;
    }
    csv << rec.iteration;
    for (const auto& [_, v] : rec.terms) csv << "," << fmt::format("{:.9g}", v);
    csv << "\n";
    if (options.log && (rec.iteration % t.log_every == 0 || st.iteration == t.iters(stage))) {
      *options.log << "stage " << stage << " " << rec.describe() << "\n" << std::flush;
    }
    if (t.checkpoint_every > 0 && st.iteration % t.checkpoint_every == 0) save_checkpoint(make_checkpoint(st), ckpt_path);
    return true;
  };
  result.history = run_training(state, data, t.iters(stage), observer);
  save_checkpoint(make_checkpoint(state), ckpt_path);
  return result;
}

}  // namespace codeenhance
