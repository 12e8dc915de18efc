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

// Neural building blocks and their assembly into the two forward graphs.
//
// All blocks are free functions over a ParameterStore: `init_*` registers the
// block's parameters under a prefix, the matching forward function reads them
// back. Parameters are plain autograd leaves, so the same forward code serves
// training (gradient-requiring leaves) and inference (frozen leaves).

#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include "codeenhance/autograd.hpp"
#include "codeenhance/codebook.hpp"
#include "codeenhance/parameters.hpp"

namespace codeenhance {

struct NetworkConfig {
  int base_channels = 32;
  int latent_channels = 32;  // codebook d
  int downsample_factor = 8;
  int semantic_channels = 16;
  int image_size = 64;
  int codebook_size = 64;  // codebook N
  int attention_channels = 16;
  int mlp_hidden = 64;
  int tft_kernel = 1;
  /// Softmax(M / sqrt(d_k)) on the attention map; false keeps the raw product.
  bool attention_softmax = true;
  /// CPT statistics taken from the reference half of [F_d, F_e^r]; false uses
  /// the statistics aligned with F_d's own channels.
  bool cpt_reference_stats = true;

  /// Throws ContractViolation when the fields are inconsistent.
  void validate() const;
  int levels() const;
  /// Feature channels at a resolution level (0 = full resolution).
  int channels_at(int level) const;
  int latent_size() const { return image_size / downsample_factor; }
};

/// Stage II component switches (ablation toggles).
struct ModelToggles {
  bool use_sem = true;
  bool use_tft = true;
  bool use_cpt = true;
  bool use_cs = true;
};

// ---------------------------------------------------------------------------
// Parameter initialisation.

/// Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) conv weights, zero bias.
template <typename T>
void init_conv(ParameterStore<T>& store, const std::string& name, int cin, int cout, int kernel,
               std::mt19937_64& rng, bool trainable = true);

template <typename T>
void init_encoder(ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
                  std::mt19937_64& rng);
template <typename T>
void init_decoder(ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
                  std::mt19937_64& rng);
template <typename T>
void init_discriminator(ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
                        std::mt19937_64& rng);
/// V, the MLP output layer and the d-projection start so that SEM passes F_ll
/// through unchanged.
template <typename T>
void init_sem(ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
              std::mt19937_64& rng);
/// Starts at the affine identity (alpha = 1, beta = 0).
template <typename T>
void init_tft(ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg);
/// Codes ~ Uniform(-1/N, 1/N), zero shift.
template <typename T>
void init_codebook(ParameterStore<T>& store, const NetworkConfig& cfg, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Blocks.

template <typename T>
ag::Var<T> conv(const ParameterStore<T>& store, const std::string& name, const ag::Var<T>& x, int stride = 1);

template <typename T>
struct EncoderOutput {
  ag::Var<T> latent;  // [B, d, H/f, W/f]
  ag::Var<T> skip;    // full-resolution low-level feature
};

template <typename T>
EncoderOutput<T> encode(const ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
                        const ag::Var<T>& image);

template <typename T>
struct IftInputs {
  ag::Var<T> encoder_skip;    // F_e
  ag::Var<T> reference_skip;  // F_e^r
  T omega1 = T(1);
  T omega2 = T(1);
  bool use_tft = true;
  bool use_cpt = true;
  std::string prefix = "tft";
};

/// Pure decode when `ift` is null; otherwise the highest-resolution decoder
/// feature is replaced by the IFT output before the output convolution.
template <typename T>
ag::Var<T> decode(const ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
                  const ag::Var<T>& latent, const IftInputs<T>* ift = nullptr);

/// Patch logits, one per (H/8 x W/8) cell.
template <typename T>
ag::Var<T> discriminate(const ParameterStore<T>& store, const std::string& prefix, const ag::Var<T>& image);

template <typename T>
struct SemOutput {
  ag::Var<T> fused;      // F_sem, C_se + C_ll channels
  ag::Var<T> projected;  // d channels, fed to the quantizer
};

template <typename T>
SemOutput<T> sem_forward(const ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
                         const ag::Var<T>& f_ll, const ag::Var<T>& f_se);

template <typename T>
ag::Var<T> tft_forward(const ParameterStore<T>& store, const std::string& prefix, const ag::Var<T>& f_d,
                       const ag::Var<T>& f_e);

template <typename T>
struct ChannelStats {
  ag::Var<T> mean;  // [B, C]
  ag::Var<T> std;   // [B, C], population standard deviation
};

template <typename T>
ChannelStats<T> channel_stats(const ag::Var<T>& f);

template <typename T>
ag::Var<T> cpt_forward(const ag::Var<T>& f_d, const ag::Var<T>& f_ref, T omega1, T omega2,
                       bool reference_stats = true);

template <typename T>
ag::Var<T> ift_forward(const ParameterStore<T>& store, const ag::Var<T>& f_d, const IftInputs<T>& in,
                       bool reference_stats = true);

// ---------------------------------------------------------------------------
// Semantic feature extraction.

/// Produces semantic features at latent resolution from an RGB batch.
template <typename T>
class SemanticExtractor {
 public:
  virtual ~SemanticExtractor() = default;
  virtual Tensor<T> extract(const Tensor<T>& image) const = 0;
  virtual int channels() const = 0;
};

/// Frozen, seed-fixed strided convolution pyramid.
template <typename T>
class PyramidExtractor final : public SemanticExtractor<T> {
 public:
  explicit PyramidExtractor(const NetworkConfig& cfg, std::uint64_t seed = 0x5e3a11c0ffeeULL);
  Tensor<T> extract(const Tensor<T>& image) const override;
  int channels() const override { return channels_; }

 private:
  ParameterStore<T> params_;
  int levels_;
  int channels_;
};

// ---------------------------------------------------------------------------
// Assembled graphs.

template <typename T>
struct Stage1Forward {
  ag::Var<T> latent;         // Z_h
  QuantizationResult<T> q;   // against the unshifted codes
  ag::Var<T> code_rows;      // gathered codes (gradient reaches the codebook)
  ag::Var<T> reconstruction; // I'_h
};

/// encode -> quantize -> straight-through -> decode, parameters under
/// "encoder", "codebook.codes", "decoder".
template <typename T>
Stage1Forward<T> stage1_forward(const ParameterStore<T>& store, const NetworkConfig& cfg, const ag::Var<T>& image);

template <typename T>
struct Stage2Forward {
  ag::Var<T> see_latent;     // Z^_ll before quantization
  QuantizationResult<T> q;   // against the (optionally shifted) codebook
  ag::Var<T> image;          // enhanced output in [0, 1]
};

/// Encoder skip and semantic features can be supplied by the caller to share
/// work; otherwise they are computed here. `reference_skip` is F_e^r from the
/// frozen "hq_encoder".
template <typename T>
Stage2Forward<T> stage2_forward(const ParameterStore<T>& store, const NetworkConfig& cfg, const ModelToggles& toggles,
                                const ag::Var<T>& low_light, const ag::Var<T>& reference_skip, T omega1, T omega2,
                                const SemanticExtractor<T>& extractor);

/// Effective codebook (codes, plus shift when `use_cs`) as a graph node.
template <typename T>
ag::Var<T> effective_codebook(const ParameterStore<T>& store, bool use_cs);

}  // namespace codeenhance
