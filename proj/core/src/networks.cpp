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

#include "codeenhance/networks.hpp"

#include <cmath>

namespace codeenhance {

using ag::Var;

void NetworkConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ContractViolation(std::string("network config: ") + name + " must be positive");
  };
  positive(base_channels, "base_channels");
  positive(latent_channels, "latent_channels");
  positive(semantic_channels, "semantic_channels");
  positive(image_size, "image_size");
  positive(codebook_size, "codebook_size");
  positive(attention_channels, "attention_channels");
  positive(mlp_hidden, "mlp_hidden");
  if (downsample_factor < 2 || (downsample_factor & (downsample_factor - 1)) != 0) {
    throw ContractViolation("network config: downsample_factor must be a power of two >= 2");
  }
  if (image_size % downsample_factor != 0) {
    throw ContractViolation("network config: image_size " + std::to_string(image_size) +
                            " not divisible by downsample_factor " + std::to_string(downsample_factor));
  }
  if (tft_kernel < 1 || tft_kernel % 2 == 0) throw ContractViolation("network config: tft_kernel must be odd");
}

int NetworkConfig::levels() const {
  int l = 0;
  for (int f = downsample_factor; f > 1; f >>= 1) ++l;
  return l;
}

int NetworkConfig::channels_at(int level) const { return level >= 2 ? 2 * base_channels : base_channels; }

// ---------------------------------------------------------------------------

template <typename T>
void init_conv(ParameterStore<T>& store, const std::string& name, int cin, int cout, int kernel,
               std::mt19937_64& rng, bool trainable) {
  const double bound = std::sqrt(3.0 / static_cast<double>(cin * kernel * kernel));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> w(Shape{cout, cin, kernel, kernel});
  for (auto& v : w.vec()) v = static_cast<T>(dist(rng));
  store.add(name + ".weight", std::move(w), trainable);
  store.add(name + ".bias", Tensor<T>(Shape{cout}), trainable);
}

template <typename T>
void init_encoder(ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
                  std::mt19937_64& rng) {
  cfg.validate();
  init_conv(store, prefix + ".conv_in", 3, cfg.channels_at(0), 3, rng);
  for (int l = 1; l <= cfg.levels(); ++l) {
    const std::string p = prefix + ".down" + std::to_string(l);
    init_conv(store, p + ".conv", cfg.channels_at(l - 1), cfg.channels_at(l), 3, rng);
    init_conv(store, p + ".res", cfg.channels_at(l), cfg.channels_at(l), 3, rng);
  }
  init_conv(store, prefix + ".conv_out", cfg.channels_at(cfg.levels()), cfg.latent_channels, 1, rng);
}

template <typename T>
void init_decoder(ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
                  std::mt19937_64& rng) {
  cfg.validate();
  const int top = cfg.levels();
  init_conv(store, prefix + ".conv_in", cfg.latent_channels, cfg.channels_at(top), 3, rng);
  init_conv(store, prefix + ".mid", cfg.channels_at(top), cfg.channels_at(top), 3, rng);
  for (int l = top - 1; l >= 0; --l) {
    init_conv(store, prefix + ".up" + std::to_string(l), cfg.channels_at(l + 1), cfg.channels_at(l), 3, rng);
  }
  init_conv(store, prefix + ".conv_out", cfg.channels_at(0), 3, 3, rng);
}

template <typename T>
void init_discriminator(ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
                        std::mt19937_64& rng) {
  const int c = cfg.base_channels;
  init_conv(store, prefix + ".c1", 3, c, 3, rng);
  init_conv(store, prefix + ".c2", c, 2 * c, 3, rng);
  init_conv(store, prefix + ".c3", 2 * c, 2 * c, 3, rng);
  init_conv(store, prefix + ".out", 2 * c, 1, 1, rng);
}

template <typename T>
void init_sem(ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
              std::mt19937_64& rng) {
  const int cs = cfg.semantic_channels;
  const int c = cs + cfg.latent_channels;
  init_conv(store, prefix + ".q", cs, cfg.attention_channels, 1, rng);
  init_conv(store, prefix + ".k", c, cfg.attention_channels, 1, rng);
  store.add(prefix + ".v.weight", Tensor<T>(Shape{c, c, 1, 1}));
  store.add(prefix + ".v.bias", Tensor<T>(Shape{c}));
  init_conv(store, prefix + ".mlp1", c, cfg.mlp_hidden, 1, rng);
  store.add(prefix + ".mlp2.weight", Tensor<T>(Shape{c, cfg.mlp_hidden, 1, 1}));
  store.add(prefix + ".mlp2.bias", Tensor<T>(Shape{c}));
  // Projection starts as a selector of the F_ll half of [F_se, F_ll].
  Tensor<T> proj(Shape{cfg.latent_channels, c, 1, 1});
  for (int o = 0; o < cfg.latent_channels; ++o) proj.at(o, cs + o, 0, 0) = T(1);
  store.add(prefix + ".proj.weight", std::move(proj));
  store.add(prefix + ".proj.bias", Tensor<T>(Shape{cfg.latent_channels}));
}

template <typename T>
void init_tft(ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg) {
  const int c = cfg.channels_at(0);
  const int k = cfg.tft_kernel;
  store.add(prefix + ".conv.weight", Tensor<T>(Shape{2 * c, 2 * c, k, k}));
  Tensor<T> bias(Shape{2 * c});
  for (int i = 0; i < c; ++i) bias[static_cast<std::size_t>(i)] = T(1);
  store.add(prefix + ".conv.bias", std::move(bias));
}

template <typename T>
void init_codebook(ParameterStore<T>& store, const NetworkConfig& cfg, std::mt19937_64& rng) {
  const double bound = 1.0 / cfg.codebook_size;
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> codes(Shape{cfg.codebook_size, cfg.latent_channels});
  for (auto& v : codes.vec()) v = static_cast<T>(dist(rng));
  store.add("codebook.codes", std::move(codes));
  store.add("codebook.shift", Tensor<T>(Shape{cfg.codebook_size, cfg.latent_channels}));
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> conv(const ParameterStore<T>& store, const std::string& name, const Var<T>& x, int stride) {
  const auto& w = store.get(name + ".weight");
  const int k = static_cast<int>(w.dim(2));
  return ag::conv2d(x, w, store.get(name + ".bias"), stride, k / 2);
}

template <typename T>
EncoderOutput<T> encode(const ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
                        const Var<T>& image) {
  if (image.value().rank() != 4 || image.dim(1) != 3) {
    throw ContractViolation("encode: expected [B, 3, H, W] image, got " + shape_str(image.shape()));
  }
  if (image.dim(2) % cfg.downsample_factor != 0 || image.dim(3) % cfg.downsample_factor != 0) {
    throw ContractViolation("encode: image size " + std::to_string(image.dim(2)) + "x" +
                            std::to_string(image.dim(3)) + " not divisible by " +
                            std::to_string(cfg.downsample_factor));
  }
  EncoderOutput<T> out;
  Var<T> h = ag::swish(conv(store, prefix + ".conv_in", image));
  out.skip = h;
  for (int l = 1; l <= cfg.levels(); ++l) {
    const std::string p = prefix + ".down" + std::to_string(l);
    h = ag::swish(conv(store, p + ".conv", h, 2));
    h = ag::add(h, ag::swish(conv(store, p + ".res", h)));
  }
  out.latent = conv(store, prefix + ".conv_out", h);
  return out;
}

template <typename T>
Var<T> decode(const ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
              const Var<T>& latent, const IftInputs<T>* ift) {
  if (latent.value().rank() != 4 || latent.dim(1) != cfg.latent_channels) {
    throw ContractViolation("decode: expected " + std::to_string(cfg.latent_channels) +
                            " latent channels, got " + shape_str(latent.shape()));
  }
  const int top = cfg.levels();
  Var<T> h = ag::swish(conv(store, prefix + ".conv_in", latent));
  h = ag::add(h, ag::swish(conv(store, prefix + ".mid", h)));
  for (int l = top - 1; l >= 0; --l) {
    h = ag::swish(conv(store, prefix + ".up" + std::to_string(l), ag::upsample_nearest2x(h)));
  }
  if (ift != nullptr && (ift->use_tft || ift->use_cpt)) h = ift_forward(store, h, *ift, cfg.cpt_reference_stats);
  return ag::sigmoid(conv(store, prefix + ".conv_out", h));
}

template <typename T>
Var<T> discriminate(const ParameterStore<T>& store, const std::string& prefix, const Var<T>& image) {
  if (image.value().rank() != 4 || image.dim(1) != 3) {
    throw ContractViolation("discriminate: expected [B, 3, H, W] image, got " + shape_str(image.shape()));
  }
  const T slope = T(0.2);
  Var<T> h = ag::leaky_relu(conv(store, prefix + ".c1", image, 2), slope);
  h = ag::leaky_relu(conv(store, prefix + ".c2", h, 2), slope);
  h = ag::leaky_relu(conv(store, prefix + ".c3", h, 2), slope);
  return conv(store, prefix + ".out", h);
}

template <typename T>
SemOutput<T> sem_forward(const ParameterStore<T>& store, const std::string& prefix, const NetworkConfig& cfg,
                         const Var<T>& f_ll, const Var<T>& f_se) {
  if (f_ll.value().rank() != 4 || f_se.value().rank() != 4 || f_ll.dim(2) != f_se.dim(2) ||
      f_ll.dim(3) != f_se.dim(3) || f_ll.dim(0) != f_se.dim(0)) {
    throw ContractViolation("sem_forward: F_ll " + shape_str(f_ll.shape()) + " and F_se " +
                            shape_str(f_se.shape()) + " are not spatially aligned");
  }
  const std::int64_t batch = f_ll.dim(0), tokens = f_ll.dim(2) * f_ll.dim(3);
  const Var<T> x = ag::concat_channels(f_se, f_ll);
  const std::int64_t c = x.dim(1);
  const std::int64_t dk = cfg.attention_channels;

  Var<T> q = ag::transpose_last2(ag::reshape(conv(store, prefix + ".q", f_se), {batch, dk, tokens}));
  Var<T> k = ag::reshape(conv(store, prefix + ".k", x), {batch, dk, tokens});
  Var<T> m = ag::bmm(q, k);  // [B, T, T], rows index query tokens
  if (cfg.attention_softmax) m = ag::softmax_lastdim(ag::scale(m, T(1) / std::sqrt(static_cast<T>(dk))));

  // Token i of the output mixes value tokens j with weight M[i, j].
  Var<T> v = ag::reshape(conv(store, prefix + ".v", x), {batch, c, tokens});
  Var<T> attended = ag::reshape(ag::bmm(v, ag::transpose_last2(m)), x.shape());
  Var<T> f_prime = ag::add(attended, x);

  Var<T> hidden = ag::swish(conv(store, prefix + ".mlp1", f_prime));
  SemOutput<T> out;
  out.fused = ag::add(conv(store, prefix + ".mlp2", hidden), f_prime);
  out.projected = conv(store, prefix + ".proj", out.fused);
  return out;
}

template <typename T>
Var<T> tft_forward(const ParameterStore<T>& store, const std::string& prefix, const Var<T>& f_d,
                   const Var<T>& f_e) {
  if (f_d.value().rank() != 4 || f_e.value().rank() != 4 || f_d.dim(2) != f_e.dim(2) ||
      f_d.dim(3) != f_e.dim(3)) {
    throw ContractViolation("tft_forward: F_d " + shape_str(f_d.shape()) + " and F_e " + shape_str(f_e.shape()) +
                            " differ spatially");
  }
  const std::int64_t c = f_d.dim(1);
  Var<T> ab = conv(store, prefix + ".conv", ag::concat_channels(f_d, f_e));
  if (ab.dim(1) != 2 * c) throw ContractViolation("tft_forward: conv must emit 2x the decoder channels");
  Var<T> alpha = ag::slice_channels(ab, 0, c);
  Var<T> beta = ag::slice_channels(ab, c, c);
  return ag::add(ag::mul(alpha, f_d), beta);
}

template <typename T>
ChannelStats<T> channel_stats(const Var<T>& f) {
  if (f.value().rank() != 4 || f.dim(2) * f.dim(3) < 1) {
    throw ContractViolation("channel_stats: expected non-empty [B, C, H, W], got " + shape_str(f.shape()));
  }
  return {ag::channel_mean(f), ag::channel_std(f)};
}

namespace {

// [B, C] -> channels [start, start + count) as [B, count]
template <typename T>
Var<T> slice_stats(const Var<T>& s, std::int64_t start, std::int64_t count) {
  const std::int64_t b = s.dim(0), c = s.dim(1);
  return ag::reshape(ag::slice_channels(ag::reshape(s, {b, c, 1, 1}), start, count), {b, count});
}

}  // namespace

template <typename T>
Var<T> cpt_forward(const Var<T>& f_d, const Var<T>& f_ref, T omega1, T omega2, bool reference_stats) {
  if (f_d.value().rank() != 4 || f_ref.value().rank() != 4 || f_d.dim(0) != f_ref.dim(0) ||
      f_d.dim(2) != f_ref.dim(2) || f_d.dim(3) != f_ref.dim(3)) {
    throw ContractViolation("cpt_forward: F_d " + shape_str(f_d.shape()) + " and reference " +
                            shape_str(f_ref.shape()) + " are not aligned");
  }
  const std::int64_t c = f_d.dim(1);
  if (reference_stats && f_ref.dim(1) != c) {
    throw ContractViolation("cpt_forward: reference channels must match decoder channels");
  }
  const auto stats = channel_stats(ag::concat_channels(f_d, f_ref));
  const std::int64_t start = reference_stats ? c : 0;
  Var<T> mu = slice_stats(stats.mean, start, c);
  Var<T> sigma = slice_stats(stats.std, start, c);
  return ag::add_channelwise(ag::scale(ag::mul_channelwise(f_d, sigma), omega1), ag::scale(mu, omega2));
}

template <typename T>
Var<T> ift_forward(const ParameterStore<T>& store, const Var<T>& f_d, const IftInputs<T>& in, bool reference_stats) {
  Var<T> out = in.use_tft ? tft_forward(store, in.prefix, f_d, in.encoder_skip) : f_d;
  if (in.use_cpt) {
    if (!in.reference_skip.defined()) throw ContractViolation("ift_forward: CPT enabled without reference features");
    out = ag::add(out, cpt_forward(f_d, in.reference_skip, in.omega1, in.omega2, reference_stats));
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
PyramidExtractor<T>::PyramidExtractor(const NetworkConfig& cfg, std::uint64_t seed)
    : levels_(cfg.levels()), channels_(cfg.semantic_channels) {
  std::mt19937_64 rng(seed);
  int cin = 3;
  for (int l = 0; l < levels_; ++l) {
    const int cout = (l + 1 == levels_) ? channels_ : 8 + 4 * l;
    init_conv(params_, "sem_extractor.l" + std::to_string(l), cin, cout, 3, rng, false);
    // Non-zero biases keep flat regions from collapsing to identical features.
    auto& bias = params_.get("sem_extractor.l" + std::to_string(l) + ".bias").mutable_value();
    std::uniform_real_distribution<double> bd(-0.1, 0.1);
    for (auto& b : bias.vec()) b = static_cast<T>(bd(rng));
    cin = cout;
  }
}

template <typename T>
Tensor<T> PyramidExtractor<T>::extract(const Tensor<T>& image) const {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw ContractViolation("semantic_extract: expected [B, 3, H, W] image, got " + shape_str(image.shape()));
  }
  Var<T> h = ag::constant(image);
  for (int l = 0; l < levels_; ++l) {
    h = conv(params_, "sem_extractor.l" + std::to_string(l), h, 2);
    h = (l + 1 == levels_) ? ag::sigmoid(h) : ag::swish(h);
  }
  return h.value();
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> effective_codebook(const ParameterStore<T>& store, bool use_cs) {
  const auto& codes = store.get("codebook.codes");
  return use_cs ? ag::add(codes, store.get("codebook.shift")) : codes;
}

template <typename T>
Stage1Forward<T> stage1_forward(const ParameterStore<T>& store, const NetworkConfig& cfg, const Var<T>& image) {
  Stage1Forward<T> f;
  auto enc = encode(store, "encoder", cfg, image);
  f.latent = enc.latent;
  const auto& codes = store.get("codebook.codes");
  f.q = quantize(f.latent.value(), codes.value());
  f.code_rows = ag::gather_rows(codes, f.q.indices, f.q.batch, f.q.height, f.q.width);
  Var<T> st = ag::straight_through(f.latent, ag::detach(f.code_rows));
  f.reconstruction = decode(store, "decoder", cfg, st);
  return f;
}

template <typename T>
Stage2Forward<T> stage2_forward(const ParameterStore<T>& store, const NetworkConfig& cfg, const ModelToggles& toggles,
                                const Var<T>& low_light, const Var<T>& reference_skip, T omega1, T omega2,
                                const SemanticExtractor<T>& extractor) {
  Stage2Forward<T> f;
  auto enc = encode(store, "encoder", cfg, low_light);
  f.see_latent = enc.latent;
  if (toggles.use_sem) {
    Var<T> f_se = ag::constant(extractor.extract(low_light.value()));
    f.see_latent = sem_forward(store, "sem", cfg, enc.latent, f_se).projected;
  }
  Var<T> table = effective_codebook(store, toggles.use_cs);
  f.q = quantize(f.see_latent.value(), table.value());
  Var<T> rows = ag::gather_rows(table, f.q.indices, f.q.batch, f.q.height, f.q.width);
  Var<T> st = ag::straight_through(f.see_latent, rows);

  IftInputs<T> ift;
  ift.encoder_skip = enc.skip;
  ift.reference_skip = reference_skip;
  ift.omega1 = omega1;
  ift.omega2 = omega2;
  ift.use_tft = toggles.use_tft;
  ift.use_cpt = toggles.use_cpt;
  f.image = decode(store, "decoder", cfg, st, &ift);
  return f;
}

#define CODEENHANCE_INSTANTIATE_NET(T)                                                                       \
  template void init_conv<T>(ParameterStore<T>&, const std::string&, int, int, int, std::mt19937_64&, bool); \
  template void init_encoder<T>(ParameterStore<T>&, const std::string&, const NetworkConfig&,                \
                                std::mt19937_64&);                                                           \
  template void init_decoder<T>(ParameterStore<T>&, const std::string&, const NetworkConfig&,                \
                                std::mt19937_64&);                                                           \
  template void init_discriminator<T>(ParameterStore<T>&, const std::string&, const NetworkConfig&,          \
                                      std::mt19937_64&);                                                     \
  template void init_sem<T>(ParameterStore<T>&, const std::string&, const NetworkConfig&, std::mt19937_64&); \
  template void init_tft<T>(ParameterStore<T>&, const std::string&, const NetworkConfig&);                   \
  template void init_codebook<T>(ParameterStore<T>&, const NetworkConfig&, std::mt19937_64&);                \
  template Var<T> conv<T>(const ParameterStore<T>&, const std::string&, const Var<T>&, int);                 \
  template EncoderOutput<T> encode<T>(const ParameterStore<T>&, const std::string&, const NetworkConfig&,    \
                                      const Var<T>&);                                                        \
  template Var<T> decode<T>(const ParameterStore<T>&, const std::string&, const NetworkConfig&,              \
                            const Var<T>&, const IftInputs<T>*);                                             \
  template Var<T> discriminate<T>(const ParameterStore<T>&, const std::string&, const Var<T>&);              \
  template SemOutput<T> sem_forward<T>(const ParameterStore<T>&, const std::string&, const NetworkConfig&,   \
                                       const Var<T>&, const Var<T>&);                                        \
  template Var<T> tft_forward<T>(const ParameterStore<T>&, const std::string&, const Var<T>&,                \
                                 const Var<T>&);                                                             \
  template ChannelStats<T> channel_stats<T>(const Var<T>&);                                                  \
  template Var<T> cpt_forward<T>(const Var<T>&, const Var<T>&, T, T, bool);                                  \
  template Var<T> ift_forward<T>(const ParameterStore<T>&, const Var<T>&, const IftInputs<T>&, bool);        \
  template class PyramidExtractor<T>;                                                                        \
  template Var<T> effective_codebook<T>(const ParameterStore<T>&, bool);                                     \
  template Stage1Forward<T> stage1_forward<T>(const ParameterStore<T>&, const NetworkConfig&, const Var<T>&); \
  template Stage2Forward<T> stage2_forward<T>(const ParameterStore<T>&, const NetworkConfig&,                \
                                              const ModelToggles&, const Var<T>&, const Var<T>&, T, T,       \
                                              const SemanticExtractor<T>&);

CODEENHANCE_INSTANTIATE_NET(float)
CODEENHANCE_INSTANTIATE_NET(double)

#undef CODEENHANCE_INSTANTIATE_NET

}  // namespace codeenhance
