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

#include "codeenhance/config.hpp"

#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace codeenhance {

namespace pt = boost::property_tree;
using nlohmann::json;

void TrainConfig::validate(const NetworkConfig& net) const {
  if (!(lr > 0)) throw ConfigurationError("train.lr must be > 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) throw ConfigurationError("train.adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) throw ConfigurationError("train.adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigurationError("train.adam_eps must be > 0");
  if (crop < net.downsample_factor || crop % net.downsample_factor != 0) {
    throw ConfigurationError("train.crop must be a positive multiple of network.downsample_factor");
  }
  if (batch < 1) throw ConfigurationError("train.batch must be >= 1");
  if (stage1_iters < 1 || stage2_iters < 1) throw ConfigurationError("train iteration counts must be >= 1");
  if (!std::isfinite(omega1) || !std::isfinite(omega2)) throw ConfigurationError("train.omega values must be finite");
  if (log_every < 1) throw ConfigurationError("train.log_every must be >= 1");
  if (checkpoint_every < 0) throw ConfigurationError("train.checkpoint_every must be >= 0");
}

void RunConfig::validate() const {
  try {
    network.validate();
    loss.validate();
  } catch (const ContractViolation& e) {
    throw ConfigurationError(e.what());
  }
  train.validate(network);
  if (data.synthetic()) {
    if (data.synthetic_count < 1) throw ConfigurationError("data.synthetic_count must be >= 1");
    if (data.synthetic_size < train.crop) throw ConfigurationError("data.synthetic_size must be >= train.crop");
  }
  const auto& d = data.degrade;
  if (!(d.gamma_min > 0 && d.gamma_min <= d.gamma_max) || !(d.gain_min > 0 && d.gain_min <= d.gain_max && d.gain_max <= 1) ||
      !(d.noise_min >= 0 && d.noise_min <= d.noise_max) || !(d.color_min >= 0 && d.color_min <= d.color_max)) {
    throw ConfigurationError("data degradation ranges are invalid");
  }
  if (service.port < 0 || service.port > 65535) throw ConfigurationError("service.port out of range");
  if (!(service.max_megapixels > 0)) throw ConfigurationError("service.max_megapixels must be > 0");
  if (service.workers < 0) throw ConfigurationError("service.workers must be >= 0");
}

namespace {

// One binding per config key: reads a string into the field and writes the
// field back out to JSON.
struct Binding {
  std::function<void(const std::string&)> parse;
  std::function<json()> dump;
  std::function<void(const json&)> load;
};

template <typename V>
V convert(const std::string& key, const std::string& raw) {
  if constexpr (std::is_same_v<V, bool>) {
    if (raw == "true" || raw == "1") return true;
    if (raw == "false" || raw == "0") return false;
    throw ConfigurationError("config key '" + key + "': expected true or false, got '" + raw + "'");
  } else if constexpr (std::is_same_v<V, std::string>) {
    return raw;
  } else {
    try {
      return boost::lexical_cast<V>(raw);
    } catch (const boost::bad_lexical_cast&) {
      throw ConfigurationError("config key '" + key + "': cannot parse '" + raw + "'");
    }
  }
}

template <typename V>
Binding bind_field(const std::string& key, V& field) {
  return Binding{[&field, key](const std::string& raw) { field = convert<V>(key, raw); },
                 [&field] { return json(field); },
                 [&field, key](const json& j) {
                   try {
                     field = j.get<V>();
                   } catch (const json::exception&) {
                     throw IntegrityError(key, "config snapshot field '" + key + "' has the wrong type");
                   }
                 }};
}

std::map<std::string, Binding> bindings(RunConfig& c) {
  std::map<std::string, Binding> b;
  auto& n = c.network;
  b.emplace("network.base_channels", bind_field("network.base_channels", n.base_channels));
  b.emplace("network.latent_channels", bind_field("network.latent_channels", n.latent_channels));
  b.emplace("network.downsample_factor", bind_field("network.downsample_factor", n.downsample_factor));
  b.emplace("network.semantic_channels", bind_field("network.semantic_channels", n.semantic_channels));
  b.emplace("network.image_size", bind_field("network.image_size", n.image_size));
  b.emplace("network.codebook_size", bind_field("network.codebook_size", n.codebook_size));
  b.emplace("network.attention_channels", bind_field("network.attention_channels", n.attention_channels));
  b.emplace("network.mlp_hidden", bind_field("network.mlp_hidden", n.mlp_hidden));
  b.emplace("network.tft_kernel", bind_field("network.tft_kernel", n.tft_kernel));
  b.emplace("network.attention_softmax", bind_field("network.attention_softmax", n.attention_softmax));
  b.emplace("network.cpt_reference_stats", bind_field("network.cpt_reference_stats", n.cpt_reference_stats));
  auto& t = c.train;
  b.emplace("train.lr", bind_field("train.lr", t.lr));
  b.emplace("train.adam_beta1", bind_field("train.adam_beta1", t.adam_beta1));
  b.emplace("train.adam_beta2", bind_field("train.adam_beta2", t.adam_beta2));
  b.emplace("train.adam_eps", bind_field("train.adam_eps", t.adam_eps));
  b.emplace("train.crop", bind_field("train.crop", t.crop));
  b.emplace("train.batch", bind_field("train.batch", t.batch));
  b.emplace("train.stage1_iters", bind_field("train.stage1_iters", t.stage1_iters));
  b.emplace("train.stage2_iters", bind_field("train.stage2_iters", t.stage2_iters));
  b.emplace("train.seed", bind_field("train.seed", t.seed));
  b.emplace("train.omega1", bind_field("train.omega1", t.omega1));
  b.emplace("train.omega2", bind_field("train.omega2", t.omega2));
  b.emplace("train.log_every", bind_field("train.log_every", t.log_every));
  b.emplace("train.checkpoint_every", bind_field("train.checkpoint_every", t.checkpoint_every));
  b.emplace("loss.beta", bind_field("loss.beta", c.loss.beta));
  b.emplace("loss.gamma", bind_field("loss.gamma", c.loss.gamma));
  b.emplace("loss.lambda1", bind_field("loss.lambda1", c.loss.lambda1));
  b.emplace("model.use_sem", bind_field("model.use_sem", c.toggles.use_sem));
  b.emplace("model.use_tft", bind_field("model.use_tft", c.toggles.use_tft));
  b.emplace("model.use_cpt", bind_field("model.use_cpt", c.toggles.use_cpt));
  b.emplace("model.use_cs", bind_field("model.use_cs", c.toggles.use_cs));
  auto& d = c.data;
  b.emplace("data.root", bind_field("data.root", d.root));
  b.emplace("data.manifest", bind_field("data.manifest", d.manifest));
  b.emplace("data.synthetic_count", bind_field("data.synthetic_count", d.synthetic_count));
  b.emplace("data.synthetic_size", bind_field("data.synthetic_size", d.synthetic_size));
  b.emplace("data.synthetic_seed", bind_field("data.synthetic_seed", d.synthetic_seed));
  b.emplace("data.gamma_min", bind_field("data.gamma_min", d.degrade.gamma_min));
  b.emplace("data.gamma_max", bind_field("data.gamma_max", d.degrade.gamma_max));
  b.emplace("data.gain_min", bind_field("data.gain_min", d.degrade.gain_min));
  b.emplace("data.gain_max", bind_field("data.gain_max", d.degrade.gain_max));
  b.emplace("data.noise_min", bind_field("data.noise_min", d.degrade.noise_min));
  b.emplace("data.noise_max", bind_field("data.noise_max", d.degrade.noise_max));
  b.emplace("data.color_min", bind_field("data.color_min", d.degrade.color_min));
  b.emplace("data.color_max", bind_field("data.color_max", d.degrade.color_max));
  b.emplace("service.host", bind_field("service.host", c.service.host));
  b.emplace("service.port", bind_field("service.port", c.service.port));
  b.emplace("service.max_megapixels", bind_field("service.max_megapixels", c.service.max_megapixels));
  b.emplace("service.workers", bind_field("service.workers", c.service.workers));
  b.emplace("output.dir", bind_field("output.dir", c.output_dir));
  return b;
}

std::string strip(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Drops '#' comments outside double quotes.
std::string strip_comments(const std::string& text) {
  std::istringstream in(text);
  std::string out, line;
  while (std::getline(in, line)) {
    bool quoted = false;
    std::size_t cut = line.size();
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        cut = i;
        break;
      }
    }
    out += line.substr(0, cut) + "\n";
  }
  return out;
}

std::string unquote(std::string v) {
  v = strip(v);
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\''))) {
    v = v.substr(1, v.size() - 2);
  }
  return v;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
  pt::ptree tree;
  std::istringstream in(strip_comments(text));
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigurationError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  RunConfig cfg;
  auto table = bindings(cfg);
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) {
      throw ConfigurationError(source + ": key '" + section + "' must live inside a [section]");
    }
    for (const auto& [key, value] : entries) {
      const std::string full = section + "." + key;
      auto it = table.find(full);
      if (it == table.end()) throw ConfigurationError(source + ": unknown config key '" + full + "'");
      it->second.parse(unquote(value.data()));
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string RunConfig::to_json() const {
  RunConfig copy = *this;
  json j = json::object();
  for (const auto& [key, b] : bindings(copy)) j[key] = b.dump();
  return j.dump();
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IntegrityError("config", std::string("config snapshot is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  auto table = bindings(cfg);
  for (const auto& [key, value] : j.items()) {
    auto it = table.find(key);
    if (it == table.end()) throw IntegrityError(key, "unknown config snapshot field '" + key + "'");
    it->second.load(value);
  }
  return cfg;
}

}  // namespace codeenhance
