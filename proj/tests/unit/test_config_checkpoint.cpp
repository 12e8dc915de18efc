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


#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "codeenhance/checkpoint.hpp"
#include "codeenhance/config.hpp"
#include "codeenhance/errors.hpp"
#include "fixtures.hpp"
#include "temp_dir.hpp"

namespace codeenhance {
namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(RunConfig{}.validate()); }

TEST(Config, ParsesSectionsCommentsAndQuotes) {
  const auto cfg = parse_config(R"(
# leading comment
[network]
latent_channels = 16   # trailing comment
[train]
lr = 2e-4
seed = 42
[model]
use_cs = false
[data]
root = "data/#pairs"
)");
  EXPECT_EQ(cfg.network.latent_channels, 16);
  EXPECT_DOUBLE_EQ(cfg.train.lr, 2e-4);
  EXPECT_EQ(cfg.train.seed, 42u);
  EXPECT_FALSE(cfg.toggles.use_cs);
  EXPECT_TRUE(cfg.toggles.use_sem);
  EXPECT_EQ(cfg.data.root, "data/#pairs");
}

TEST(Config, UnknownKeyIsNamed) {
  const auto msg = error_of([] { parse_config("[train]\nlearning_rate = 1\n"); });
  EXPECT_NE(msg.find("train.learning_rate"), std::string::npos) << msg;
  EXPECT_THROW(parse_config("[nope]\nx = 1\n"), ConfigurationError);
}

TEST(Config, MalformedValuesAreConfigurationErrors) {
  EXPECT_THROW(parse_config("[train]\nbatch = many\n"), ConfigurationError);
  EXPECT_THROW(parse_config("[model]\nuse_sem = yes\n"), ConfigurationError);
  EXPECT_THROW(parse_config("[train]\nlr = -1\n"), ConfigurationError);
  EXPECT_THROW(parse_config("[train]\ncrop = 60\n"), ConfigurationError);
  EXPECT_THROW(parse_config("[network]\ndownsample_factor = 6\n"), ConfigurationError);
  EXPECT_THROW(parse_config("[loss]\nbeta = -0.5\n"), ConfigurationError);
  EXPECT_THROW(parse_config("[data]\ngain_max = 2\n"), ConfigurationError);
  EXPECT_THROW(load_config("/nonexistent/codeenhance.toml"), ConfigurationError);
}

TEST(Config, DeskFileLoads) {
  const auto cfg = load_config(CODEENHANCE_DESK_CONFIG);
  EXPECT_EQ(cfg.network.image_size, 64);
  EXPECT_EQ(cfg.network.codebook_size, 64);
  EXPECT_EQ(cfg.train.stage1_iters, 2000);
  EXPECT_TRUE(cfg.data.synthetic());
  EXPECT_EQ(cfg.service.host, "127.0.0.1");
}

TEST(Config, JsonSnapshotRoundTrips) {
  RunConfig cfg;
  cfg.network.latent_channels = 8;
  cfg.train.omega2 = 0.3;
  cfg.toggles.use_tft = false;
  cfg.data.root = "some/where";
  cfg.data.degrade.noise_max = 0.07;
  cfg.service.port = 9001;
  cfg.output_dir = "out";
  const auto back = RunConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.network.latent_channels, 8);
  EXPECT_FALSE(back.toggles.use_tft);
  EXPECT_DOUBLE_EQ(back.data.degrade.noise_max, 0.07);
  EXPECT_THROW(RunConfig::from_json("{\"train.bogus\": 1}"), IntegrityError);
  EXPECT_THROW(RunConfig::from_json("not json"), IntegrityError);
}

class CheckpointFile : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { ckpt_ = new Checkpoint(testing::tiny_stage1_checkpoint()); }
  static void TearDownTestSuite() { delete ckpt_; }
  static const Checkpoint& ckpt() { return *ckpt_; }

  // Replaces `from` with a same-length `to` inside the JSON header.
  static std::vector<unsigned char> patched(std::vector<unsigned char> bytes, const std::string& from,
                                            const std::string& to) {
    std::string text(bytes.begin(), bytes.end());
    const auto pos = text.find(from);
    EXPECT_NE(pos, std::string::npos) << from;
    if (pos == std::string::npos) return bytes;
    EXPECT_EQ(from.size(), to.size());
    std::memcpy(bytes.data() + pos, to.data(), to.size());
    return bytes;
  }

  testing::TempDir dir_;

 private:
  static Checkpoint* ckpt_;
};
Checkpoint* CheckpointFile::ckpt_ = nullptr;

TEST_F(CheckpointFile, RoundTripIsBitExact) {
  const auto path = dir_.path() / "a.ckpt";
  save_checkpoint(ckpt(), path);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.stage, ckpt().stage);
  EXPECT_EQ(back.iteration, ckpt().iteration);
  EXPECT_EQ(back.state_json, ckpt().state_json);
  EXPECT_EQ(back.config.to_json(), ckpt().config.to_json());
  ASSERT_EQ(back.tensors.size(), ckpt().tensors.size());
  for (std::size_t i = 0; i < back.tensors.size(); ++i) {
    const auto& a = back.tensors[i];
    const auto& b = ckpt().tensors[i];
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.trainable, b.trainable);
    ASSERT_EQ(a.value.shape(), b.value.shape());
    EXPECT_EQ(std::memcmp(a.value.data(), b.value.data(), a.value.size() * sizeof(float)), 0) << a.name;
  }
  EXPECT_EQ(back.model_id(), ckpt().model_id());
  EXPECT_EQ(back.parameters().checksum(), ckpt().parameters().checksum());
}

TEST_F(CheckpointFile, ResaveIsByteIdentical) {
  const auto first = serialize_checkpoint(ckpt());
  const auto second = serialize_checkpoint(parse_checkpoint(first));
  EXPECT_EQ(first, second);
}

TEST_F(CheckpointFile, OptimizerStateStaysOutOfModelParameters) {
  const auto params = ckpt().parameters();
  EXPECT_TRUE(params.names("optim.").empty());
  EXPECT_TRUE(params.contains("codebook.codes"));
  EXPECT_EQ(ckpt().codebook().size(), ckpt().config.network.codebook_size);
}

TEST_F(CheckpointFile, BadMagic) {
  auto bytes = serialize_checkpoint(ckpt());
  bytes[0] = 'X';
  try {
    parse_checkpoint(bytes);
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_EQ(e.field(), "magic");
  }
  EXPECT_THROW(parse_checkpoint(std::vector<unsigned char>(4, 0)), IntegrityError);
}

TEST_F(CheckpointFile, UnsupportedVersion) {
  auto bytes = patched(serialize_checkpoint(ckpt()), "\"format_version\":1", "\"format_version\":7");
  try {
    parse_checkpoint(bytes);
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_EQ(e.field(), "format_version");
  }
}

TEST_F(CheckpointFile, CorruptPayloadFailsChecksum) {
  auto bytes = serialize_checkpoint(ckpt());
  bytes.back() ^= 0x5a;
  try {
    parse_checkpoint(bytes);
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_EQ(e.field(), "payload_checksum");
  }
  bytes = serialize_checkpoint(ckpt());
  bytes.pop_back();
  EXPECT_THROW(parse_checkpoint(bytes), IntegrityError);
}

TEST_F(CheckpointFile, CodebookShapeMustMatchConfig) {
  Checkpoint bad = ckpt();
  bad.config.network.latent_channels *= 2;
  try {
    parse_checkpoint(serialize_checkpoint(bad));
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_EQ(e.field(), "codebook.codes");
  }
}

TEST_F(CheckpointFile, CompatibilityNamesTheField) {
  auto net = ckpt().config.network;
  EXPECT_NO_THROW(check_compatible(ckpt(), net));
  net.codebook_size += 1;
  try {
    check_compatible(ckpt(), net);
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_EQ(e.field(), "network.codebook_size");
  }
}

TEST_F(CheckpointFile, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint(dir_.path() / "absent.ckpt"), IoError);
}

TEST_F(CheckpointFile, SaveLeavesNoTemporaryFiles) {
  save_checkpoint(ckpt(), dir_.path() / "sub" / "b.ckpt");
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir_.path() / "sub")) {
    (void)e;
    ++files;
  }
  EXPECT_EQ(files, 1);
}

TEST(Fnv1a, KnownVectors) {
  const std::string empty;
  const std::string a = "a";
  EXPECT_EQ(fnv1a({reinterpret_cast<const unsigned char*>(empty.data()), 0}), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a({reinterpret_cast<const unsigned char*>(a.data()), 1}), 0xaf63dc4c8601ec8cULL);
}

}  // namespace
}  // namespace codeenhance
