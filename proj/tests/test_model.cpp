#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "sps/checkpoint.hpp"
#include "sps/error.hpp"
#include "sps/lora.hpp"
#include "sps/model.hpp"
#include "sps/net.hpp"
#include "test_support.hpp"

namespace {

using namespace sps;
using sps::testing::random_image;
using sps::testing::tiny_config;

TEST(ModelConfig, RejectsInvalidFields) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.patch_size = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.encoder_depth = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.image_size = 48;
  c.patch_size = 4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, TextRoundTrip) {
  ModelConfig c = tiny_config();
  EXPECT_EQ(ModelConfig::from_text(c.to_text()), c);
  EXPECT_THROW(ModelConfig::from_text("bogus=1\n"), ConfigError);
}

TEST(EncodeImage, ZeroImageGivesFiniteGrid) {
  const Model m = init_model(ModelConfig{}, 1);
  const Image img(64, 64, 1);
  const ImageEmbedding e = encode_image(m, img);
  EXPECT_EQ(e.side, 16);
  EXPECT_EQ(e.grid.rows(), 256);
  EXPECT_EQ(e.grid.cols(), 128);
  EXPECT_TRUE(e.grid.allFinite());
}

TEST(EncodeImage, DeterministicAndHashed) {
  const Model m = init_model(tiny_config(), 2);
  const Image img = random_image(16, 3);
  const ImageEmbedding a = encode_image(m, img);
  const ImageEmbedding b = encode_image(m, img);
  EXPECT_EQ(a.grid, b.grid);
  EXPECT_EQ(a.source_hash, hash_image(img));
}

TEST(EncodeImage, ZeroBAdaptersMatchBase) {
  const Model base = init_model(ModelConfig{}, 4);
  Model adapted = base;
  attach_adapters(adapted, default_lora_targets(adapted.config), 4, 9);
  const Image img = random_image(64, 5);
  const MatF a = encode_image(base, img).grid;
  const MatF b = encode_image(adapted, img).grid;
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(EncodeImage, Errors) {
  const Model m = init_model(tiny_config(), 1);
  EXPECT_THROW(encode_image(m, Image(8, 8, 1)), ConfigError);
  EXPECT_THROW(encode_image(m, Image(16, 16, 3)), ConfigError);
  Image bad = random_image(16, 1);
  bad.at(3, 3) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(encode_image(m, bad), InputError);
}

TEST(EncodePrompt, Variants) {
  const Model m = init_model(ModelConfig{}, 1);
  const MatF none = encode_prompt(m, NoPrompt{});
  EXPECT_EQ(none, m.params.at("prompt_encoder.no_prompt_embed"));
  const MatF box = encode_prompt(m, BoxPrompt{0, 0, 63, 63});
  EXPECT_EQ(box.rows(), 2);
  EXPECT_EQ(box.cols(), 128);
  const MatF p1 = encode_prompt(m, PointPrompt{32, 32, true});
  const MatF p2 = encode_prompt(m, PointPrompt{32, 32, true});
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(p1.rows(), m.config.num_prompt_tokens_per_point);
  EXPECT_NE(p1, encode_prompt(m, PointPrompt{32, 32, false}));
}

TEST(EncodePrompt, OutOfRangeIsInputError) {
  const Model m = init_model(tiny_config(), 1);
  EXPECT_THROW(encode_prompt(m, PointPrompt{16, 0, true}), InputError);
  EXPECT_THROW(encode_prompt(m, PointPrompt{-1, 0, true}), InputError);
  EXPECT_THROW(encode_prompt(m, BoxPrompt{0, 0, 16, 3}), InputError);
  EXPECT_THROW(encode_prompt(m, BoxPrompt{5, 0, 4, 3}), InputError);
}

TEST(EncodePrompt, PointTokensFollowPositionalEncoding) {
  // Point token = PE(coordinate) + label embedding, with the coordinate at
  // the pixel center mapped to [-1, 1] before the Fourier projection.
  const Model m = init_model(tiny_config(), 3);
  const MatF tok = encode_prompt(m, PointPrompt{5, 9, true});
  const MatF& gauss = m.params.at("prompt_encoder.pe_gaussian");
  const double y = 2.0 * (5 + 0.5) / 16 - 1;
  const double x = 2.0 * (9 + 0.5) / 16 - 1;
  const int half = static_cast<int>(gauss.cols());
  const MatF& fg = m.params.at("prompt_encoder.point_embed.fg");
  double err = 0;
  for (int j = 0; j < half; ++j) {
    const double proj = 2 * M_PI * (y * gauss(0, j) + x * gauss(1, j));
    err = std::max(err, std::abs(tok(0, j) - fg(0, j) - std::sin(proj)));
    err = std::max(err, std::abs(tok(0, half + j) - fg(0, half + j) - std::cos(proj)));
  }
  EXPECT_LT(err, 1e-5);
}

TEST(DecodeMask, InvariantsAndDeterminism) {
  const Model m = init_model(tiny_config(), 6);
  const ImageEmbedding e = encode_image(m, random_image(16, 7));
  const MatF tokens = encode_prompt(m, BoxPrompt{2, 3, 9, 12});
  const MaskPrediction a = decode_mask(m, e, tokens, 0.4f);
  const MaskPrediction b = decode_mask(m, e, tokens, 0.4f);
  EXPECT_EQ(a.logits, b.logits);
  ASSERT_EQ(a.prob.rows(), 16);
  ASSERT_EQ(a.prob.cols(), 16);
  for (Eigen::Index i = 0; i < a.prob.size(); ++i) {
    const float p = a.prob.data()[i];
    EXPECT_GE(p, 0.0f);
    EXPECT_LE(p, 1.0f);
    EXPECT_NEAR(p, 1.0 / (1.0 + std::exp(-static_cast<double>(a.logits.data()[i]))), 1e-6);
    EXPECT_EQ(a.binary.data()[i], p >= 0.4f ? 1 : 0);
  }
}

TEST(DecodeMask, EmbeddingMismatchIsConfigError) {
  const Model m = init_model(tiny_config(), 6);
  ModelConfig other = tiny_config();
  other.image_size = 32;
  const Model big = init_model(other, 6);
  const ImageEmbedding e = encode_image(big, random_image(32, 1));
  EXPECT_THROW(decode_mask(m, e, encode_prompt(m, NoPrompt{})), ConfigError);
}

TEST(Model, OutputResolutionMatchesInput) {
  for (auto [size, patch] : {std::pair{16, 4}, std::pair{32, 8}, std::pair{32, 4}}) {
    ModelConfig c = tiny_config();
    c.image_size = size;
    c.patch_size = patch;
    const Model m = init_model(c, 1);
    const MaskPrediction p = forward_no_prompt(m, random_image(size, 2));
    EXPECT_EQ(p.prob.rows(), size);
    EXPECT_EQ(p.prob.cols(), size);
  }
}

TEST(Model, RgbInput) {
  ModelConfig c = tiny_config();
  c.in_channels = 3;
  const Model m = init_model(c, 1);
  EXPECT_EQ(forward_no_prompt(m, random_image(16, 2, 3)).prob.rows(), 16);
}

TEST(ForwardNoPrompt, EqualsComposition) {
  const Model m = init_model(tiny_config(), 8);
  const Image img = random_image(16, 9);
  const MaskPrediction direct = forward_no_prompt(m, img);
  const MaskPrediction composed = decode_mask(m, encode_image(m, img), encode_prompt(m, NoPrompt{}));
  EXPECT_EQ(direct.logits, composed.logits);
  EXPECT_EQ(forward_no_prompt(m, img).logits, direct.logits);
}

TEST(ForwardNoPrompt, InvariantToBoxCornerEmbedding) {
  Model m = init_model(tiny_config(), 10);
  const Image img = random_image(16, 11);
  const MatF before = forward_no_prompt(m, img).logits;
  m.params.at("prompt_encoder.box_corner_embed").setConstant(7.0f);
  EXPECT_EQ(forward_no_prompt(m, img).logits, before);
}

TEST(ForwardNoPrompt, LogitGradientMatchesFiniteDifferences) {
  // Scalar loss: sum(logits .* w) for fixed random w; gradient w.r.t.
  // sampled decoder weights, float64, central differences with step 1e-3.
  const BasicModel<double> m = init_model(tiny_config(), 12).cast<double>();
  const Image img = random_image(16, 13);
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0, 1);
  Mat<double> w(256, 1);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = n(rng);

  auto loss_of = [&](const BasicModel<double>& model, std::map<std::string, Mat<double>>* grads) {
    ad::Graph<double> g;
    Net<double> net(g, model, [grads](const std::string&) { return grads != nullptr; });
    ad::Var logits = net.decode(net.encode(img), net.prompt_tokens(NoPrompt{}));
    ad::Var loss = g.matmul(g.constant(w.transpose()), logits);
    if (grads) {
      g.backward(loss);
      for (const auto& [name, v] : net.bound()) {
        if (g.grad(v)) (*grads)[name] = *g.grad(v);
      }
    }
    return g.value(loss)(0, 0);
  };
  std::map<std::string, Mat<double>> grads;
  loss_of(m, &grads);

  std::vector<std::string> names;
  for (const auto& [name, _] : m.params) {
    if (is_decoder_param(name)) names.push_back(name);
  }
  ASSERT_FALSE(names.empty());
  for (int trial = 0; trial < 10; ++trial) {
    const std::string& name = names[rng() % names.size()];
    const Eigen::Index idx = static_cast<Eigen::Index>(rng() % m.params.at(name).size());
    const double h = 1e-3;
    BasicModel<double> plus = m;
    BasicModel<double> minus = m;
    plus.params.at(name).data()[idx] += h;
    minus.params.at(name).data()[idx] -= h;
    const double fd = (loss_of(plus, nullptr) - loss_of(minus, nullptr)) / (2 * h);
    const double an = grads.at(name).data()[idx];
    const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
    EXPECT_LT(rel, 1e-4) << name << "[" << idx << "] analytic " << an << " fd " << fd;
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  Model m = init_model(tiny_config(), 15);
  attach_adapters(m, default_lora_targets(m.config), 2, 3);
  m.adapters.begin()->second.B.setConstant(0.25f);
  const auto path = (std::filesystem::temp_directory_path() / "sps_model_roundtrip.ckpt").string();
  save_checkpoint(m, path);
  const Model back = load_checkpoint(path);
  EXPECT_EQ(back.config, m.config);
  ASSERT_EQ(back.params.size(), m.params.size());
  for (const auto& [name, value] : m.params) EXPECT_EQ(back.params.at(name), value) << name;
  ASSERT_EQ(back.adapters.size(), m.adapters.size());
  for (const auto& [host, a] : m.adapters) {
    EXPECT_EQ(back.adapters.at(host).A, a.A);
    EXPECT_EQ(back.adapters.at(host).B, a.B);
  }
  EXPECT_EQ(model_digest(back), model_digest(m));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsGarbage) {
  EXPECT_THROW(deserialize_model("not a checkpoint"), IoError);
  EXPECT_THROW(load_checkpoint("/nonexistent/path.ckpt"), IoError);
}

TEST(ParameterNames, Roles) {
  const Model m = init_model(ModelConfig{}, 0);
  EXPECT_TRUE(m.params.count("encoder.blocks.0.attn.q.weight"));
  EXPECT_TRUE(m.params.count("decoder.mask_token"));
  EXPECT_TRUE(is_buffer("prompt_encoder.pe_gaussian"));
  for (const auto& [name, _] : m.params) {
    const int roles = is_encoder_param(name) + is_prompt_encoder_param(name) + is_decoder_param(name);
    EXPECT_EQ(roles, 1) << name;
  }
  EXPECT_EQ(default_lora_targets(m.config).size(), 8u);
}

}  // namespace
