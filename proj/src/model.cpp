#include "sps/model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "sps/error.hpp"
#include "sps/instrument.hpp"
#include "sps/net.hpp"
#include "sps/util.hpp"

namespace sps {

CallCounters& counters() {
  static CallCounters instance;
  return instance;
}

float sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }

MaskPrediction MaskPrediction::from_logits(MatF logits, float threshold) {
  if (!(threshold > 0.0f && threshold < 1.0f)) throw InputError("threshold must lie in (0, 1)");
  MaskPrediction out;
  out.prob = logits.unaryExpr([](float v) { return sigmoid(v); });
  out.binary = (out.prob.array() >= threshold).cast<std::uint8_t>();
  out.logits = std::move(logits);
  out.threshold = threshold;
  return out;
}

void validate_prompt(const PromptSpec& prompt, int image_size) {
  auto in_range = [image_size](int v) { return v >= 0 && v < image_size; };
  if (const auto* p = std::get_if<PointPrompt>(&prompt)) {
    if (!in_range(p->row) || !in_range(p->col)) throw InputError("point prompt outside the image");
  } else if (const auto* b = std::get_if<BoxPrompt>(&prompt)) {
    if (!in_range(b->row_min) || !in_range(b->col_min) || !in_range(b->row_max) || !in_range(b->col_max)) {
      throw InputError("box prompt outside the image");
    }
    if (b->row_min > b->row_max || b->col_min > b->col_max) throw InputError("box prompt corners out of order");
  }
}

std::string to_string(const PromptSpec& prompt) {
  std::ostringstream os;
  if (const auto* p = std::get_if<PointPrompt>(&prompt)) {
    os << "point(" << p->row << "," << p->col << "," << (p->foreground ? "fg" : "bg") << ")";
  } else if (const auto* b = std::get_if<BoxPrompt>(&prompt)) {
    os << "box(" << b->row_min << "," << b->col_min << "," << b->row_max << "," << b->col_max << ")";
  } else {
    os << "none";
  }
  return os.str();
}

// ---- config ----------------------------------------------------------------

void ModelConfig::validate() const {
  const std::pair<const char*, int> counts[] = {
      {"image_size", image_size},   {"patch_size", patch_size},       {"in_channels", in_channels},
      {"embed_dim", embed_dim},     {"encoder_depth", encoder_depth}, {"num_heads", num_heads},
      {"decoder_depth", decoder_depth}, {"num_prompt_tokens_per_point", num_prompt_tokens_per_point},
      {"mlp_ratio", mlp_ratio},     {"upscale_dim", upscale_dim}};
  for (const auto& [key, v] : counts) {
    if (v <= 0) throw ConfigError(std::string(key) + " must be positive");
  }
  if ((image_size & (image_size - 1)) != 0) throw ConfigError("image_size must be a power of 2");
  if (image_size % patch_size != 0) throw ConfigError("image_size must be divisible by patch_size");
  if (embed_dim % num_heads != 0) throw ConfigError("embed_dim must be divisible by num_heads");
  if (embed_dim % 2 != 0) throw ConfigError("embed_dim must be even");
  if (in_channels != 1 && in_channels != 3) throw ConfigError("in_channels must be 1 or 3");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "image_size=" << image_size << "\n"
     << "patch_size=" << patch_size << "\n"
     << "in_channels=" << in_channels << "\n"
     << "embed_dim=" << embed_dim << "\n"
     << "encoder_depth=" << encoder_depth << "\n"
     << "num_heads=" << num_heads << "\n"
     << "decoder_depth=" << decoder_depth << "\n"
     << "num_prompt_tokens_per_point=" << num_prompt_tokens_per_point << "\n"
     << "mlp_ratio=" << mlp_ratio << "\n"
     << "upscale_dim=" << upscale_dim << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  const std::map<std::string, int*> fields = {
      {"image_size", &cfg.image_size},
      {"patch_size", &cfg.patch_size},
      {"in_channels", &cfg.in_channels},
      {"embed_dim", &cfg.embed_dim},
      {"encoder_depth", &cfg.encoder_depth},
      {"num_heads", &cfg.num_heads},
      {"decoder_depth", &cfg.decoder_depth},
      {"num_prompt_tokens_per_point", &cfg.num_prompt_tokens_per_point},
      {"mlp_ratio", &cfg.mlp_ratio},
      {"upscale_dim", &cfg.upscale_dim},
  };
  for (const auto& [key, value] : parse_key_values(text)) {
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown model config key '" + key + "'");
    *it->second = parse_int(value, key);
  }
  cfg.validate();
  return cfg;
}

// ---- naming ----------------------------------------------------------------

namespace {

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

bool is_encoder_param(const std::string& name) { return starts_with(name, "encoder."); }
bool is_prompt_encoder_param(const std::string& name) { return starts_with(name, "prompt_encoder."); }
bool is_decoder_param(const std::string& name) { return starts_with(name, "decoder."); }
bool is_buffer(const std::string& name) { return name == "prompt_encoder.pe_gaussian"; }

std::string lora_a_name(const std::string& host) { return host + ".lora.A"; }
std::string lora_b_name(const std::string& host) { return host + ".lora.B"; }

std::vector<std::string> default_lora_targets(const ModelConfig& config) {
  std::vector<std::string> out;
  for (int i = 0; i < config.encoder_depth; ++i) {
    const std::string b = "encoder.blocks." + std::to_string(i) + ".attn.";
    out.push_back(b + "q.weight");
    out.push_back(b + "v.weight");
  }
  return out;
}

// ---- init ------------------------------------------------------------------

namespace {

class Initializer {
 public:
  Initializer(ParamSet<float>& params, std::uint64_t seed) : params_(params), rng_(seed) {}

  void normal(const std::string& name, int rows, int cols, double std) {
    std::normal_distribution<double> dist(0.0, std);
    MatF m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(dist(rng_));
    params_[name] = std::move(m);
  }
  void fill(const std::string& name, int rows, int cols, float v) { params_[name] = MatF::Constant(rows, cols, v); }

  void linear(const std::string& prefix, int in, int out) {
    normal(prefix + ".weight", out, in, 1.0 / std::sqrt(static_cast<double>(in)));
    fill(prefix + ".bias", 1, out, 0.0f);
  }
  void norm(const std::string& prefix, int dim) {
    fill(prefix + ".weight", 1, dim, 1.0f);
    fill(prefix + ".bias", 1, dim, 0.0f);
  }
  void attention(const std::string& prefix, int dim) {
    for (const char* p : {".q", ".k", ".v", ".out"}) linear(prefix + p, dim, dim);
  }
  void mlp(const std::string& prefix, int dim, int hidden, int out) {
    linear(prefix + ".fc1", dim, hidden);
    linear(prefix + ".fc2", hidden, out);
  }

 private:
  ParamSet<float>& params_;
  std::mt19937_64 rng_;
};

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model;
  model.config = config;
  Initializer init(model.params, seed);
  const int d = config.embed_dim;
  const int patch_dim = config.patch_size * config.patch_size * config.in_channels;
  const int hidden = d * config.mlp_ratio;

  init.linear("encoder.patch_embed", patch_dim, d);
  init.normal("encoder.pos_embed", config.num_patches(), d, 0.02);
  for (int i = 0; i < config.encoder_depth; ++i) {
    const std::string b = "encoder.blocks." + std::to_string(i);
    init.norm(b + ".norm1", d);
    for (const char* p : {".attn.q", ".attn.k", ".attn.v", ".attn.proj"}) init.linear(b + p, d, d);
    init.norm(b + ".norm2", d);
    init.mlp(b + ".mlp", d, hidden, d);
  }
  init.linear("encoder.neck", d, d);
  init.norm("encoder.neck_norm", d);

  init.normal("prompt_encoder.pe_gaussian", 2, d / 2, 1.0);
  init.normal("prompt_encoder.no_prompt_embed", 1, d, 1.0);
  init.normal("prompt_encoder.point_embed.fg", config.num_prompt_tokens_per_point, d, 1.0);
  init.normal("prompt_encoder.point_embed.bg", config.num_prompt_tokens_per_point, d, 1.0);
  init.normal("prompt_encoder.box_corner_embed", 2, d, 1.0);

  init.normal("decoder.mask_token", 1, d, 1.0);
  for (int i = 0; i < config.decoder_depth; ++i) {
    const std::string l = "decoder.layers." + std::to_string(i);
    init.attention(l + ".self_attn", d);
    init.attention(l + ".cross_t2i", d);
    init.attention(l + ".cross_i2t", d);
    init.mlp(l + ".mlp", d, hidden, d);
    for (const char* n : {".norm1", ".norm2", ".norm3", ".norm4"}) init.norm(l + n, d);
  }
  init.attention("decoder.final_attn", d);
  init.norm("decoder.final_norm", d);
  init.linear("decoder.upscale", d, config.patch_size * config.patch_size * config.upscale_dim);
  init.mlp("decoder.hyper", d, d, config.upscale_dim);
  init.fill("decoder.mask_bias", 1, 1, 0.0f);
  return model;
}

// ---- helpers ---------------------------------------------------------------

std::uint64_t hash_image(const Image& image) {
  std::uint64_t h = fnv1a(&image.height, sizeof image.height);
  h = fnv1a(&image.width, sizeof image.width, h);
  h = fnv1a(&image.channels, sizeof image.channels, h);
  return fnv1a(image.pixels.data(), image.pixels.size() * sizeof(float), h);
}

template <class T>
Mat<T> extract_patches(const Image& image, const ModelConfig& config) {
  const int p = config.patch_size;
  const int g = config.grid();
  const int c = image.channels;
  Mat<T> out(static_cast<Eigen::Index>(g) * g, static_cast<Eigen::Index>(p) * p * c);
  for (int gr = 0; gr < g; ++gr) {
    for (int gc = 0; gc < g; ++gc) {
      Eigen::Index col = 0;
      for (int r = 0; r < p; ++r) {
        for (int cc = 0; cc < p; ++cc) {
          for (int ch = 0; ch < c; ++ch) {
            out(gr * g + gc, col++) = static_cast<T>(image.at(gr * p + r, gc * p + cc, ch));
          }
        }
      }
    }
  }
  return out;
}

template <class T>
Mat<T> fourier_encode(const Mat<T>& coords01, const Mat<T>& gaussian) {
  const Mat<T> centered = (coords01.array() * T(2) - T(1)).matrix();
  const Mat<T> proj = (centered * gaussian) * static_cast<T>(2.0 * std::numbers::pi);
  Mat<T> out(proj.rows(), proj.cols() * 2);
  out.leftCols(proj.cols()) = proj.array().sin().matrix();
  out.rightCols(proj.cols()) = proj.array().cos().matrix();
  return out;
}

template MatF extract_patches<float>(const Image&, const ModelConfig&);
template MatD extract_patches<double>(const Image&, const ModelConfig&);
template MatF fourier_encode<float>(const MatF&, const MatF&);
template MatD fourier_encode<double>(const MatD&, const MatD&);

// ---- inference ---------------------------------------------------------------

namespace {

MatF to_square(const MatF& column, int side) {
  return Eigen::Map<const MatF>(column.data(), side, side);
}

}  // namespace

ImageEmbedding encode_image(const Model& model, const Image& image) {
  ad::Graph<float> g;
  Net<float> net(g, model);
  ad::Var e = net.encode(image);
  return ImageEmbedding{g.value(e), model.config.grid(), hash_image(image)};
}

MatF encode_prompt(const Model& model, const PromptSpec& prompt) {
  ad::Graph<float> g;
  Net<float> net(g, model);
  return g.value(net.prompt_tokens(prompt));
}

MaskPrediction decode_mask(const Model& model, const ImageEmbedding& embedding, const MatF& prompt_tokens,
                           float threshold) {
  if (embedding.side != model.config.grid()) throw ConfigError("embedding grid does not match the model");
  ad::Graph<float> g;
  Net<float> net(g, model);
  ad::Var e = g.constant(embedding.grid);
  ad::Var t = g.constant(prompt_tokens);
  ad::Var logits = net.decode(e, t);
  return MaskPrediction::from_logits(to_square(g.value(logits), model.config.image_size), threshold);
}

MaskPrediction forward_no_prompt(const Model& model, const Image& image, float threshold) {
  const ImageEmbedding e = encode_image(model, image);
  return decode_mask(model, e, encode_prompt(model, NoPrompt{}), threshold);
}

}  // namespace sps
