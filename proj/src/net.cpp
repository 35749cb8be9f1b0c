#include "sps/net.hpp"

#include <array>
#include <cmath>
#include <type_traits>

#include "sps/error.hpp"
#include "sps/instrument.hpp"

namespace sps {

template <class T>
Net<T>::Net(ad::Graph<T>& graph, const BasicModel<T>& model, Trainable trainable)
    : graph_(graph), model_(model), trainable_(std::move(trainable)) {}

template <class T>
ad::Var Net<T>::param(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const Mat<T>* value = nullptr;
  if (auto it = model_.params.find(name); it != model_.params.end()) {
    value = &it->second;
  } else {
    // Adapter factors live in the adapter set under "<host>.lora.{A,B}".
    const auto pos = name.rfind(".lora.");
    if (pos != std::string::npos) {
      const std::string host = name.substr(0, pos);
      if (auto a = model_.adapters.find(host); a != model_.adapters.end()) {
        value = name.back() == 'A' ? &a->second.A : &a->second.B;
      }
    }
  }
  if (value == nullptr) throw ConfigError("unknown parameter '" + name + "'");
  const bool rg = trainable_ && !is_buffer(name) && trainable_(name);
  ad::Var v = graph_.leaf(*value, rg);
  bound_.emplace(name, v);
  return v;
}

template <class T>
ad::Var Net<T>::linear(const std::string& prefix, ad::Var x) {
  const std::string host = prefix + ".weight";
  ad::Var y = graph_.linear(x, param(host), param(prefix + ".bias"));
  if (model_.adapters.count(host) != 0) {
    // x (B A)^T = (x A^T) B^T
    ad::Var low = graph_.matmul_nt(x, param(lora_a_name(host)));
    y = graph_.add(y, graph_.matmul_nt(low, param(lora_b_name(host))));
  }
  return y;
}

template <class T>
ad::Var Net<T>::norm(const std::string& prefix, ad::Var x) {
  return graph_.layer_norm(x, param(prefix + ".weight"), param(prefix + ".bias"));
}

template <class T>
ad::Var Net<T>::mlp(const std::string& prefix, ad::Var x) {
  return linear(prefix + ".fc2", graph_.gelu(linear(prefix + ".fc1", x)));
}

template <class T>
ad::Var Net<T>::attention(const std::string& prefix, ad::Var q, ad::Var k, ad::Var v) {
  ad::Var qp = linear(prefix + ".q", q);
  ad::Var kp = linear(prefix + ".k", k);
  ad::Var vp = linear(prefix + ".v", v);
  return linear(prefix + ".out", graph_.attention(qp, kp, vp, model_.config.num_heads));
}

template <class T>
ad::Var Net<T>::encode(const Image& image) {
  const ModelConfig& cfg = model_.config;
  if (image.height != cfg.image_size || image.width != cfg.image_size || image.channels != cfg.in_channels) {
    throw ConfigError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                      std::to_string(image.channels) + ", model expects " + std::to_string(cfg.image_size) + "x" +
                      std::to_string(cfg.image_size) + "x" + std::to_string(cfg.in_channels));
  }
  for (float p : image.pixels) {
    if (!std::isfinite(p)) throw InputError("image contains non-finite pixels");
  }
  counters().encoder_calls++;

  ad::Var x = graph_.constant(extract_patches<T>(image, cfg));
  x = graph_.linear(x, param("encoder.patch_embed.weight"), param("encoder.patch_embed.bias"));
  x = graph_.add(x, param("encoder.pos_embed"));
  for (int i = 0; i < cfg.encoder_depth; ++i) {
    const std::string b = "encoder.blocks." + std::to_string(i);
    ad::Var h = norm(b + ".norm1", x);
    ad::Var q = linear(b + ".attn.q", h);
    ad::Var k = linear(b + ".attn.k", h);
    ad::Var v = linear(b + ".attn.v", h);
    ad::Var a = graph_.attention(q, k, v, cfg.num_heads);
    x = graph_.add(x, linear(b + ".attn.proj", a));
    x = graph_.add(x, mlp(b + ".mlp", norm(b + ".norm2", x)));
  }
  return norm("encoder.neck_norm", linear("encoder.neck", x));
}

template <class T>
ad::Var Net<T>::prompt_tokens(const PromptSpec& prompt) {
  const ModelConfig& cfg = model_.config;
  validate_prompt(prompt, cfg.image_size);
  const T size = static_cast<T>(cfg.image_size);
  const Mat<T>& gaussian = model_.params.at("prompt_encoder.pe_gaussian");

  if (std::holds_alternative<NoPrompt>(prompt)) return param("prompt_encoder.no_prompt_embed");

  if (const auto* p = std::get_if<PointPrompt>(&prompt)) {
    Mat<T> coords(1, 2);
    coords << (static_cast<T>(p->row) + T(0.5)) / size, (static_cast<T>(p->col) + T(0.5)) / size;
    ad::Var pe = graph_.constant(fourier_encode<T>(coords, gaussian));
    ad::Var label = param(p->foreground ? "prompt_encoder.point_embed.fg" : "prompt_encoder.point_embed.bg");
    return graph_.add(label, pe);
  }

  const auto& b = std::get<BoxPrompt>(prompt);
  Mat<T> coords(2, 2);
  coords << (static_cast<T>(b.row_min) + T(0.5)) / size, (static_cast<T>(b.col_min) + T(0.5)) / size,
      (static_cast<T>(b.row_max) + T(0.5)) / size, (static_cast<T>(b.col_max) + T(0.5)) / size;
  ad::Var pe = graph_.constant(fourier_encode<T>(coords, gaussian));
  return graph_.add(pe, param("prompt_encoder.box_corner_embed"));
}

template <class T>
ad::Var Net<T>::grid_pe() {
  if (grid_pe_.valid()) return grid_pe_;
  const int g = model_.config.grid();
  Mat<T> coords(static_cast<Eigen::Index>(g) * g, 2);
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      coords(r * g + c, 0) = (static_cast<T>(r) + T(0.5)) / static_cast<T>(g);
      coords(r * g + c, 1) = (static_cast<T>(c) + T(0.5)) / static_cast<T>(g);
    }
  }
  grid_pe_ = graph_.constant(fourier_encode<T>(coords, model_.params.at("prompt_encoder.pe_gaussian")));
  return grid_pe_;
}

template <class T>
ad::Var Net<T>::decode(ad::Var embedding, ad::Var tokens) {
  const ModelConfig& cfg = model_.config;
  const Mat<T>& emb = graph_.value(embedding);
  if (emb.rows() != cfg.num_patches() || emb.cols() != cfg.embed_dim ||
      graph_.value(tokens).cols() != cfg.embed_dim) {
    throw ConfigError("embedding or prompt tokens do not match the model configuration");
  }
  counters().decoder_calls++;

  const std::array<ad::Var, 2> parts{param("decoder.mask_token"), tokens};
  ad::Var query_pe = graph_.concat_rows(parts);
  ad::Var queries = query_pe;
  ad::Var keys = embedding;
  ad::Var key_pe = grid_pe();

  for (int i = 0; i < cfg.decoder_depth; ++i) {
    const std::string l = "decoder.layers." + std::to_string(i);
    if (i == 0) {
      queries = attention(l + ".self_attn", queries, queries, queries);
    } else {
      ad::Var q = graph_.add(queries, query_pe);
      queries = graph_.add(queries, attention(l + ".self_attn", q, q, queries));
    }
    queries = norm(l + ".norm1", queries);

    ad::Var q = graph_.add(queries, query_pe);
    ad::Var k = graph_.add(keys, key_pe);
    queries = norm(l + ".norm2", graph_.add(queries, attention(l + ".cross_t2i", q, k, keys)));

    queries = norm(l + ".norm3", graph_.add(queries, mlp(l + ".mlp", queries)));

    q = graph_.add(queries, query_pe);
    k = graph_.add(keys, key_pe);
    keys = norm(l + ".norm4", graph_.add(keys, attention(l + ".cross_i2t", k, q, queries)));
  }
  {
    ad::Var q = graph_.add(queries, query_pe);
    ad::Var k = graph_.add(keys, key_pe);
    queries = norm("decoder.final_norm", graph_.add(queries, attention("decoder.final_attn", q, k, keys)));
  }

  ad::Var mask_out = graph_.slice_rows(queries, 0, 1);
  ad::Var hyper = mlp("decoder.hyper", mask_out);  // 1 x U

  ad::Var up = linear("decoder.upscale", keys);  // (G*G) x (p*p*U)
  up = graph_.gelu(graph_.pixel_shuffle(up, cfg.grid(), cfg.patch_size));
  ad::Var logits = graph_.matmul_nt(up, hyper);  // (H*W) x 1
  return graph_.add(logits, param("decoder.mask_bias"));
}

template class Net<float>;
template class Net<double>;

}  // namespace sps
