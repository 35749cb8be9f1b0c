#pragma once

// The promptable segmentation model: a ViT-style image encoder, a prompt
// encoder for {none, point, box}, and a two-way-attention mask decoder.
//
// Canonical parameter names (all matrices are row-major, linear weights are
// stored as (out x in)):
//
//   encoder.patch_embed.{weight,bias}      D x (p*p*C), 1 x D
//   encoder.pos_embed                      (G*G) x D
//   encoder.blocks.<i>.norm1.{weight,bias}
//   encoder.blocks.<i>.attn.{q,k,v,proj}.{weight,bias}
//   encoder.blocks.<i>.norm2.{weight,bias}
//   encoder.blocks.<i>.mlp.{fc1,fc2}.{weight,bias}
//   encoder.neck.{weight,bias}, encoder.neck_norm.{weight,bias}
//   prompt_encoder.pe_gaussian             2 x D/2 fixed random Fourier basis
//   prompt_encoder.no_prompt_embed         1 x D default (promptless) token
//   prompt_encoder.point_embed.{fg,bg}     n x D, n = tokens per point
//   prompt_encoder.box_corner_embed        2 x D (top-left, bottom-right)
//   decoder.mask_token                     1 x D
//   decoder.layers.<i>.{self_attn,cross_t2i,cross_i2t}.{q,k,v,out}.{weight,bias}
//   decoder.layers.<i>.norm{1,2,3,4}.{weight,bias}
//   decoder.layers.<i>.mlp.{fc1,fc2}.{weight,bias}
//   decoder.final_attn.{q,k,v,out}.{weight,bias}, decoder.final_norm.{weight,bias}
//   decoder.upscale.{weight,bias}          (p*p*U) x D, U = upscale_dim
//   decoder.hyper.{fc1,fc2}.{weight,bias}  D x D, U x D
//   decoder.mask_bias                      1 x 1
//
// LoRA adapters are stored beside their host as "<host>.lora.A" (r x in)
// and "<host>.lora.B" (out x r).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sps/types.hpp"

namespace sps {

struct ModelConfig {
  int image_size = 64;
  int patch_size = 4;
  int in_channels = 1;
  int embed_dim = 128;
  int encoder_depth = 4;
  int num_heads = 4;
  int decoder_depth = 2;
  int num_prompt_tokens_per_point = 1;
  int mlp_ratio = 4;
  int upscale_dim = 16;

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  /// "key=value" lines, stable key order.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

template <class T>
using ParamSet = std::map<std::string, Mat<T>>;

/// Low-rank delta B*A attached to one frozen host matrix W (out x in).
template <class T>
struct LoRAAdapter {
  std::string host_name;
  Mat<T> A;  // r x in
  Mat<T> B;  // out x r

  int rank() const { return static_cast<int>(A.rows()); }
};

template <class T>
using AdapterSet = std::map<std::string, LoRAAdapter<T>>;

/// A model is its config, its named weights, and any attached adapters.
/// Training uses float; gradient checks cast to double.
template <class T>
struct BasicModel {
  ModelConfig config;
  ParamSet<T> params;
  AdapterSet<T> adapters;

  template <class U>
  BasicModel<U> cast() const {
    BasicModel<U> out;
    out.config = config;
    for (const auto& [name, m] : params) out.params.emplace(name, m.template cast<U>());
    for (const auto& [name, a] : adapters) {
      out.adapters.emplace(name, LoRAAdapter<U>{a.host_name, a.A.template cast<U>(), a.B.template cast<U>()});
    }
    return out;
  }
};

using Model = BasicModel<float>;

/// Fresh randomly initialized model.
Model init_model(const ModelConfig& config, std::uint64_t seed);

/// Names of the q and v projection weights of every encoder block: the
/// default LoRA placement.
std::vector<std::string> default_lora_targets(const ModelConfig& config);

bool is_encoder_param(const std::string& name);
bool is_prompt_encoder_param(const std::string& name);
bool is_decoder_param(const std::string& name);
/// Fixed buffers that are never trained (the Fourier basis).
bool is_buffer(const std::string& name);

std::string lora_a_name(const std::string& host);
std::string lora_b_name(const std::string& host);

/// Encoder output on a (G x G) grid, flattened row-major to (G*G) x D.
struct ImageEmbedding {
  MatF grid;
  int side = 0;
  std::uint64_t source_hash = 0;
};

std::uint64_t hash_image(const Image& image);

/// Image -> (G*G) x (p*p*C) matrix of flattened patches.
template <class T>
Mat<T> extract_patches(const Image& image, const ModelConfig& config);

/// Random-Fourier positional encoding of normalized (row, col) points in
/// [0,1]^2, one output row per input row.
template <class T>
Mat<T> fourier_encode(const Mat<T>& coords01, const Mat<T>& gaussian);

// ---- inference operations --------------------------------------------------

ImageEmbedding encode_image(const Model& model, const Image& image);
MatF encode_prompt(const Model& model, const PromptSpec& prompt);
MaskPrediction decode_mask(const Model& model, const ImageEmbedding& embedding, const MatF& prompt_tokens,
                           float threshold = 0.5f);
MaskPrediction forward_no_prompt(const Model& model, const Image& image, float threshold = 0.5f);

}  // namespace sps
