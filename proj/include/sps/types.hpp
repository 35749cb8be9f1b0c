#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "sps/autograd.hpp"

namespace sps {

using ad::Mat;
using MatF = Mat<float>;
using MatD = Mat<double>;
using BinaryMask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Interleaved (row, col, channel) pixels in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, 0.0f) {}

  float& at(int r, int c, int ch = 0) { return pixels[index(r, c, ch)]; }
  float at(int r, int c, int ch = 0) const { return pixels[index(r, c, ch)]; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int r, int c, int ch) const {
    return (static_cast<std::size_t>(r) * width + c) * channels + ch;
  }
};

// ---- prompts ---------------------------------------------------------------

struct NoPrompt {
  bool operator==(const NoPrompt&) const = default;
};

struct PointPrompt {
  int row = 0;
  int col = 0;
  bool foreground = true;
  bool operator==(const PointPrompt&) const = default;
};

/// Inclusive pixel-index corners.
struct BoxPrompt {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;
  bool operator==(const BoxPrompt&) const = default;
};

using PromptSpec = std::variant<NoPrompt, PointPrompt, BoxPrompt>;

/// Throws InputError unless every coordinate is inside [0, image_size) and
/// box corners are ordered.
void validate_prompt(const PromptSpec& prompt, int image_size);

/// "none", "point(r,c,fg)", "box(r0,c0,r1,c1)".
std::string to_string(const PromptSpec& prompt);

// ---- predictions -------------------------------------------------------------

/// Per-pixel foreground probabilities plus their binarization.
struct MaskPrediction {
  MatF logits;
  MatF prob;
  BinaryMask binary;
  float threshold = 0.5f;

  /// prob = sigmoid(logits); binary = prob >= threshold.
  static MaskPrediction from_logits(MatF logits, float threshold);

  int size() const { return static_cast<int>(logits.rows()); }
  bool has_foreground() const { return binary.cast<int>().sum() > 0; }
};

float sigmoid(float v);

}  // namespace sps
