#include "sps/self_prompt.hpp"

#include <algorithm>

#include "sps/error.hpp"

namespace sps {

PromptSpec sp_box(const BinaryMask& mask) {
  BoxPrompt box{static_cast<int>(mask.rows()), static_cast<int>(mask.cols()), -1, -1};
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      if (!mask(r, c)) continue;
      box.row_min = std::min(box.row_min, static_cast<int>(r));
      box.col_min = std::min(box.col_min, static_cast<int>(c));
      box.row_max = std::max(box.row_max, static_cast<int>(r));
      box.col_max = std::max(box.col_max, static_cast<int>(c));
    }
  }
  if (box.row_max < 0) return NoPrompt{};
  return box;
}

PromptSpec sp_box(const MaskPrediction& pred) { return sp_box(pred.binary); }

SelfPromptResult self_prompt_forward(const Model& model, const Image& image, int k, float threshold) {
  if (k < 0) throw InputError("self-prompt iteration count must be >= 0");
  SelfPromptResult out;
  out.iterations = k;
  const ImageEmbedding embedding = encode_image(model, image);
  PromptSpec prompt = NoPrompt{};
  for (int pass = 0; pass <= k; ++pass) {
    out.prompts_used.push_back(prompt);
    out.passes.push_back(decode_mask(model, embedding, encode_prompt(model, prompt), threshold));
    prompt = sp_box(out.passes.back());
  }
  return out;
}

}  // namespace sps
