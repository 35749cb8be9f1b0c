#pragma once

#include <vector>

#include "sps/model.hpp"

namespace sps {

/// Bounding box (inclusive min/max row and column) of every foreground pixel
/// of the binarized prediction, or NoPrompt when the prediction is empty.
PromptSpec sp_box(const MaskPrediction& pred);
PromptSpec sp_box(const BinaryMask& mask);

struct SelfPromptResult {
  std::vector<MaskPrediction> passes;    // passes[0] is the promptless pass
  std::vector<PromptSpec> prompts_used;  // prompts_used[0] is NoPrompt
  int iterations = 0;

  const MaskPrediction& final_pass() const { return passes.back(); }
};

/// Encodes the image once, decodes promptless, then `k` more times, each
/// pass prompted with sp_box of the pass before it.
SelfPromptResult self_prompt_forward(const Model& model, const Image& image, int k, float threshold = 0.5f);

}  // namespace sps
