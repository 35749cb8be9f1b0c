#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sps/data.hpp"
#include "sps/model.hpp"

namespace sps {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& target);

/// 2TP / (FP + 2TP + FN); 1 when both masks are empty.
double dice_score(const ConfusionCounts& c);
/// TP / (TP + FP + FN); 1 when both masks are empty.
double iou_score(const ConfusionCounts& c);

struct ImageScore {
  std::string id;
  double dice = 0;
  double iou = 0;
  int k = 0;
  ConfusionCounts counts;

  bool operator==(const ImageScore&) const = default;
};

struct MetricsReport {
  std::vector<ImageScore> per_image;
  double mean_dice = 0;  // macro (per-image mean)
  double mean_iou = 0;
  double micro_dice = 0;  // from summed counts
  double micro_iou = 0;
  std::string ablation;
  std::uint64_t seed = 0;
  std::string train_prompt_strategy = "none";
  int k = 0;
  /// Ground-truth prompts built while this report was evaluated.
  std::int64_t ground_truth_prompts = 0;

  /// Recomputes both aggregates from per_image.
  void aggregate();

  bool operator==(const MetricsReport&) const = default;
};

/// Final-pass binary mask for an image after `k` self-prompt iterations.
using Predictor = std::function<BinaryMask(const Image&, int k)>;

/// Scores predictor(image, k) against each sample's mask. Never hands the
/// ground truth to the predictor. Throws InputError on an empty corpus.
MetricsReport evaluate(const Predictor& predictor, const std::vector<ImageSample>& samples, int k);

/// evaluate() with the model's self-prompting forward pass.
MetricsReport evaluate(const Model& model, const std::vector<ImageSample>& samples, int k, float threshold = 0.5f);

/// JSON Lines: one {"type":"image",...} record per image and a final
/// {"type":"aggregate",...} record. A human-readable table is written beside
/// it as "<path>.txt".
void emit_report(const MetricsReport& report, const std::string& path);
MetricsReport read_report(const std::string& path);

}  // namespace sps
