#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sps/data.hpp"
#include "sps/lora.hpp"
#include "sps/losses.hpp"
#include "sps/model.hpp"
#include "sps/optim.hpp"

namespace sps {

/// Rungs of the ablation ladder.
enum class Ablation {
  kVanilla,   // source-pretrained model, no target training
  kLora,      // LoRA + trainable prompt encoder/decoder, Dice on the promptless pass
  kLoraSp,    // + self-prompting: Dice on the box-prompted second pass
  kLoraSpKd,  // + self-distillation from the second pass into the first
};

/// Prompt fed to the first pass during fine-tuning. Evaluation is always
/// promptless.
enum class TrainPromptStrategy { kNone, kRandomPoint, kGtCenterPoint };

std::string to_string(Ablation a);
std::string to_string(TrainPromptStrategy s);
Ablation parse_ablation(const std::string& s);
TrainPromptStrategy parse_prompt_strategy(const std::string& s);

bool uses_self_prompt(Ablation a);
/// Self-prompt iterations used to evaluate an arm: 1 with SP, 0 without.
int default_eval_k(Ablation a);

struct TrainConfig {
  Ablation ablation = Ablation::kLoraSpKd;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int epochs = 100;
  /// Negative means 5% of the total step count.
  long warmup_steps = -1;
  int batch_size = 8;
  /// Unset means 0.5 for kLoraSpKd and 0 otherwise.
  std::optional<double> alpha;
  int lora_rank = 4;
  /// Empty means the q and v projections of every encoder block.
  std::vector<std::string> lora_targets;
  TrainPromptStrategy train_prompt_strategy = TrainPromptStrategy::kNone;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 1.0;
  Schedule schedule = Schedule::kCosine;
  /// Extension, off by default: extra Dice supervision on the first pass.
  bool aux_dice = false;
  float threshold = 0.5f;

  std::vector<double> lr_grid;
  std::vector<double> wd_grid;
  std::vector<int> epoch_grid;

  double effective_alpha() const;
  bool has_grid() const { return !lr_grid.empty() || !wd_grid.empty() || !epoch_grid.empty(); }

  /// Throws ConfigError on inconsistent flags.
  void validate() const;

  /// Flat key=value text; keys mirror the field names.
  std::string to_text() const;
  static TrainConfig from_key_values(const std::vector<std::pair<std::string, std::string>>& kv);
};

/// Source-domain pretraining, the stand-in for a foundation model's
/// large-scale promptable training.
struct PretrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int epochs = 20;
  int batch_size = 8;
  long warmup_steps = -1;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
  /// Adds a pass prompted with a ground-truth box or point per sample, so
  /// the prompt pathway is trained alongside the promptless one.
  bool prompted_passes = true;

  void validate() const;
  std::string to_text() const;
  static PretrainConfig from_key_values(const std::vector<std::pair<std::string, std::string>>& kv);
};

struct TrainLogRecord {
  long step = 0;
  int epoch = 0;
  double lr = 0;
  double dice_term = 0;
  double kl_term = 0;
  double alpha = 0;
  /// Auxiliary Dice (first-pass Dice when enabled, prompted-pass Dice in
  /// pretraining).
  double aux_term = 0;
  double total = 0;
  double grad_norm = 0;
};

/// JSON Lines, one record per step.
std::string format_log(const std::vector<TrainLogRecord>& log);

struct TrainResult {
  Model model;
  std::vector<TrainLogRecord> log;
};

/// Full-model training on source-domain samples. Throws TrainingError when
/// the loss becomes non-finite.
TrainResult pretrain_source(const Model& model, const std::vector<ImageSample>& source, const PretrainConfig& cfg);

/// Fine-tunes a base model on target-domain samples according to
/// cfg.ablation. The encoder's host weights never change.
TrainResult finetune(const Model& base, const std::vector<ImageSample>& target_train, const TrainConfig& cfg);

struct GridCell {
  double lr = 0;
  double weight_decay = 0;
  int epochs = 0;
  double val_dice = 0;
};

struct GridResult {
  TrainConfig best;
  std::vector<GridCell> cells;
};

/// Holds out 20% of `target_train` for validation, fine-tunes every
/// (lr, weight_decay, epochs) cell on the rest, and picks the highest
/// validation Dice; ties go to the lower lr, then the lower weight decay.
GridResult grid_search(const Model& base, const std::vector<ImageSample>& target_train, const TrainConfig& cfg);

/// The validation split used by grid_search: (train part, validation part).
std::pair<std::vector<ImageSample>, std::vector<ImageSample>> holdout_split(const std::vector<ImageSample>& samples,
                                                                           std::uint64_t seed);

}  // namespace sps
