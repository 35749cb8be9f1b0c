#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sps/data.hpp"
#include "sps/metrics.hpp"
#include "sps/model.hpp"
#include "sps/train.hpp"

namespace sps {

/// Everything an ablation ladder or prompt study needs. Defaults are the
/// desk protocol: short schedules sized for a single CPU core.
struct ExperimentConfig {
  CorpusSpec corpus;
  ModelConfig model;
  std::uint64_t model_seed = 0;
  PretrainConfig pretrain;
  /// Template for every arm; ablation, seed and prompt strategy are set per run.
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  /// When non-empty, checkpoints, logs and reports are written below it.
  std::string out_dir;

  ExperimentConfig();
};

struct ArmRun {
  std::string arm;
  std::uint64_t seed = 0;
  MetricsReport report;
  std::string checkpoint_digest;
  std::optional<Model> model;
};

struct SummaryRow {
  std::string arm;
  std::vector<double> per_seed;
  double mean = 0;
  /// Sample standard deviation; absent with a single seed.
  std::optional<double> stdev;
};

struct ExperimentResult {
  std::string base_digest;
  std::vector<ArmRun> runs;
  std::vector<SummaryRow> summary;

  const SummaryRow& row(const std::string& arm) const;
  const ArmRun& run(const std::string& arm, std::uint64_t seed) const;
};

/// Builds the model from cfg.model and pretrains it on source-train.
Model prepare_base(const ExperimentConfig& cfg, const std::vector<ImageSample>& source_train);

using RunCallback = std::function<void(const ArmRun&)>;

/// vanilla, lora, lora_sp and lora_sp_kd for every seed, all from `base`.
/// Each arm is evaluated promptlessly with its own iteration count (k = 1
/// with self-prompting, 0 without).
ExperimentResult run_ablation(const ExperimentConfig& cfg, const Model& base,
                              const std::vector<ImageSample>& target_train, const std::vector<ImageSample>& target_test,
                              bool keep_models = false, const RunCallback& on_run = {});

/// One lora_sp_kd run per (strategy, seed), differing only in the prompt
/// fed to the first pass during training. Evaluation never uses prompts.
ExperimentResult run_prompt_study(const ExperimentConfig& cfg, const Model& base,
                                  const std::vector<ImageSample>& target_train,
                                  const std::vector<ImageSample>& target_test,
                                  const std::vector<TrainPromptStrategy>& strategies, bool keep_models = false,
                                  const RunCallback& on_run = {});

/// Rows in the given arm order, per_seed ordered like cfg.seeds.
std::vector<SummaryRow> summarize(const std::vector<ArmRun>& runs, const std::vector<std::string>& arm_order);

/// Tab-separated: arm, one column per seed, mean, and std when there is
/// more than one seed.
std::string format_summary(const std::vector<SummaryRow>& rows, const std::vector<std::uint64_t>& seeds);

}  // namespace sps
