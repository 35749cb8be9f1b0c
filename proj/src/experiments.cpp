#include "sps/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "sps/checkpoint.hpp"
#include "sps/error.hpp"
#include "sps/util.hpp"

namespace sps {

namespace fs = std::filesystem;

ExperimentConfig::ExperimentConfig() {
  pretrain.epochs = 10;
  pretrain.lr = 1e-3;
  train.lr = 1e-3;
  train.weight_decay = 1e-4;
  train.epochs = 5;
}

const SummaryRow& ExperimentResult::row(const std::string& arm) const {
  for (const auto& r : summary) {
    if (r.arm == arm) return r;
  }
  throw Error("no summary row for arm '" + arm + "'");
}

const ArmRun& ExperimentResult::run(const std::string& arm, std::uint64_t seed) const {
  for (const auto& r : runs) {
    if (r.arm == arm && r.seed == seed) return r;
  }
  throw Error("no run for arm '" + arm + "' seed " + std::to_string(seed));
}

Model prepare_base(const ExperimentConfig& cfg, const std::vector<ImageSample>& source_train) {
  Model fresh = init_model(cfg.model, cfg.model_seed);
  Model base = pretrain_source(fresh, source_train, cfg.pretrain).model;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    save_checkpoint(base, (fs::path(cfg.out_dir) / "base.ckpt").string());
  }
  return base;
}

namespace {

void check_seeds(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
}

ArmRun run_arm(const ExperimentConfig& cfg, const Model& base, const std::string& arm_name, TrainConfig tc,
               const std::vector<ImageSample>& target_train, const std::vector<ImageSample>& target_test,
               bool keep_model) {
  TrainResult trained = finetune(base, target_train, tc);
  ArmRun run;
  run.arm = arm_name;
  run.seed = tc.seed;
  run.report = evaluate(trained.model, target_test, default_eval_k(tc.ablation), tc.threshold);
  run.report.ablation = to_string(tc.ablation);
  run.report.seed = tc.seed;
  run.report.train_prompt_strategy = to_string(tc.train_prompt_strategy);
  run.checkpoint_digest = model_digest(trained.model);
  if (!cfg.out_dir.empty()) {
    const fs::path dir = fs::path(cfg.out_dir) / (arm_name + "_seed" + std::to_string(tc.seed));
    fs::create_directories(dir);
    if (tc.ablation != Ablation::kVanilla) {
      save_checkpoint(trained.model, (dir / "model.ckpt").string());
      write_file((dir / "train_log.jsonl").string(), format_log(trained.log));
    }
    write_file((dir / "train_config.txt").string(), tc.to_text());
    emit_report(run.report, (dir / "report.jsonl").string());
  }
  if (keep_model) run.model = std::move(trained.model);
  return run;
}

void write_summary(const ExperimentConfig& cfg, const ExperimentResult& result, const std::string& name) {
  if (cfg.out_dir.empty()) return;
  write_file((fs::path(cfg.out_dir) / name).string(), format_summary(result.summary, cfg.seeds));
}

}  // namespace

ExperimentResult run_ablation(const ExperimentConfig& cfg, const Model& base,
                              const std::vector<ImageSample>& target_train, const std::vector<ImageSample>& target_test,
                              bool keep_models, const RunCallback& on_run) {
  check_seeds(cfg);
  ExperimentResult result;
  result.base_digest = model_digest(base);
  const std::vector<Ablation> ladder{Ablation::kVanilla, Ablation::kLora, Ablation::kLoraSp, Ablation::kLoraSpKd};
  std::vector<std::string> order;
  for (Ablation a : ladder) order.push_back(to_string(a));
  for (std::uint64_t seed : cfg.seeds) {
    for (Ablation a : ladder) {
      TrainConfig tc = cfg.train;
      tc.ablation = a;
      tc.seed = seed;
      tc.alpha.reset();
      tc.aux_dice = cfg.train.aux_dice && a == Ablation::kLoraSpKd;
      tc.train_prompt_strategy = TrainPromptStrategy::kNone;
      if (a == Ablation::kLoraSpKd && cfg.train.alpha) tc.alpha = cfg.train.alpha;
      result.runs.push_back(run_arm(cfg, base, to_string(a), tc, target_train, target_test, keep_models));
      if (on_run) on_run(result.runs.back());
    }
  }
  result.summary = summarize(result.runs, order);
  write_summary(cfg, result, "ablation_summary.tsv");
  return result;
}

ExperimentResult run_prompt_study(const ExperimentConfig& cfg, const Model& base,
                                  const std::vector<ImageSample>& target_train,
                                  const std::vector<ImageSample>& target_test,
                                  const std::vector<TrainPromptStrategy>& strategies, bool keep_models,
                                  const RunCallback& on_run) {
  check_seeds(cfg);
  if (strategies.empty()) throw ConfigError("at least one prompt strategy is required");
  ExperimentResult result;
  result.base_digest = model_digest(base);
  std::vector<std::string> order;
  for (auto s : strategies) order.push_back(to_string(s));
  for (std::uint64_t seed : cfg.seeds) {
    for (auto s : strategies) {
      TrainConfig tc = cfg.train;
      tc.ablation = Ablation::kLoraSpKd;
      tc.seed = seed;
      tc.train_prompt_strategy = s;
      result.runs.push_back(run_arm(cfg, base, to_string(s), tc, target_train, target_test, keep_models));
      if (on_run) on_run(result.runs.back());
    }
  }
  result.summary = summarize(result.runs, order);
  write_summary(cfg, result, "prompt_study_summary.tsv");
  return result;
}

std::vector<SummaryRow> summarize(const std::vector<ArmRun>& runs, const std::vector<std::string>& arm_order) {
  std::vector<SummaryRow> rows;
  for (const auto& arm : arm_order) {
    SummaryRow row;
    row.arm = arm;
    for (const auto& r : runs) {
      if (r.arm == arm) row.per_seed.push_back(r.report.mean_dice);
    }
    if (row.per_seed.empty()) continue;
    double sum = 0;
    for (double v : row.per_seed) sum += v;
    row.mean = sum / static_cast<double>(row.per_seed.size());
    if (row.per_seed.size() > 1) {
      double ss = 0;
      for (double v : row.per_seed) ss += (v - row.mean) * (v - row.mean);
      row.stdev = std::sqrt(ss / static_cast<double>(row.per_seed.size() - 1));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_summary(const std::vector<SummaryRow>& rows, const std::vector<std::uint64_t>& seeds) {
  std::ostringstream os;
  os << "arm";
  for (auto s : seeds) os << "\tdice_seed" << s;
  os << "\tmean";
  if (seeds.size() > 1) os << "\tstd";
  os << "\n";
  for (const auto& r : rows) {
    os << r.arm;
    for (double v : r.per_seed) os << "\t" << format_double(v);
    os << "\t" << format_double(r.mean);
    if (seeds.size() > 1) os << "\t" << (r.stdev ? format_double(*r.stdev) : "");
    os << "\n";
  }
  return os.str();
}

}  // namespace sps
