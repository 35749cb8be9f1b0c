#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "sps/checkpoint.hpp"
#include "sps/data.hpp"
#include "sps/error.hpp"
#include "sps/experiments.hpp"
#include "sps/instrument.hpp"
#include "sps/metrics.hpp"
#include "sps/png_io.hpp"
#include "sps/self_prompt.hpp"
#include "sps/train.hpp"
#include "sps/util.hpp"

namespace sps::cli {
namespace {

namespace fs = std::filesystem;
using KeyValues = std::map<std::string, std::string>;
using Pairs = std::vector<std::pair<std::string, std::string>>;

class UsageError : public Error {
 public:
  using Error::Error;
};

// ---- key tables ------------------------------------------------------------------

const std::vector<std::string> kCorpusKeys{"n_train",         "n_test",           "image_size",  "shapes",
                                           "source_contrast", "target_contrast",  "target_noise_std",
                                           "blur_radius",     "min_radius",       "max_radius",  "max_shapes"};
const std::vector<std::string> kModelKeys{"image_size",    "patch_size",    "in_channels",
                                          "embed_dim",     "encoder_depth", "num_heads",
                                          "decoder_depth", "num_prompt_tokens_per_point",
                                          "mlp_ratio",     "upscale_dim"};
const std::vector<std::string> kTrainKeys{"ablation",   "lr",        "weight_decay", "epochs",
                                          "warmup_steps", "batch_size", "alpha",      "lora_rank",
                                          "lora_targets", "train_prompt_strategy", "seed", "grad_clip",
                                          "schedule",   "aux_dice",  "threshold",    "lr_grid",
                                          "wd_grid",    "epoch_grid"};
const std::vector<std::string> kPretrainKeys{"pretrain_lr",           "pretrain_weight_decay", "pretrain_epochs",
                                             "pretrain_batch_size",   "pretrain_warmup_steps", "pretrain_seed",
                                             "pretrain_grad_clip",    "pretrain_prompted_passes"};
// Train keys an experiment sets per run.
const std::set<std::string> kPerRunKeys{"ablation", "seed", "train_prompt_strategy", "lr_grid", "wd_grid",
                                        "epoch_grid"};

const std::map<std::string, std::string>& help_text() {
  static const std::map<std::string, std::string> h{
      {"out", "Run directory (created)"},
      {"config", "Flat key=value config file; flags override it"},
      {"data", "Corpus directory written by gen-data"},
      {"images", "Directory of external image PNGs"},
      {"masks", "Directory of external mask PNGs with matching names"},
      {"split_ratio", "Fraction of external pairs assigned to train"},
      {"checkpoint", "Model checkpoint"},
      {"image", "Input image PNG"},
      {"k", "Self-prompt iterations"},
      {"export_masks", "Write one predicted mask PNG per image"},
      {"eval_domain", "source or target"},
      {"eval_split", "train or test"},
      {"pretrain", "Pretrain a fresh model on the source domain"},
      {"grid", "Grid search lr/weight_decay/epochs on a validation holdout"},
      {"model_seed", "Seed for model initialization"},
      {"corpus_seed", "Seed of the generated corpus"},
      {"seeds", "Comma-separated fine-tuning seeds"},
      {"strategies", "Comma-separated training prompt strategies"},
      {"manifest", "manifest.json of the run to repeat"},
      {"ablation", "vanilla, lora, lora_sp or lora_sp_kd"},
      {"alpha", "Distillation weight (lora_sp_kd only)"},
      {"train_prompt_strategy", "none, random_point or gt_center_point"},
      {"schedule", "cosine or constant"},
      {"aux_dice", "Extension: Dice on the first pass too (0/1)"},
      {"shapes", "Comma-separated subset of ellipse, polygon, blob"},
  };
  return h;
}

const std::set<std::string> kFlagKeys{"export_masks", "pretrain", "grid"};

// ---- kv helpers --------------------------------------------------------------------

std::optional<std::string> get(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) return std::nullopt;
  return it->second;
}

bool flag(const KeyValues& kv, const std::string& key) {
  auto v = get(kv, key);
  return v && *v != "0" && *v != "false";
}

std::string require(const KeyValues& kv, const std::string& key) {
  auto v = get(kv, key);
  if (!v || v->empty()) throw UsageError("--" + key + " is required");
  return *v;
}

Pairs pick(const KeyValues& kv, const std::vector<std::string>& keys, const std::set<std::string>& skip = {}) {
  Pairs out;
  for (const auto& k : keys) {
    if (skip.count(k)) continue;
    if (auto v = get(kv, k)) out.emplace_back(k, *v);
  }
  return out;
}

ModelConfig model_config(const KeyValues& kv) {
  std::string text;
  for (const auto& [k, v] : pick(kv, kModelKeys)) text += k + "=" + v + "\n";
  return ModelConfig::from_text(text);
}

CorpusSpec corpus_spec(const KeyValues& kv, const std::string& seed_key) {
  Pairs p = pick(kv, kCorpusKeys);
  if (auto s = get(kv, seed_key)) p.emplace_back("seed", *s);
  return CorpusSpec::from_key_values(p);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split(text, ',')) {
    const int v = parse_int(trim(part), "seeds");
    if (v < 0) throw ConfigError("seeds must be non-negative");
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  return seeds;
}

std::string existing_path(const KeyValues& kv, const std::string& key) {
  const std::string p = require(kv, key);
  if (!fs::exists(p)) throw UsageError("--" + key + " path '" + p + "' does not exist");
  return p;
}

std::vector<ImageSample> load_samples(const KeyValues& kv, int image_size, int channels) {
  if (get(kv, "data")) {
    const std::string dir = existing_path(kv, "data");
    return read_corpus(dir);
  }
  if (get(kv, "images") || get(kv, "masks")) {
    const double ratio = get(kv, "split_ratio") ? parse_double(*get(kv, "split_ratio"), "split_ratio") : 0.8;
    return load_directory(existing_path(kv, "images"), existing_path(kv, "masks"), ratio, image_size, channels);
  }
  throw UsageError("--data or --images/--masks is required");
}

std::vector<ImageSample> nonempty(std::vector<ImageSample> samples, const std::string& what) {
  if (samples.empty()) throw UsageError("no " + what + " samples in the given data");
  return samples;
}

// ---- run context -------------------------------------------------------------------

struct Context {
  std::ostream& out;
  fs::path dir;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

// ---- commands ------------------------------------------------------------------------

void cmd_gen_data(const KeyValues& kv, Context& ctx) {
  const CorpusSpec spec = corpus_spec(kv, "seed");
  const auto corpus = generate_corpus(spec);
  write_corpus(ctx.dir.string(), corpus);
  write_file((ctx.dir / "corpus_spec.txt").string(), spec.to_text());
  ctx.out << "wrote " << corpus.size() << " samples to " << ctx.dir.string() << "\n";
}

void cmd_train(const KeyValues& kv, Context& ctx) {
  if (flag(kv, "pretrain")) {
    if (get(kv, "checkpoint")) throw UsageError("--pretrain starts from a fresh model; drop --checkpoint");
    const ModelConfig mc = model_config(kv);
    const PretrainConfig pc = PretrainConfig::from_key_values(pick(kv, kPretrainKeys));
    const auto model_seed = get(kv, "model_seed") ? parse_int(*get(kv, "model_seed"), "model_seed") : 0;
    const auto source = nonempty(select(load_samples(kv, mc.image_size, mc.in_channels), Domain::kSource, Split::kTrain),
                                 "source-train");
    const TrainResult r = pretrain_source(init_model(mc, static_cast<std::uint64_t>(model_seed)), source, pc);
    save_checkpoint(r.model, (ctx.dir / "model.ckpt").string());
    write_file((ctx.dir / "train_log.jsonl").string(), format_log(r.log));
    write_file((ctx.dir / "train_config.txt").string(), mc.to_text() + pc.to_text());
    ctx.out << "pretrained " << r.log.size() << " steps, final dice term " << format_double(r.log.back().dice_term)
            << "\n";
    return;
  }

  TrainConfig tc = TrainConfig::from_key_values(pick(kv, kTrainKeys));
  if (tc.ablation == Ablation::kVanilla) {
    for (const char* k : {"epochs", "lr", "weight_decay", "warmup_steps"}) {
      if (get(kv, k)) throw UsageError(std::string("ablation vanilla trains nothing; --") + k + " does not apply");
    }
    if (flag(kv, "grid")) throw UsageError("ablation vanilla trains nothing; --grid does not apply");
  }
  const Model base = load_checkpoint(existing_path(kv, "checkpoint"));
  const auto target =
      nonempty(select(load_samples(kv, base.config.image_size, base.config.in_channels), Domain::kTarget, Split::kTrain),
               "target-train");
  if (flag(kv, "grid")) {
    if (tc.lr_grid.empty()) tc.lr_grid = {1e-2, 1e-3, 1e-4, 1e-5};
    if (tc.wd_grid.empty()) tc.wd_grid = {1e-2, 1e-3, 1e-4, 1e-5};
    if (tc.epoch_grid.empty()) tc.epoch_grid = {100, 200, 300};
    const GridResult g = grid_search(base, target, tc);
    std::ostringstream table;
    table << "lr\tweight_decay\tepochs\tval_dice\n";
    for (const auto& c : g.cells) {
      table << format_double(c.lr) << "\t" << format_double(c.weight_decay) << "\t" << c.epochs << "\t"
            << format_double(c.val_dice) << "\n";
    }
    write_file((ctx.dir / "grid.tsv").string(), table.str());
    ctx.out << table.str();
    tc = g.best;
    ctx.out << "best: lr " << format_double(tc.lr) << " weight_decay " << format_double(tc.weight_decay) << " epochs "
            << tc.epochs << "\n";
  } else if (tc.has_grid()) {
    throw UsageError("grid lists need --grid");
  }
  const TrainResult r = finetune(base, target, tc);
  save_checkpoint(r.model, (ctx.dir / "model.ckpt").string());
  write_file((ctx.dir / "train_log.jsonl").string(), format_log(r.log));
  write_file((ctx.dir / "train_config.txt").string(), tc.to_text());
  ctx.extra["base_checkpoint_digest"] = model_digest(base);
  if (r.log.empty()) {
    ctx.out << "ablation vanilla: base checkpoint passed through\n";
  } else {
    const auto& last = r.log.back();
    ctx.out << "trained " << r.log.size() << " steps, final dice term " << format_double(last.dice_term)
            << " kl term " << format_double(last.kl_term) << "\n";
  }
}

void check_promptless(const MetricsReport& report) {
  if (report.ground_truth_prompts != 0) {
    throw Error("evaluation built " + std::to_string(report.ground_truth_prompts) + " ground-truth prompts");
  }
}

void cmd_eval(const KeyValues& kv, Context& ctx) {
  const Model model = load_checkpoint(existing_path(kv, "checkpoint"));
  const int k = get(kv, "k") ? parse_int(*get(kv, "k"), "k") : 1;
  if (k < 0) throw UsageError("--k must be >= 0");
  const float threshold = get(kv, "threshold") ? static_cast<float>(parse_double(*get(kv, "threshold"), "threshold")) : 0.5f;
  const Domain domain = parse_domain(get(kv, "eval_domain").value_or("target"));
  const Split split = parse_split(get(kv, "eval_split").value_or("test"));
  const auto samples = nonempty(select(load_samples(kv, model.config.image_size, model.config.in_channels), domain, split),
                                to_string(domain) + "-" + to_string(split));
  MetricsReport report = evaluate(model, samples, k, threshold);
  check_promptless(report);
  report.ablation = get(kv, "ablation").value_or("");
  emit_report(report, (ctx.dir / "report.jsonl").string());
  if (flag(kv, "export_masks")) {
    fs::create_directories(ctx.dir / "masks");
    for (const auto& s : samples) {
      const auto res = self_prompt_forward(model, s.image, k, threshold);
      write_png((ctx.dir / "masks" / (s.id + ".png")).string(), raster_from_mask(res.final_pass().binary));
    }
  }
  ctx.out << "k " << k << " images " << report.per_image.size() << " mean dice " << format_double(report.mean_dice)
          << " mean iou " << format_double(report.mean_iou) << "\n";
}

void cmd_predict(const KeyValues& kv, Context& ctx) {
  const Model model = load_checkpoint(existing_path(kv, "checkpoint"));
  const int k = get(kv, "k") ? parse_int(*get(kv, "k"), "k") : 1;
  if (k < 0) throw UsageError("--k must be >= 0");
  const float threshold = get(kv, "threshold") ? static_cast<float>(parse_double(*get(kv, "threshold"), "threshold")) : 0.5f;
  const Image image =
      resize_bilinear(image_from_raster(read_png(require(kv, "image")), model.config.in_channels), model.config.image_size);
  const SelfPromptResult res = self_prompt_forward(model, image, k, threshold);
  std::ostringstream trace;
  trace << "step\tsource_pass\tsource_foreground\tprompt\n";
  for (std::size_t i = 0; i < res.passes.size(); ++i) {
    write_png((ctx.dir / ("pass" + std::to_string(i) + ".png")).string(), raster_from_mask(res.passes[i].binary));
    if (i == 0) continue;
    trace << i << "\t" << i - 1 << "\t" << res.passes[i - 1].binary.cast<int>().sum() << "\t"
          << to_string(res.prompts_used[i]) << "\n";
  }
  write_file((ctx.dir / "trace.tsv").string(), trace.str());
  ctx.out << trace.str();
}

ExperimentConfig experiment_config(const KeyValues& kv, const Context& ctx) {
  ExperimentConfig ec;
  ec.corpus = corpus_spec(kv, "corpus_seed");
  ec.model = model_config(kv);
  if (auto s = get(kv, "model_seed")) ec.model_seed = static_cast<std::uint64_t>(parse_int(*s, "model_seed"));
  {
    // The desk-protocol defaults stay unless a key overrides them.
    Pairs p;
    const PretrainConfig d = ec.pretrain;
    p.emplace_back("pretrain_lr", format_double(d.lr));
    p.emplace_back("pretrain_epochs", std::to_string(d.epochs));
    for (auto& kvp : pick(kv, kPretrainKeys)) p.push_back(kvp);
    ec.pretrain = PretrainConfig::from_key_values(p);
  }
  {
    Pairs p;
    const TrainConfig d = ec.train;
    p.emplace_back("lr", format_double(d.lr));
    p.emplace_back("weight_decay", format_double(d.weight_decay));
    p.emplace_back("epochs", std::to_string(d.epochs));
    for (auto& kvp : pick(kv, kTrainKeys, kPerRunKeys)) p.push_back(kvp);
    ec.train = TrainConfig::from_key_values(p);
  }
  if (auto s = get(kv, "seeds")) ec.seeds = parse_seeds(*s);
  ec.out_dir = ctx.dir.string();
  return ec;
}

struct ExperimentInputs {
  Model base;
  std::vector<ImageSample> target_train;
  std::vector<ImageSample> target_test;
};

ExperimentInputs experiment_inputs(const KeyValues& kv, const ExperimentConfig& ec, Context& ctx) {
  std::vector<ImageSample> corpus;
  if (get(kv, "data") || get(kv, "images")) {
    corpus = load_samples(kv, ec.model.image_size, ec.model.in_channels);
  } else {
    corpus = generate_corpus(ec.corpus);
  }
  ExperimentInputs in;
  in.target_train = nonempty(select(corpus, Domain::kTarget, Split::kTrain), "target-train");
  in.target_test = nonempty(select(corpus, Domain::kTarget, Split::kTest), "target-test");
  if (get(kv, "checkpoint")) {
    in.base = load_checkpoint(existing_path(kv, "checkpoint"));
  } else {
    ctx.out << "pretraining base model on the source domain\n" << std::flush;
    in.base = prepare_base(ec, nonempty(select(corpus, Domain::kSource, Split::kTrain), "source-train"));
  }
  ctx.extra["base_checkpoint_digest"] = model_digest(in.base);
  return in;
}

RunCallback progress(std::ostream& out) {
  return [&out](const ArmRun& r) {
    out << r.arm << "\tseed " << r.seed << "\tdice " << format_double(r.report.mean_dice) << "\n" << std::flush;
  };
}

void check_runs(const ExperimentResult& result) {
  for (const auto& r : result.runs) check_promptless(r.report);
}

void cmd_ablate(const KeyValues& kv, Context& ctx) {
  const ExperimentConfig ec = experiment_config(kv, ctx);
  const ExperimentInputs in = experiment_inputs(kv, ec, ctx);
  const ExperimentResult result = run_ablation(ec, in.base, in.target_train, in.target_test, false, progress(ctx.out));
  check_runs(result);
  ctx.out << format_summary(result.summary, ec.seeds);
}

void cmd_prompt_study(const KeyValues& kv, Context& ctx) {
  const ExperimentConfig ec = experiment_config(kv, ctx);
  std::vector<TrainPromptStrategy> strategies;
  for (const auto& s : split(get(kv, "strategies").value_or("none,random_point,gt_center_point"), ',')) {
    strategies.push_back(parse_prompt_strategy(trim(s)));
  }
  const ExperimentInputs in = experiment_inputs(kv, ec, ctx);
  const ExperimentResult result =
      run_prompt_study(ec, in.base, in.target_train, in.target_test, strategies, false, progress(ctx.out));
  check_runs(result);
  ctx.out << format_summary(result.summary, ec.seeds);
}

// ---- command table ------------------------------------------------------------------

struct Command {
  std::string name;
  std::string description;
  std::vector<std::string> keys;
  std::function<void(const KeyValues&, Context&)> run;
};

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) {
    for (const auto& k : p) {
      if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
    }
  }
  return out;
}

const std::vector<Command>& commands() {
  static const std::vector<Command> table = [] {
    const std::vector<std::string> data_keys{"data", "images", "masks", "split_ratio"};
    std::vector<std::string> experiment_train;
    for (const auto& k : kTrainKeys) {
      if (!kPerRunKeys.count(k)) experiment_train.push_back(k);
    }
    const auto experiment_keys = concat({kCorpusKeys, {"corpus_seed"}, kModelKeys, {"model_seed"}, kPretrainKeys,
                                         experiment_train, {"seeds", "checkpoint"}, data_keys});
    std::vector<Command> t;
    t.push_back({"gen-data", "Generate the synthetic source/target corpus", concat({kCorpusKeys, {"seed"}}),
                 cmd_gen_data});
    t.push_back({"train", "Pretrain on the source domain or fine-tune an ablation arm",
                 concat({{"checkpoint", "pretrain", "grid", "model_seed"}, data_keys, kModelKeys, kPretrainKeys,
                         kTrainKeys}),
                 cmd_train});
    t.push_back({"eval", "Evaluate a checkpoint promptlessly",
                 concat({{"checkpoint", "k", "threshold", "export_masks", "eval_domain", "eval_split", "ablation"},
                         data_keys}),
                 cmd_eval});
    t.push_back({"predict", "Self-prompted prediction for one image", {"checkpoint", "image", "k", "threshold"},
                 cmd_predict});
    t.push_back({"ablate", "Run the vanilla / +LoRA / +SP / +KD ladder over seeds", experiment_keys, cmd_ablate});
    t.push_back({"prompt-study", "Compare training-time prompt strategies",
                 concat({experiment_keys, {"strategies"}}), cmd_prompt_study});
    return t;
  }();
  return table;
}

const Command& find_command(const std::string& name) {
  for (const auto& c : commands()) {
    if (c.name == name) return c;
  }
  throw UsageError("unknown command '" + name + "'");
}

// ---- manifest --------------------------------------------------------------------------

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::vector<std::string> artifact_files(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel != "manifest.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::int64_t manifest_seed(const KeyValues& kv) {
  for (const char* k : {"seed", "corpus_seed"}) {
    if (auto v = get(kv, k)) return parse_int(*v, k);
  }
  if (auto v = get(kv, "seeds")) return static_cast<std::int64_t>(parse_seeds(*v).front());
  return 0;
}

void write_manifest(const Command& cmd, const KeyValues& kv, const std::string& config_path, const Context& ctx,
                    const std::string& started) {
  nlohmann::ordered_json j;
  j["command"] = cmd.name;
  j["config_path"] = config_path;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [k, v] : kv) {
    if (k != "out") config[k] = v;
  }
  j["config"] = config;
  j["seed"] = manifest_seed(kv);
  nlohmann::ordered_json artifacts = nlohmann::ordered_json::array();
  for (const auto& rel : artifact_files(ctx.dir)) {
    artifacts.push_back({{"path", rel}, {"digest", file_digest((ctx.dir / rel).string())}});
  }
  j["artifacts"] = artifacts;
  for (const auto& [k, v] : ctx.extra.items()) j[k] = v;
  j["tool_version"] = kToolVersion;
  j["started"] = started;
  j["finished"] = utc_now();
  write_file((ctx.dir / "manifest.json").string(), j.dump(2) + "\n");
}

void execute(const Command& cmd, KeyValues kv, const std::string& config_path, std::ostream& out) {
  const std::string started = utc_now();
  // Inputs are recorded absolute so a manifest replays from any directory.
  for (const char* key : {"data", "images", "masks", "checkpoint", "image"}) {
    auto it = kv.find(key);
    if (it != kv.end() && !it->second.empty()) it->second = fs::absolute(it->second).lexically_normal().string();
  }
  const std::string dir = require(kv, "out");
  fs::create_directories(dir);
  Context ctx{out, fs::path(dir)};
  cmd.run(kv, ctx);
  write_manifest(cmd, kv, config_path, ctx, started);
}

int rerun(const std::string& manifest_path, const std::string& out_dir, std::ostream& out) {
  if (!fs::exists(manifest_path)) throw UsageError("--manifest path '" + manifest_path + "' does not exist");
  const auto j = nlohmann::json::parse(read_file(manifest_path), nullptr, false);
  if (j.is_discarded() || !j.contains("command") || !j.contains("config")) {
    throw UsageError("'" + manifest_path + "' is not a run manifest");
  }
  const Command& cmd = find_command(j["command"].get<std::string>());
  KeyValues kv;
  for (const auto& [k, v] : j["config"].items()) kv[k] = v.get<std::string>();
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) throw UsageError("--out '" + out_dir + "' must be new or empty");
  kv["out"] = out_dir;
  execute(cmd, kv, j.value("config_path", ""), out);

  std::map<std::string, std::string> before;
  for (const auto& a : j["artifacts"]) before[a["path"].get<std::string>()] = a["digest"].get<std::string>();
  const auto now = nlohmann::json::parse(read_file((fs::path(out_dir) / "manifest.json").string()));
  std::map<std::string, std::string> after;
  for (const auto& a : now["artifacts"]) after[a["path"].get<std::string>()] = a["digest"].get<std::string>();
  int mismatches = 0;
  for (const auto& [path, digest] : before) {
    auto it = after.find(path);
    const bool same = it != after.end() && it->second == digest;
    if (!same) ++mismatches;
    out << (same ? "same\t" : "DIFF\t") << path << "\n";
  }
  for (const auto& [path, digest] : after) {
    if (!before.count(path)) {
      ++mismatches;
      out << "NEW\t" << path << "\n";
    }
  }
  out << (mismatches == 0 ? "reproduced " : "not reproduced: ") << (mismatches == 0 ? before.size() : mismatches)
      << (mismatches == 0 ? " artifacts bit-for-bit\n" : " artifacts differ\n");
  return mismatches == 0 ? 0 : 2;
}

std::string flag_names(const std::string& key) {
  std::string dashed = key;
  std::replace(dashed.begin(), dashed.end(), '_', '-');
  return dashed == key ? "--" + key : "--" + dashed + ",--" + key;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-prompting fine-tuning for a tiny promptable segmentation model", "sps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // Storage must outlive parsing; maps keep references stable.
  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::map<std::string, bool>> flags;
  std::map<std::string, std::map<std::string, CLI::Option*>> options;
  std::map<std::string, std::string> config_paths;

  for (const auto& cmd : commands()) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.description);
    auto& opts = options[cmd.name];
    opts["out"] = sub->add_option("--out", values[cmd.name]["out"], help_text().at("out"));
    opts["config"] = sub->add_option("--config", config_paths[cmd.name], help_text().at("config"));
    for (const auto& key : cmd.keys) {
      auto h = help_text().find(key);
      const std::string help = h == help_text().end() ? "" : h->second;
      if (kFlagKeys.count(key)) {
        opts[key] = sub->add_flag(flag_names(key), flags[cmd.name][key], help);
      } else {
        opts[key] = sub->add_option(flag_names(key), values[cmd.name][key], help);
      }
    }
  }
  CLI::App* re = app.add_subcommand("rerun", "Repeat a run from its manifest and compare artifact digests");
  std::string manifest_path;
  std::string rerun_out;
  re->add_option("--manifest", manifest_path, help_text().at("manifest"))->required();
  re->add_option("--out", rerun_out, help_text().at("out"))->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (re->parsed()) return rerun(manifest_path, rerun_out, out);
    for (const auto& cmd : commands()) {
      CLI::App* sub = app.get_subcommand(cmd.name);
      if (!sub->parsed()) continue;
      KeyValues kv;
      const std::string& config_path = config_paths[cmd.name];
      if (!config_path.empty()) {
        if (!fs::exists(config_path)) throw UsageError("--config path '" + config_path + "' does not exist");
        for (const auto& [k, v] : parse_key_values(read_file(config_path))) {
          if (k != "out" && std::find(cmd.keys.begin(), cmd.keys.end(), k) == cmd.keys.end()) {
            throw UsageError("config key '" + k + "' does not apply to " + cmd.name);
          }
          kv[k] = v;
        }
      }
      for (const auto& [key, opt] : options[cmd.name]) {
        if (key == "config" || opt->count() == 0) continue;
        kv[key] = kFlagKeys.count(key) ? std::string(flags[cmd.name][key] ? "1" : "0") : values[cmd.name][key];
      }
      execute(cmd, kv, config_path, out);
      return 0;
    }
    throw UsageError("no command given");
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const GenerationError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace sps::cli
