#include "sps/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "sps/error.hpp"
#include "sps/instrument.hpp"
#include "sps/metrics.hpp"
#include "sps/net.hpp"
#include "sps/self_prompt.hpp"
#include "sps/util.hpp"

namespace sps {

// ---- enums -------------------------------------------------------------------

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kVanilla: return "vanilla";
    case Ablation::kLora: return "lora";
    case Ablation::kLoraSp: return "lora_sp";
    case Ablation::kLoraSpKd: return "lora_sp_kd";
  }
  return "?";
}

std::string to_string(TrainPromptStrategy s) {
  switch (s) {
    case TrainPromptStrategy::kNone: return "none";
    case TrainPromptStrategy::kRandomPoint: return "random_point";
    case TrainPromptStrategy::kGtCenterPoint: return "gt_center_point";
  }
  return "?";
}

Ablation parse_ablation(const std::string& s) {
  for (Ablation a : {Ablation::kVanilla, Ablation::kLora, Ablation::kLoraSp, Ablation::kLoraSpKd}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown ablation '" + s + "' (vanilla, lora, lora_sp, lora_sp_kd)");
}

TrainPromptStrategy parse_prompt_strategy(const std::string& s) {
  for (auto p : {TrainPromptStrategy::kNone, TrainPromptStrategy::kRandomPoint, TrainPromptStrategy::kGtCenterPoint}) {
    if (to_string(p) == s) return p;
  }
  throw ConfigError("unknown train prompt strategy '" + s + "' (none, random_point, gt_center_point)");
}

bool uses_self_prompt(Ablation a) { return a == Ablation::kLoraSp || a == Ablation::kLoraSpKd; }
int default_eval_k(Ablation a) { return uses_self_prompt(a) ? 1 : 0; }

// ---- configs -----------------------------------------------------------------

double TrainConfig::effective_alpha() const {
  if (alpha) return *alpha;
  return ablation == Ablation::kLoraSpKd ? 0.5 : 0.0;
}

namespace {

bool in_grid_values(double v) {
  for (double allowed : {1e-2, 1e-3, 1e-4, 1e-5}) {
    if (std::abs(v - allowed) <= 1e-12 * allowed) return true;
  }
  return false;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : ",") + format_double(x);
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (int x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
  return out;
}

long resolve_warmup(long warmup, long total_steps) {
  if (warmup >= 0) return warmup;
  return static_cast<long>(std::lround(0.05 * static_cast<double>(total_steps)));
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (lora_rank <= 0) throw ConfigError("lora_rank must be positive");
  if (!(grad_clip >= 0)) throw ConfigError("grad_clip must be >= 0");
  if (!(threshold > 0.0f && threshold < 1.0f)) throw ConfigError("threshold must lie in (0, 1)");
  if (alpha && !(*alpha >= 0)) throw ConfigError("alpha must be >= 0");
  if (alpha && *alpha > 0 && ablation != Ablation::kLoraSpKd) {
    throw ConfigError("alpha > 0 requires ablation lora_sp_kd (distillation is off in " + to_string(ablation) + ")");
  }
  if (aux_dice && ablation != Ablation::kLoraSpKd) throw ConfigError("aux_dice requires ablation lora_sp_kd");
  if (has_grid()) {
    if (lr_grid.empty() || wd_grid.empty() || epoch_grid.empty()) {
      throw ConfigError("a grid needs lr, weight_decay and epoch lists");
    }
    for (double v : lr_grid) {
      if (!in_grid_values(v)) throw ConfigError("grid lr " + format_double(v) + " not in {1e-2,1e-3,1e-4,1e-5}");
    }
    for (double v : wd_grid) {
      if (!in_grid_values(v)) throw ConfigError("grid weight_decay " + format_double(v) + " not in {1e-2,1e-3,1e-4,1e-5}");
    }
    for (int e : epoch_grid) {
      if (e != 100 && e != 200 && e != 300) throw ConfigError("grid epochs " + std::to_string(e) + " not in {100,200,300}");
    }
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "ablation=" << to_string(ablation) << "\n"
     << "lr=" << format_double(lr) << "\n"
     << "weight_decay=" << format_double(weight_decay) << "\n"
     << "epochs=" << epochs << "\n"
     << "warmup_steps=" << warmup_steps << "\n"
     << "batch_size=" << batch_size << "\n"
     << "alpha=" << format_double(effective_alpha()) << "\n"
     << "lora_rank=" << lora_rank << "\n"
     << "train_prompt_strategy=" << to_string(train_prompt_strategy) << "\n"
     << "seed=" << seed << "\n"
     << "grad_clip=" << format_double(grad_clip) << "\n"
     << "schedule=" << (schedule == Schedule::kCosine ? "cosine" : "constant") << "\n"
     << "aux_dice=" << (aux_dice ? 1 : 0) << "\n"
     << "threshold=" << format_double(threshold) << "\n";
  if (!lora_targets.empty()) {
    std::string t;
    for (const auto& s : lora_targets) t += (t.empty() ? "" : ",") + s;
    os << "lora_targets=" << t << "\n";
  }
  if (has_grid()) {
    os << "lr_grid=" << join_doubles(lr_grid) << "\n"
       << "wd_grid=" << join_doubles(wd_grid) << "\n"
       << "epoch_grid=" << join_ints(epoch_grid) << "\n";
  }
  return os.str();
}

TrainConfig TrainConfig::from_key_values(const std::vector<std::pair<std::string, std::string>>& kv) {
  TrainConfig c;
  auto doubles = [](const std::string& v, const std::string& k) {
    std::vector<double> out;
    for (const auto& p : split(v, ',')) out.push_back(parse_double(p, k));
    return out;
  };
  for (const auto& [k, v] : kv) {
    if (k == "ablation") c.ablation = parse_ablation(v);
    else if (k == "lr") c.lr = parse_double(v, k);
    else if (k == "weight_decay") c.weight_decay = parse_double(v, k);
    else if (k == "epochs") c.epochs = parse_int(v, k);
    else if (k == "warmup_steps") c.warmup_steps = parse_int(v, k);
    else if (k == "batch_size") c.batch_size = parse_int(v, k);
    else if (k == "alpha") c.alpha = parse_double(v, k);
    else if (k == "lora_rank") c.lora_rank = parse_int(v, k);
    else if (k == "train_prompt_strategy") c.train_prompt_strategy = parse_prompt_strategy(v);
    else if (k == "seed") c.seed = static_cast<std::uint64_t>(parse_int(v, k));
    else if (k == "grad_clip") c.grad_clip = parse_double(v, k);
    else if (k == "schedule") {
      if (v == "cosine") c.schedule = Schedule::kCosine;
      else if (v == "constant") c.schedule = Schedule::kConstant;
      else throw ConfigError("schedule must be cosine or constant");
    } else if (k == "aux_dice") c.aux_dice = parse_int(v, k) != 0;
    else if (k == "threshold") c.threshold = static_cast<float>(parse_double(v, k));
    else if (k == "lora_targets") c.lora_targets = split(v, ',');
    else if (k == "lr_grid") c.lr_grid = doubles(v, k);
    else if (k == "wd_grid") c.wd_grid = doubles(v, k);
    else if (k == "epoch_grid") {
      for (const auto& p : split(v, ',')) c.epoch_grid.push_back(parse_int(p, k));
    } else throw ConfigError("unknown train config key '" + k + "'");
  }
  return c;
}

void PretrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("pretrain lr must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("pretrain weight_decay must be >= 0");
  if (epochs <= 0 || batch_size <= 0) throw ConfigError("pretrain epochs and batch_size must be positive");
  if (!(grad_clip >= 0)) throw ConfigError("pretrain grad_clip must be >= 0");
}

std::string PretrainConfig::to_text() const {
  std::ostringstream os;
  os << "pretrain_lr=" << format_double(lr) << "\n"
     << "pretrain_weight_decay=" << format_double(weight_decay) << "\n"
     << "pretrain_epochs=" << epochs << "\n"
     << "pretrain_batch_size=" << batch_size << "\n"
     << "pretrain_warmup_steps=" << warmup_steps << "\n"
     << "pretrain_seed=" << seed << "\n"
     << "pretrain_grad_clip=" << format_double(grad_clip) << "\n"
     << "pretrain_prompted_passes=" << (prompted_passes ? 1 : 0) << "\n";
  return os.str();
}

PretrainConfig PretrainConfig::from_key_values(const std::vector<std::pair<std::string, std::string>>& kv) {
  PretrainConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "pretrain_lr") c.lr = parse_double(v, k);
    else if (k == "pretrain_weight_decay") c.weight_decay = parse_double(v, k);
    else if (k == "pretrain_epochs") c.epochs = parse_int(v, k);
    else if (k == "pretrain_batch_size") c.batch_size = parse_int(v, k);
    else if (k == "pretrain_warmup_steps") c.warmup_steps = parse_int(v, k);
    else if (k == "pretrain_seed") c.seed = static_cast<std::uint64_t>(parse_int(v, k));
    else if (k == "pretrain_grad_clip") c.grad_clip = parse_double(v, k);
    else if (k == "pretrain_prompted_passes") c.prompted_passes = parse_int(v, k) != 0;
    else throw ConfigError("unknown pretrain config key '" + k + "'");
  }
  return c;
}

std::string format_log(const std::vector<TrainLogRecord>& log) {
  std::ostringstream os;
  for (const auto& r : log) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["lr"] = r.lr;
    j["dice_term"] = r.dice_term;
    j["kl_term"] = r.kl_term;
    j["alpha"] = r.alpha;
    j["aux_term"] = r.aux_term;
    j["total"] = r.total;
    j["grad_norm"] = r.grad_norm;
    os << j.dump() << "\n";
  }
  return os.str();
}

// ---- training loop -------------------------------------------------------------

namespace {

struct SampleLoss {
  ad::Var total;
  double dice = 0;
  double kl = 0;
  double aux = 0;
};

using LossBuilder =
    std::function<SampleLoss(ad::Graph<float>&, Net<float>&, const ImageSample&, long step, std::size_t index)>;

struct LoopOptions {
  double lr = 0;
  double weight_decay = 0;
  int epochs = 0;
  int batch_size = 0;
  long warmup_steps = -1;
  std::uint64_t seed = 0;
  double grad_clip = 0;
  Schedule schedule = Schedule::kCosine;
  TrainScope scope = TrainScope::kFull;
  double alpha = 0;
};

std::vector<TrainLogRecord> run_loop(Model& model, const std::vector<ImageSample>& samples, const LoopOptions& opt,
                                     const LossBuilder& build) {
  if (samples.empty()) throw TrainingError("no training samples");
  const auto n = samples.size();
  const auto bs = static_cast<std::size_t>(opt.batch_size);
  const long steps_per_epoch = static_cast<long>((n + bs - 1) / bs);
  const long total_steps = steps_per_epoch * opt.epochs;
  const long warmup = resolve_warmup(opt.warmup_steps, total_steps);

  std::map<std::string, MatF*> trainable;
  for (auto& [name, m] : model.params) {
    if (is_trainable(name, opt.scope)) trainable.emplace(name, &m);
  }
  for (auto& [host, a] : model.adapters) {
    if (is_trainable(lora_a_name(host), opt.scope)) {
      trainable.emplace(lora_a_name(host), &a.A);
      trainable.emplace(lora_b_name(host), &a.B);
    }
  }
  const auto is_train = [&trainable](const std::string& name) { return trainable.count(name) != 0; };

  AdamW optimizer(AdamW::Options{0.9, 0.999, 1e-8, opt.weight_decay});
  std::vector<TrainLogRecord> log;
  std::vector<std::size_t> order(n);
  long step = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(opt.seed * 1000003ull + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += bs, ++step) {
      const std::size_t stop = std::min(n, start + bs);
      const auto count = static_cast<float>(stop - start);
      std::map<std::string, MatF> grads;
      TrainLogRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.alpha = opt.alpha;
      for (std::size_t i = start; i < stop; ++i) {
        ad::Graph<float> g;
        Net<float> net(g, model, is_train);
        const SampleLoss loss = build(g, net, samples[order[i]], step, order[i]);
        const float value = g.value(loss.total)(0, 0);
        if (!std::isfinite(value)) {
          throw TrainingError("loss became non-finite at step " + std::to_string(step));
        }
        g.backward(loss.total);
        for (const auto& [name, var] : net.bound()) {
          const MatF* gr = g.grad(var);
          if (gr == nullptr) continue;
          auto it = grads.find(name);
          if (it == grads.end()) {
            grads.emplace(name, *gr / count);
          } else {
            it->second += *gr / count;
          }
        }
        rec.dice_term += loss.dice;
        rec.kl_term += loss.kl;
        rec.aux_term += loss.aux;
      }
      rec.dice_term /= count;
      rec.kl_term /= count;
      rec.aux_term /= count;
      rec.total = rec.dice_term + rec.alpha * rec.kl_term + rec.aux_term;
      for (const auto& [name, gr] : grads) {
        if (!gr.allFinite()) throw TrainingError("non-finite gradient for '" + name + "' at step " + std::to_string(step));
      }
      rec.grad_norm = clip_global_norm(grads, opt.grad_clip);
      rec.lr = lr_schedule(step, warmup, opt.lr, total_steps, opt.schedule);
      optimizer.step(trainable, grads, rec.lr);
      log.push_back(rec);
    }
  }
  return log;
}

BinaryMask binarize_column(const MatF& prob_column, int side, float threshold) {
  BinaryMask m(side, side);
  for (Eigen::Index i = 0; i < prob_column.size(); ++i) m.data()[i] = prob_column.data()[i] >= threshold ? 1 : 0;
  return m;
}

std::uint64_t mix_seed(std::uint64_t seed, long step, std::size_t index) {
  return sample_seed(seed, static_cast<int>(step & 0x7fffffff), static_cast<int>(index));
}

}  // namespace

TrainResult pretrain_source(const Model& model, const std::vector<ImageSample>& source, const PretrainConfig& cfg) {
  cfg.validate();
  TrainResult out{model, {}};
  if (!out.model.adapters.empty()) throw ConfigError("pretraining expects a model without adapters");
  LoopOptions opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.epochs = cfg.epochs;
  opt.batch_size = cfg.batch_size;
  opt.warmup_steps = cfg.warmup_steps;
  opt.seed = cfg.seed;
  opt.grad_clip = cfg.grad_clip;
  opt.scope = TrainScope::kFull;

  const LossConfig lc;
  auto build = [&](ad::Graph<float>& g, Net<float>& net, const ImageSample& s, long step, std::size_t index) {
    const MatF target = mask_column<float>(s.mask);
    ad::Var emb = net.encode(s.image);
    ad::Var p0 = g.sigmoid(net.decode(emb, net.prompt_tokens(NoPrompt{})));
    SampleLoss loss;
    ad::Var d0 = dice_loss(g, p0, target, static_cast<float>(lc.dice_smooth));
    loss.dice = g.value(d0)(0, 0);
    if (!cfg.prompted_passes) {
      loss.total = d0;
      return loss;
    }
    const std::uint64_t seed = mix_seed(cfg.seed, step, index);
    PromptSpec prompt;
    switch (seed % 3) {
      case 0:
        prompt = gt_box(s.mask);
        counters().ground_truth_prompts++;
        break;
      case 1: prompt = gt_point(s.mask, PointStrategy::kRandom, seed); break;
      default: prompt = gt_point(s.mask, PointStrategy::kCenter, seed); break;
    }
    ad::Var p1 = g.sigmoid(net.decode(emb, net.prompt_tokens(prompt)));
    ad::Var d1 = dice_loss(g, p1, target, static_cast<float>(lc.dice_smooth));
    loss.aux = g.value(d1)(0, 0);
    const std::array<ad::Var, 2> terms{d0, d1};
    const std::array<float, 2> weights{1.0f, 1.0f};
    loss.total = g.weighted_sum(terms, weights);
    return loss;
  };
  out.log = run_loop(out.model, source, opt, build);
  return out;
}

TrainResult finetune(const Model& base, const std::vector<ImageSample>& target_train, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult out{base, {}};
  if (cfg.ablation == Ablation::kVanilla) return out;
  if (!out.model.adapters.empty()) throw ConfigError("base checkpoint already carries LoRA adapters");
  attach_adapters(out.model, cfg.lora_targets.empty() ? default_lora_targets(base.config) : cfg.lora_targets,
                  cfg.lora_rank, cfg.seed);

  LoopOptions opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.epochs = cfg.epochs;
  opt.batch_size = cfg.batch_size;
  opt.warmup_steps = cfg.warmup_steps;
  opt.seed = cfg.seed;
  opt.grad_clip = cfg.grad_clip;
  opt.schedule = cfg.schedule;
  opt.scope = TrainScope::kAdapted;
  opt.alpha = cfg.effective_alpha();

  LossConfig lc;
  lc.alpha = cfg.effective_alpha();
  lc.aux_dice_on_first_pass = cfg.aux_dice;
  const int side = base.config.image_size;
  const bool self_prompt = uses_self_prompt(cfg.ablation);
  const bool distill = cfg.ablation == Ablation::kLoraSpKd;

  auto build = [&](ad::Graph<float>& g, Net<float>& net, const ImageSample& s, long step, std::size_t index) {
    const MatF target = mask_column<float>(s.mask);
    PromptSpec first = NoPrompt{};
    const std::uint64_t seed = mix_seed(cfg.seed, step, index);
    if (cfg.train_prompt_strategy == TrainPromptStrategy::kRandomPoint) {
      first = gt_point(s.mask, PointStrategy::kRandom, seed);
    } else if (cfg.train_prompt_strategy == TrainPromptStrategy::kGtCenterPoint) {
      first = gt_point(s.mask, PointStrategy::kCenter, seed);
    }
    ad::Var emb = net.encode(s.image);
    ad::Var p0 = g.sigmoid(net.decode(emb, net.prompt_tokens(first)));
    SampleLoss loss;
    if (!self_prompt) {
      loss.total = dice_loss(g, p0, target, static_cast<float>(lc.dice_smooth));
      loss.dice = g.value(loss.total)(0, 0);
      return loss;
    }
    // The box is read off the first pass's values: no gradient flows
    // through its construction.
    const PromptSpec box = sp_box(binarize_column(g.value(p0), side, cfg.threshold));
    ad::Var p1 = g.sigmoid(net.decode(emb, net.prompt_tokens(box)));
    const LossVars<float> lv = total_loss(g, distill ? p0 : ad::Var{}, p1, target, lc);
    loss.total = lv.total;
    loss.dice = g.value(lv.dice)(0, 0);
    if (lv.kl.valid()) loss.kl = g.value(lv.kl)(0, 0);
    if (lv.aux_dice.valid()) loss.aux = g.value(lv.aux_dice)(0, 0);
    return loss;
  };
  out.log = run_loop(out.model, target_train, opt, build);
  return out;
}

std::pair<std::vector<ImageSample>, std::vector<ImageSample>> holdout_split(const std::vector<ImageSample>& samples,
                                                                           std::uint64_t seed) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ 0x5DEECE66Dull);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(samples.size())));
  std::pair<std::vector<ImageSample>, std::vector<ImageSample>> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? out.second : out.first).push_back(samples[order[i]]);
  }
  if (out.first.empty() || out.second.empty()) throw ConfigError("too few samples for a validation split");
  return out;
}

GridResult grid_search(const Model& base, const std::vector<ImageSample>& target_train, const TrainConfig& cfg) {
  cfg.validate();
  if (!cfg.has_grid()) throw ConfigError("grid_search needs lr, weight_decay and epoch lists");
  const auto [train_part, val_part] = holdout_split(target_train, cfg.seed);
  GridResult result;
  bool have_best = false;
  GridCell best;
  for (double lr : cfg.lr_grid) {
    for (double wd : cfg.wd_grid) {
      for (int epochs : cfg.epoch_grid) {
        TrainConfig cell = cfg;
        cell.lr = lr;
        cell.weight_decay = wd;
        cell.epochs = epochs;
        cell.lr_grid.clear();
        cell.wd_grid.clear();
        cell.epoch_grid.clear();
        const Model tuned = finetune(base, train_part, cell).model;
        const double dice = evaluate(tuned, val_part, default_eval_k(cfg.ablation), cfg.threshold).mean_dice;
        const GridCell gc{lr, wd, epochs, dice};
        result.cells.push_back(gc);
        const bool better = !have_best || gc.val_dice > best.val_dice ||
                            (gc.val_dice == best.val_dice &&
                             std::tie(gc.lr, gc.weight_decay, gc.epochs) < std::tie(best.lr, best.weight_decay, best.epochs));
        if (better) {
          best = gc;
          have_best = true;
        }
      }
    }
  }
  result.best = cfg;
  result.best.lr = best.lr;
  result.best.weight_decay = best.weight_decay;
  result.best.epochs = best.epochs;
  result.best.lr_grid.clear();
  result.best.wd_grid.clear();
  result.best.epoch_grid.clear();
  return result;
}

}  // namespace sps
