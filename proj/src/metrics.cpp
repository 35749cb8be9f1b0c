#include "sps/metrics.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>

#include "sps/error.hpp"
#include "sps/instrument.hpp"
#include "sps/self_prompt.hpp"
#include "sps/util.hpp"

namespace sps {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw InputError("confusion: prediction and target shapes differ");
  }
  ConfusionCounts c;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const std::uint8_t p = pred.data()[i];
    const std::uint8_t t = target.data()[i];
    if (p > 1 || t > 1) throw InputError("confusion: masks must be binary");
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double dice_score(const ConfusionCounts& c) {
  const std::int64_t den = c.fp + 2 * c.tp + c.fn;
  if (den == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

double iou_score(const ConfusionCounts& c) {
  const std::int64_t den = c.tp + c.fp + c.fn;
  if (den == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(den);
}

void MetricsReport::aggregate() {
  if (per_image.empty()) throw InputError("report has no images");
  double d = 0, j = 0;
  ConfusionCounts sum;
  for (const auto& s : per_image) {
    d += s.dice;
    j += s.iou;
    sum.tp += s.counts.tp;
    sum.fp += s.counts.fp;
    sum.fn += s.counts.fn;
    sum.tn += s.counts.tn;
  }
  const double n = static_cast<double>(per_image.size());
  mean_dice = d / n;
  mean_iou = j / n;
  micro_dice = dice_score(sum);
  micro_iou = iou_score(sum);
}

MetricsReport evaluate(const Predictor& predictor, const std::vector<ImageSample>& samples, int k) {
  if (samples.empty()) throw InputError("cannot evaluate an empty corpus");
  if (k < 0) throw InputError("k must be >= 0");
  const std::int64_t gt_before = counters().ground_truth_prompts;
  MetricsReport report;
  report.k = k;
  for (const auto& s : samples) {
    const BinaryMask pred = predictor(s.image, k);
    const ConfusionCounts c = confusion(pred, s.mask);
    report.per_image.push_back(ImageScore{s.id, dice_score(c), iou_score(c), k, c});
  }
  report.ground_truth_prompts = counters().ground_truth_prompts - gt_before;
  report.aggregate();
  return report;
}

MetricsReport evaluate(const Model& model, const std::vector<ImageSample>& samples, int k, float threshold) {
  return evaluate(
      [&model, threshold](const Image& image, int iterations) {
        return self_prompt_forward(model, image, iterations, threshold).final_pass().binary;
      },
      samples, k);
}

// ---- report files ------------------------------------------------------------

void emit_report(const MetricsReport& report, const std::string& path) {
  if (report.per_image.empty()) throw InputError("refusing to write an empty report");
  std::ostringstream jl;
  for (const auto& s : report.per_image) {
    nlohmann::ordered_json j;
    j["type"] = "image";
    j["id"] = s.id;
    j["dice"] = s.dice;
    j["iou"] = s.iou;
    j["k"] = s.k;
    j["ablation"] = report.ablation;
    j["seed"] = report.seed;
    j["tp"] = s.counts.tp;
    j["fp"] = s.counts.fp;
    j["fn"] = s.counts.fn;
    j["tn"] = s.counts.tn;
    jl << j.dump() << "\n";
  }
  nlohmann::ordered_json a;
  a["type"] = "aggregate";
  a["n"] = report.per_image.size();
  a["mean_dice"] = report.mean_dice;
  a["mean_iou"] = report.mean_iou;
  a["micro_dice"] = report.micro_dice;
  a["micro_iou"] = report.micro_iou;
  a["k"] = report.k;
  a["ablation"] = report.ablation;
  a["seed"] = report.seed;
  a["train_prompt_strategy"] = report.train_prompt_strategy;
  a["ground_truth_prompts"] = report.ground_truth_prompts;
  jl << a.dump() << "\n";
  write_file(path, jl.str());

  std::ostringstream table;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %8s %8s %3s\n", "id", "dice", "iou", "k");
  table << line;
  for (const auto& s : report.per_image) {
    std::snprintf(line, sizeof line, "%-24s %8.4f %8.4f %3d\n", s.id.c_str(), s.dice, s.iou, s.k);
    table << line;
  }
  std::snprintf(line, sizeof line, "%-24s %8.4f %8.4f %3d\n", "mean", report.mean_dice, report.mean_iou, report.k);
  table << line;
  std::snprintf(line, sizeof line, "%-24s %8.4f %8.4f %3d\n", "micro", report.micro_dice, report.micro_iou, report.k);
  table << line;
  table << "ablation=" << report.ablation << " seed=" << report.seed
        << " train_prompt_strategy=" << report.train_prompt_strategy << "\n";
  write_file(path + ".txt", table.str());
}

MetricsReport read_report(const std::string& path) {
  std::istringstream in(read_file(path));
  MetricsReport r;
  bool have_aggregate = false;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") == "image") {
      ImageScore s;
      s.id = j.at("id").get<std::string>();
      s.dice = j.at("dice").get<double>();
      s.iou = j.at("iou").get<double>();
      s.k = j.at("k").get<int>();
      s.counts = ConfusionCounts{j.at("tp").get<std::int64_t>(), j.at("fp").get<std::int64_t>(),
                                 j.at("fn").get<std::int64_t>(), j.at("tn").get<std::int64_t>()};
      r.per_image.push_back(std::move(s));
    } else {
      have_aggregate = true;
      r.mean_dice = j.at("mean_dice").get<double>();
      r.mean_iou = j.at("mean_iou").get<double>();
      r.micro_dice = j.at("micro_dice").get<double>();
      r.micro_iou = j.at("micro_iou").get<double>();
      r.k = j.at("k").get<int>();
      r.ablation = j.at("ablation").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.train_prompt_strategy = j.at("train_prompt_strategy").get<std::string>();
      r.ground_truth_prompts = j.at("ground_truth_prompts").get<std::int64_t>();
    }
  }
  if (!have_aggregate || r.per_image.empty()) throw IoError("'" + path + "' is not a complete report");
  return r;
}

}  // namespace sps
