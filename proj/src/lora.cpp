#include "sps/lora.hpp"

#include <algorithm>
#include <random>

namespace sps {

int attach_adapters(Model& model, const std::vector<std::string>& target_names, int rank, std::uint64_t seed) {
  if (rank <= 0) throw ConfigError("LoRA rank must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.01);
  int attached = 0;
  for (const std::string& name : target_names) {
    auto it = model.params.find(name);
    if (it == model.params.end()) throw ConfigError("LoRA target '" + name + "' does not exist");
    const MatF& W = it->second;
    if (W.rows() < 2 || W.cols() < 2) throw ConfigError("LoRA target '" + name + "' is not a matrix");
    if (rank > std::min(W.rows(), W.cols())) {
      throw ConfigError("LoRA rank " + std::to_string(rank) + " exceeds the dimensions of '" + name + "'");
    }
    if (model.adapters.count(name) != 0) throw ConfigError("'" + name + "' already carries an adapter");
    LoRAAdapter<float> a{name, MatF(rank, W.cols()), MatF::Zero(W.rows(), rank)};
    for (Eigen::Index i = 0; i < a.A.size(); ++i) a.A.data()[i] = static_cast<float>(dist(rng));
    model.adapters.emplace(name, std::move(a));
    ++attached;
  }
  return attached;
}

Model merge_adapters(const Model& model) {
  if (model.adapters.empty()) throw ConfigError("model has no adapters to merge");
  Model out;
  out.config = model.config;
  out.params = model.params;
  for (const auto& [host, adapter] : model.adapters) {
    auto it = out.params.find(host);
    if (it == out.params.end()) throw ConfigError("adapter host '" + host + "' missing from the model");
    it->second = effective_weight(it->second, adapter);
  }
  return out;
}

bool is_trainable(const std::string& name, TrainScope scope) {
  if (is_buffer(name)) return false;
  if (scope == TrainScope::kFull) return true;
  if (name.find(".lora.") != std::string::npos) return true;
  return is_prompt_encoder_param(name) || is_decoder_param(name);
}

std::int64_t trainable_parameter_count(const Model& model, TrainScope scope) {
  std::int64_t total = 0;
  for (const auto& [name, m] : model.params) {
    if (is_trainable(name, scope)) total += m.size();
  }
  for (const auto& [host, a] : model.adapters) {
    if (is_trainable(lora_a_name(host), scope)) total += a.A.size() + a.B.size();
  }
  return total;
}

}  // namespace sps
