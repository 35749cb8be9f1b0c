#include "sps/optim.hpp"

#include <cmath>
#include <numbers>

namespace sps {

double lr_schedule(long step, long warmup_steps, double base_lr, long total_steps, Schedule kind) {
  if (step < 0) step = 0;
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (kind == Schedule::kConstant) return base_lr;
  if (step >= total_steps) return 0.0;
  const double span = static_cast<double>(total_steps - warmup_steps);
  if (span <= 0) return base_lr;
  const double progress = static_cast<double>(step - warmup_steps) / span;
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamW::step(std::map<std::string, MatF*>& params, const std::map<std::string, MatF>& grads, double lr) {
  const auto b1 = static_cast<float>(options_.beta1);
  const auto b2 = static_cast<float>(options_.beta2);
  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) continue;
    MatF& w = *pit->second;
    State& s = state_[name];
    if (s.t == 0) {
      s.m = MatF::Zero(w.rows(), w.cols());
      s.v = MatF::Zero(w.rows(), w.cols());
    }
    ++s.t;
    s.m = b1 * s.m + (1.0f - b1) * g;
    s.v = b2 * s.v + (1.0f - b2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(s.t));
    const auto step_size = static_cast<float>(lr / bc1);
    const auto inv_bc2 = static_cast<float>(1.0 / bc2);
    const auto eps = static_cast<float>(options_.eps);
    w *= static_cast<float>(1.0 - lr * options_.weight_decay);
    w.array() -= step_size * s.m.array() / ((s.v.array() * inv_bc2).sqrt() + eps);
  }
}

double clip_global_norm(std::map<std::string, MatF>& grads, double max_norm) {
  double sq = 0;
  for (const auto& [name, g] : grads) sq += g.cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto s = static_cast<float>(max_norm / (norm + 1e-12));
    for (auto& [name, g] : grads) g *= s;
  }
  return norm;
}

}  // namespace sps
