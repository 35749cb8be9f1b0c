#pragma once

#include <map>
#include <string>

#include "sps/types.hpp"

namespace sps {

enum class Schedule { kCosine, kConstant };

/// Linear warmup from 0 to base_lr over `warmup_steps`, then cosine decay to
/// 0 at `total_steps` (or flat base_lr for kConstant).
double lr_schedule(long step, long warmup_steps, double base_lr, long total_steps, Schedule kind = Schedule::kCosine);

/// Decoupled-weight-decay Adam over named float tensors.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  explicit AdamW(Options options) : options_(options) {}

  /// Applies one update to every tensor that has a gradient. Step counts are
  /// tracked per tensor.
  void step(std::map<std::string, MatF*>& params, const std::map<std::string, MatF>& grads, double lr);

 private:
  struct State {
    MatF m;
    MatF v;
    long t = 0;
  };
  Options options_;
  std::map<std::string, State> state_;
};

/// Scales every gradient so their joint L2 norm is at most max_norm; returns
/// the norm before clipping.
double clip_global_norm(std::map<std::string, MatF>& grads, double max_norm);

}  // namespace sps
