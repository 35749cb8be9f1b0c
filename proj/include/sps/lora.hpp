#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sps/error.hpp"
#include "sps/model.hpp"

namespace sps {

/// Attaches a rank-`rank` adapter to each named host matrix. A is drawn from
/// N(0, 0.01^2) and B starts at zero, so the adapted model initially equals
/// the base model. Returns the number of adapters attached.
int attach_adapters(Model& model, const std::vector<std::string>& target_names, int rank, std::uint64_t seed);

/// W + B A.
template <class T>
Mat<T> effective_weight(const Mat<T>& W, const LoRAAdapter<T>& adapter) {
  if (adapter.A.cols() != W.cols() || adapter.B.rows() != W.rows() || adapter.A.rows() != adapter.B.cols()) {
    throw ConfigError("adapter for '" + adapter.host_name + "' is not conformable with its host");
  }
  Mat<T> out = W;
  if (!adapter.B.isZero(0)) out.noalias() += adapter.B * adapter.A;
  return out;
}

/// Folds every adapter into its host weight and removes the adapters.
/// Throws ConfigError when the model carries no adapters.
Model merge_adapters(const Model& model);

/// Which parameters a training run updates.
enum class TrainScope {
  kFull,     // every weight except fixed buffers
  kAdapted,  // LoRA factors + prompt encoder + mask decoder
};

bool is_trainable(const std::string& name, TrainScope scope);

/// Number of scalar parameters (weights and attached adapter factors) the
/// given scope trains.
std::int64_t trainable_parameter_count(const Model& model, TrainScope scope);

}  // namespace sps
