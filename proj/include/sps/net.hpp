#pragma once

#include <functional>
#include <map>
#include <string>

#include "sps/autograd.hpp"
#include "sps/model.hpp"

namespace sps {

/// Builds the model's forward computation inside an autodiff graph.
///
/// Each parameter enters the graph once, on first use, so a weight shared by
/// several decoder passes accumulates one gradient. `trainable` decides which
/// parameters (and adapter factors, named "<host>.lora.A/B") require grad;
/// without it nothing does and the graph records no backward closures.
template <class T>
class Net {
 public:
  using Trainable = std::function<bool(const std::string&)>;

  Net(ad::Graph<T>& graph, const BasicModel<T>& model, Trainable trainable = {});

  ad::Graph<T>& graph() { return graph_; }
  const ModelConfig& config() const { return model_.config; }

  ad::Var param(const std::string& name);

  /// (G*G) x D image embedding.
  ad::Var encode(const Image& image);
  /// Sparse prompt tokens, (tokens x D).
  ad::Var prompt_tokens(const PromptSpec& prompt);
  /// (H*W) x 1 mask logits, row-major over pixels.
  ad::Var decode(ad::Var embedding, ad::Var tokens);

  /// Every parameter that entered the graph, by canonical name.
  const std::map<std::string, ad::Var>& bound() const { return bound_; }

 private:
  ad::Var linear(const std::string& prefix, ad::Var x);
  ad::Var norm(const std::string& prefix, ad::Var x);
  ad::Var mlp(const std::string& prefix, ad::Var x);
  ad::Var attention(const std::string& prefix, ad::Var q, ad::Var k, ad::Var v);
  ad::Var grid_pe();

  ad::Graph<T>& graph_;
  const BasicModel<T>& model_;
  Trainable trainable_;
  std::map<std::string, ad::Var> bound_;
  ad::Var grid_pe_;
};

extern template class Net<float>;
extern template class Net<double>;

}  // namespace sps
