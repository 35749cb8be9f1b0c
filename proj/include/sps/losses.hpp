#pragma once

// Training objective: soft Dice on the final pass, plus a per-pixel Bernoulli
// KL term in which the final pass (teacher, gradient-stopped) supervises the
// promptless pass (student).

#include "sps/autograd.hpp"
#include "sps/types.hpp"

namespace sps {

struct LossConfig {
  double alpha = 0.5;
  double dice_smooth = 1e-6;
  double kl_epsilon = 1e-6;
  /// Extension, off by default: add Dice(y0, target) to the objective.
  bool aux_dice_on_first_pass = false;

  void validate() const;
};

/// 1 - (2 sum(p g) + eps) / (sum p + sum g + eps)
double dice_loss(const MatD& pred_prob, const BinaryMask& target, double smooth);

/// Mean over pixels of KL(Bernoulli(q) || Bernoulli(p)), q = teacher and
/// p = student, both clamped to [clamp, 1 - clamp].
double kl_self_distill(const MatD& student_prob, const MatD& teacher_prob, double clamp);

struct LossBreakdown {
  double dice_term = 0;
  double kl_term = 0;
  double aux_dice_term = 0;
  double alpha = 0;
  double total = 0;
};

/// dice_loss(y1, target) + alpha * kl_self_distill(y0, y1).
LossBreakdown total_loss(const MaskPrediction& y0, const MaskPrediction& y1, const BinaryMask& target,
                         const LossConfig& cfg);

// ---- graph versions --------------------------------------------------------

/// `prob` and `target` are (H*W) x 1 columns.
template <class T>
ad::Var dice_loss(ad::Graph<T>& g, ad::Var prob, const Mat<T>& target, T smooth);

/// The teacher is read through stop_gradient; it never receives gradient.
template <class T>
ad::Var bernoulli_kl(ad::Graph<T>& g, ad::Var student, ad::Var teacher, T clamp);

template <class T>
struct LossVars {
  ad::Var total;
  ad::Var dice;
  ad::Var kl;       // invalid when alpha == 0 and no kl was requested
  ad::Var teacher;  // the detached teacher node
  ad::Var aux_dice;
};

/// Builds the combined objective inside a graph. When `student` is invalid
/// the objective is the Dice term alone.
template <class T>
LossVars<T> total_loss(ad::Graph<T>& g, ad::Var student, ad::Var final_pass, const Mat<T>& target,
                       const LossConfig& cfg);

/// (H x W) mask as an (H*W) x 1 column of 0/1.
template <class T>
Mat<T> mask_column(const BinaryMask& mask);

}  // namespace sps
