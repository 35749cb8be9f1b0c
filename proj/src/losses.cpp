#include "sps/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "sps/error.hpp"

namespace sps {

void LossConfig::validate() const {
  if (!(alpha >= 0)) throw ConfigError("alpha must be >= 0");
  if (!(dice_smooth > 0)) throw ConfigError("dice_smooth must be > 0");
  if (!(kl_epsilon > 0 && kl_epsilon < 0.5)) throw ConfigError("kl_epsilon must lie in (0, 0.5)");
}

namespace {

template <class T>
T dice_value(const T* p, const T* g, Eigen::Index n, T smooth, T* sum_pg, T* sum_p, T* sum_g) {
  T pg = 0, ps = 0, gs = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    pg += p[i] * g[i];
    ps += p[i];
    gs += g[i];
  }
  *sum_pg = pg;
  *sum_p = ps;
  *sum_g = gs;
  return T(1) - (T(2) * pg + smooth) / (ps + gs + smooth);
}

template <class T>
T clamp_prob(T v, T eps) {
  return std::clamp(v, eps, T(1) - eps);
}

template <class T>
T kl_value(const T* p, const T* q, Eigen::Index n, T eps) {
  T total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const T pc = clamp_prob(p[i], eps);
    const T qc = clamp_prob(q[i], eps);
    total += qc * std::log(qc / pc) + (T(1) - qc) * std::log((T(1) - qc) / (T(1) - pc));
  }
  return total / static_cast<T>(n);
}

}  // namespace

double dice_loss(const MatD& pred_prob, const BinaryMask& target, double smooth) {
  if (pred_prob.rows() != target.rows() || pred_prob.cols() != target.cols()) {
    throw InputError("dice_loss: prediction and target shapes differ");
  }
  const MatD g = target.cast<double>();
  double pg, ps, gs;
  return dice_value(pred_prob.data(), g.data(), pred_prob.size(), smooth, &pg, &ps, &gs);
}

double kl_self_distill(const MatD& student_prob, const MatD& teacher_prob, double clamp) {
  if (student_prob.rows() != teacher_prob.rows() || student_prob.cols() != teacher_prob.cols()) {
    throw InputError("kl_self_distill: student and teacher shapes differ");
  }
  if (student_prob.size() == 0) throw InputError("kl_self_distill: empty input");
  return kl_value(student_prob.data(), teacher_prob.data(), student_prob.size(), clamp);
}

LossBreakdown total_loss(const MaskPrediction& y0, const MaskPrediction& y1, const BinaryMask& target,
                         const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown out;
  out.alpha = cfg.alpha;
  const MatD p0 = y0.prob.cast<double>();
  const MatD p1 = y1.prob.cast<double>();
  out.dice_term = dice_loss(p1, target, cfg.dice_smooth);
  out.kl_term = kl_self_distill(p0, p1, cfg.kl_epsilon);
  if (cfg.aux_dice_on_first_pass) out.aux_dice_term = dice_loss(p0, target, cfg.dice_smooth);
  out.total = out.dice_term + cfg.alpha * out.kl_term + out.aux_dice_term;
  return out;
}

template <class T>
Mat<T> mask_column(const BinaryMask& mask) {
  Mat<T> out(mask.size(), 1);
  for (Eigen::Index i = 0; i < mask.size(); ++i) out(i, 0) = mask.data()[i] ? T(1) : T(0);
  return out;
}

template <class T>
ad::Var dice_loss(ad::Graph<T>& g, ad::Var prob, const Mat<T>& target, T smooth) {
  const Mat<T>& p = g.value(prob);
  if (p.rows() != target.rows() || p.cols() != target.cols()) {
    throw InputError("dice_loss: prediction and target shapes differ");
  }
  T pg, ps, gs;
  Mat<T> out(1, 1);
  out(0, 0) = dice_value(p.data(), target.data(), p.size(), smooth, &pg, &ps, &gs);
  return g.record(std::move(out), g.requires_grad(prob),
                  [prob, target, smooth, pg, ps, gs](ad::Graph<T>& gr, const Mat<T>& dy) {
                    // d/dp_i of 1 - (2I + e)/(S + e), S = sum p + sum g
                    const T den = ps + gs + smooth;
                    const T num = T(2) * pg + smooth;
                    Mat<T> d = ((target.array() * T(2) * den - num) * (-dy(0, 0) / (den * den))).matrix();
                    gr.accumulate(prob, d);
                  });
}

template <class T>
ad::Var bernoulli_kl(ad::Graph<T>& g, ad::Var student, ad::Var teacher, T clamp) {
  const ad::Var q = g.requires_grad(teacher) ? g.stop_gradient(teacher) : teacher;
  const Mat<T>& p = g.value(student);
  const Mat<T>& qv = g.value(q);
  if (p.rows() != qv.rows() || p.cols() != qv.cols()) {
    throw InputError("kl_self_distill: student and teacher shapes differ");
  }
  Mat<T> out(1, 1);
  out(0, 0) = kl_value(p.data(), qv.data(), p.size(), clamp);
  return g.record(std::move(out), g.requires_grad(student), [student, q, clamp](ad::Graph<T>& gr, const Mat<T>& dy) {
    const Mat<T>& p = gr.value(student);
    const Mat<T>& qv = gr.value(q);
    const T scale = dy(0, 0) / static_cast<T>(p.size());
    Mat<T> d(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const T pi = p.data()[i];
      if (pi < clamp || pi > T(1) - clamp) {
        d.data()[i] = 0;
        continue;
      }
      const T qi = clamp_prob(qv.data()[i], clamp);
      d.data()[i] = scale * (-qi / pi + (T(1) - qi) / (T(1) - pi));
    }
    gr.accumulate(student, d);
  });
}

template <class T>
LossVars<T> total_loss(ad::Graph<T>& g, ad::Var student, ad::Var final_pass, const Mat<T>& target,
                       const LossConfig& cfg) {
  cfg.validate();
  LossVars<T> out;
  out.dice = dice_loss(g, final_pass, target, static_cast<T>(cfg.dice_smooth));
  std::vector<ad::Var> terms{out.dice};
  std::vector<T> weights{T(1)};
  if (student.valid()) {
    out.teacher = g.stop_gradient(final_pass);
    out.kl = bernoulli_kl(g, student, out.teacher, static_cast<T>(cfg.kl_epsilon));
    terms.push_back(out.kl);
    weights.push_back(static_cast<T>(cfg.alpha));
    if (cfg.aux_dice_on_first_pass) {
      out.aux_dice = dice_loss(g, student, target, static_cast<T>(cfg.dice_smooth));
      terms.push_back(out.aux_dice);
      weights.push_back(T(1));
    }
  }
  out.total = g.weighted_sum(terms, weights);
  return out;
}

template MatF mask_column<float>(const BinaryMask&);
template MatD mask_column<double>(const BinaryMask&);
template ad::Var dice_loss<float>(ad::Graph<float>&, ad::Var, const MatF&, float);
template ad::Var dice_loss<double>(ad::Graph<double>&, ad::Var, const MatD&, double);
template ad::Var bernoulli_kl<float>(ad::Graph<float>&, ad::Var, ad::Var, float);
template ad::Var bernoulli_kl<double>(ad::Graph<double>&, ad::Var, ad::Var, double);
template LossVars<float> total_loss<float>(ad::Graph<float>&, ad::Var, ad::Var, const MatF&, const LossConfig&);
template LossVars<double> total_loss<double>(ad::Graph<double>&, ad::Var, ad::Var, const MatD&, const LossConfig&);

}  // namespace sps
