#ifndef MVD_LOSSES_HPP_
#define MVD_LOSSES_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mvd/common.hpp"

namespace mvd {

// Empirical class frequencies with a 0.5-count floor for absent classes.
struct ClassPriors {
  Vec q;

  double log_q(int c) const { return std::log(q[c]); }
};

inline ClassPriors class_priors(const std::vector<int64_t>& counts) {
  int64_t total = 0;
  for (int64_t c : counts) total += c;
  if (total <= 0) throw Error("class_priors: all counts are zero");
  Vec floored(counts.size());
  for (size_t i = 0; i < counts.size(); ++i)
    floored[static_cast<Eigen::Index>(i)] = std::max(static_cast<double>(counts[i]), 0.5);
  ClassPriors priors;
  priors.q = floored / floored.sum();
  return priors;
}

enum class LossVariant { FolaAdjusted, FolaLiteral, Ce, Focal, Lace };
enum class DistillMode { SymmetricSoftmax, Literal };

inline const char* loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::FolaAdjusted: return "fola_adjusted";
    case LossVariant::FolaLiteral: return "fola_literal";
    case LossVariant::Ce: return "ce";
    case LossVariant::Focal: return "focal";
    case LossVariant::Lace: return "lace";
  }
  return "?";
}

inline LossVariant loss_variant_from(const std::string& s) {
  if (s == "fola_adjusted") return LossVariant::FolaAdjusted;
  if (s == "fola_literal") return LossVariant::FolaLiteral;
  if (s == "ce") return LossVariant::Ce;
  if (s == "focal") return LossVariant::Focal;
  if (s == "lace") return LossVariant::Lace;
  throw Error("unknown loss variant: " + s);
}

inline const char* distill_mode_name(DistillMode m) {
  return m == DistillMode::SymmetricSoftmax ? "symmetric_softmax" : "literal";
}

inline DistillMode distill_mode_from(const std::string& s) {
  if (s == "symmetric_softmax") return DistillMode::SymmetricSoftmax;
  if (s == "literal") return DistillMode::Literal;
  throw Error("unknown distill mode: " + s);
}

struct LossConfig {
  double gamma = 2.0;
  double tau = 1.0;
  Vec alpha;  // per-class weights; empty means uniform 1
  LossVariant variant = LossVariant::FolaAdjusted;
  DistillMode distill_mode = DistillMode::SymmetricSoftmax;

  double alpha_for(int c) const {
    return alpha.size() == 0 ? 1.0 : alpha[c];
  }
};

struct LossResult {
  double value = 0.0;
  Mat dlogits;  // same shape as the logits the loss was evaluated on
};

namespace detail {

struct EffectiveLoss {
  double gamma;
  double tau;
  bool uniform_alpha;
  bool literal_constant;  // add tau*log(q_t) as a constant instead of shifting
};

inline EffectiveLoss resolve(const LossConfig& cfg) {
  switch (cfg.variant) {
    case LossVariant::Ce:
      return {0.0, 0.0, true, false};
    case LossVariant::Focal:
      return {cfg.gamma, 0.0, false, false};
    case LossVariant::Lace:
      return {0.0, cfg.tau, false, false};
    case LossVariant::FolaLiteral:
      return {cfg.gamma, cfg.tau, false, true};
    case LossVariant::FolaAdjusted:
    default:
      return {cfg.gamma, cfg.tau, false, false};
  }
}

}  // namespace detail

// Focal term on frequency-adjusted probabilities, mean over the batch.
// Default variant shifts logits by tau*log(q_c) before the softmax; the
// literal variant keeps probabilities unadjusted and adds tau*log(q_t) as
// a constant. p_t is clamped at 1e-12 before the log.
inline LossResult fola_loss(const Mat& logits, const std::vector<int>& targets,
                            const ClassPriors& priors, const LossConfig& cfg) {
  const Eigen::Index batch = logits.rows();
  const Eigen::Index classes = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != batch)
    throw Error("fola_loss: target count does not match batch");
  if (priors.q.size() != classes) throw Error("fola_loss: priors size mismatch");

  const auto eff = detail::resolve(cfg);
  const double kClamp = 1e-12;

  Vec log_q = priors.q.array().log();
  LossResult res;
  res.dlogits = Mat::Zero(batch, classes);
  double total = 0.0;

  for (Eigen::Index i = 0; i < batch; ++i) {
    int t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= classes) throw Error("fola_loss: target class out of range");
    Vec z = logits.row(i).transpose();
    if (!eff.literal_constant && eff.tau != 0.0) z += eff.tau * log_q;
    Vec p = softmax(z);

    double pt = p[t];
    double pc = std::max(pt, kClamp);
    double u = 1.0 - pt;
    double a = eff.uniform_alpha ? 1.0 : cfg.alpha_for(t);
    double lp = std::log(pc);

    double focal_pow = eff.gamma == 0.0 ? 1.0 : (u > 0.0 ? std::pow(u, eff.gamma) : 0.0);
    double loss_i = -a * focal_pow * lp;
    if (eff.literal_constant) loss_i += eff.tau * priors.log_q(t);
    total += loss_i;

    // dL/dp_t of the clamped focal term, with the u->0 limit handled.
    double dpow = 0.0;
    if (eff.gamma > 0.0 && u > 0.0) dpow = eff.gamma * std::pow(u, eff.gamma - 1.0) * lp;
    double inv = pt > kClamp ? focal_pow / pt : 0.0;
    double dl_dpt = a * (dpow - inv);

    // Chain through the softmax: dp_t/dz_k = p_t (delta_tk - p_k).
    for (Eigen::Index k = 0; k < classes; ++k) {
      double jac = pt * ((k == t ? 1.0 : 0.0) - p[k]);
      res.dlogits(i, k) = dl_dpt * jac;
    }
  }
  double inv_b = 1.0 / static_cast<double>(batch);
  res.value = total * inv_b;
  res.dlogits *= inv_b;
  return res;
}

// Squared difference between new-model and teacher outputs over the old
// class coordinates, mean over the batch. The default compares softmaxed
// distributions on both sides; the literal mode compares raw new logits
// against the softmaxed teacher.
inline LossResult distillation_loss(const Mat& z_new, const Mat& z_old, DistillMode mode) {
  if (z_new.rows() != z_old.rows() || z_new.cols() != z_old.cols())
    throw Error("distillation_loss: dimension mismatch with teacher outputs");
  const Eigen::Index batch = z_new.rows();
  const Eigen::Index classes = z_new.cols();

  LossResult res;
  res.dlogits = Mat::Zero(batch, classes);
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    Vec teacher = softmax(z_old.row(i).transpose());
    if (mode == DistillMode::SymmetricSoftmax) {
      Vec student = softmax(z_new.row(i).transpose());
      Vec d = student - teacher;
      total += d.squaredNorm();
      double ds = d.dot(student);
      for (Eigen::Index k = 0; k < classes; ++k)
        res.dlogits(i, k) = 2.0 * student[k] * (d[k] - ds);
    } else {
      Vec d = z_new.row(i).transpose() - teacher;
      total += d.squaredNorm();
      res.dlogits.row(i) = 2.0 * d.transpose();
    }
  }
  double inv_b = 1.0 / static_cast<double>(batch);
  res.value = total * inv_b;
  res.dlogits *= inv_b;
  return res;
}

// L_total = distill_weight * L_distillation + L_FOLA. The distillation
// gradient lives on the old-class (leading) coordinates of the logits.
inline LossResult total_loss(const LossResult& fola, const LossResult& distill,
                             double distill_weight) {
  if (distill.dlogits.rows() != fola.dlogits.rows())
    throw Error("total_loss: batch mismatch");
  if (distill.dlogits.cols() > fola.dlogits.cols())
    throw Error("total_loss: distillation wider than logits");
  LossResult res;
  res.value = distill_weight * distill.value + fola.value;
  res.dlogits = fola.dlogits;
  res.dlogits.leftCols(distill.dlogits.cols()) += distill_weight * distill.dlogits;
  return res;
}

}  // namespace mvd

#endif  // MVD_LOSSES_HPP_
