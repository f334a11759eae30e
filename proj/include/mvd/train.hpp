#ifndef MVD_TRAIN_HPP_
#define MVD_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "mvd/checkpoint.hpp"
#include "mvd/corpus.hpp"
#include "mvd/eval.hpp"
#include "mvd/losses.hpp"
#include "mvd/model.hpp"
#include "mvd/tokenizer.hpp"

namespace mvd {

struct TrainConfig {
  double initial_lr = 3e-4;  // random-init desk default; use 2e-5 with imported weights
  double min_lr = 0.0;
  int epochs = 20;
  int batch_size = 32;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double grad_clip = 1.0;  // global norm; 0 disables
  uint64_t seed = 0;
  LossConfig loss;
  bool freeze_encoder = false;
  bool binary_mode = false;

  void validate() const {
    if (epochs < 1) throw Error("train config: epochs must be >= 1");
    if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
    if (!(min_lr >= 0 && min_lr <= initial_lr))
      throw Error("train config: need 0 <= min_lr <= initial_lr");
  }
};

// lr_min + 0.5 (lr0 - lr_min)(1 + cos(pi * step / total)).
inline double cosine_lr(int64_t step, int64_t total_steps, double lr0, double lr_min) {
  if (total_steps < 1) throw Error("cosine_lr: total_steps must be >= 1");
  if (step < 0 || step > total_steps) throw Error("cosine_lr: step out of range");
  double phase = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(M_PI * phase));
}

struct OptimizerState {
  std::vector<std::vector<double>> m;  // aligned with array_refs order
  std::vector<std::vector<double>> v;
  int64_t step = 0;

  static OptimizerState like(ModelParams& params) {
    OptimizerState s;
    for (auto& ref : array_refs(params)) {
      s.m.emplace_back(static_cast<size_t>(ref.size()), 0.0);
      s.v.emplace_back(static_cast<size_t>(ref.size()), 0.0);
    }
    return s;
  }
};

inline bool is_head_array(const std::string& name) {
  return name == "head_w" || name == "head_b";
}

// Decoupled weight decay update:
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
// A non-finite gradient anywhere aborts the step before any mutation.
inline void adamw_step(ModelParams& params, ModelParams& grads, OptimizerState& state,
                       double lr, const TrainConfig& cfg, bool head_only = false) {
  auto prefs = array_refs(params);
  auto grefs = array_refs(grads);
  if (prefs.size() != grefs.size() || prefs.size() != state.m.size())
    throw Error("adamw_step: state/parameter mismatch");

  for (size_t a = 0; a < grefs.size(); ++a) {
    for (Eigen::Index i = 0; i < grefs[a].size(); ++i) {
      if (!std::isfinite(grefs[a].data[i])) throw Error("non-finite gradient");
    }
  }

  state.step += 1;
  double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));

  for (size_t a = 0; a < prefs.size(); ++a) {
    if (head_only && !is_head_array(prefs[a].name)) continue;
    double* theta = prefs[a].data;
    const double* g = grefs[a].data;
    auto& m = state.m[a];
    auto& v = state.v[a];
    for (Eigen::Index i = 0; i < prefs[a].size(); ++i) {
      m[static_cast<size_t>(i)] =
          cfg.adam_beta1 * m[static_cast<size_t>(i)] + (1.0 - cfg.adam_beta1) * g[i];
      v[static_cast<size_t>(i)] =
          cfg.adam_beta2 * v[static_cast<size_t>(i)] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      double m_hat = m[static_cast<size_t>(i)] / bc1;
      double v_hat = v[static_cast<size_t>(i)] / bc2;
      theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon) +
                        cfg.weight_decay * theta[i]);
    }
  }
}

// Scales gradients in place so their global norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_global_norm(ModelParams& grads, double max_norm, bool head_only = false) {
  double sq = 0.0;
  auto refs = array_refs(grads);
  for (auto& ref : refs) {
    if (head_only && !is_head_array(ref.name)) continue;
    for (Eigen::Index i = 0; i < ref.size(); ++i) sq += ref.data[i] * ref.data[i];
  }
  double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    double scale = max_norm / norm;
    for (auto& ref : refs) {
      if (head_only && !is_head_array(ref.name)) continue;
      for (Eigen::Index i = 0; i < ref.size(); ++i) ref.data[i] *= scale;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Dataset plumbing shared by training and extension
// ---------------------------------------------------------------------------

// Ordered class names: index 0 is "clean", then one class per language
// (sorted), or the single aggregate class in binary mode.
inline std::vector<std::string> build_roster(const std::vector<CodeFunction>& records,
                                             bool binary_mode) {
  std::vector<std::string> roster = {"clean"};
  if (binary_mode) {
    roster.push_back("vulnerable");
    return roster;
  }
  std::set<std::string> langs;
  for (const auto& r : records) langs.insert(r.language);
  roster.insert(roster.end(), langs.begin(), langs.end());
  return roster;
}

inline int target_class(const CodeFunction& r, const std::vector<std::string>& roster,
                        bool binary_mode) {
  if (!r.vulnerable) return 0;
  if (binary_mode) return 1;
  for (size_t i = 1; i < roster.size(); ++i) {
    if (roster[i] == r.language) return static_cast<int>(i);
  }
  throw Error("record language '" + r.language + "' not in roster");
}

inline std::vector<int64_t> class_counts(const std::vector<CodeFunction>& records,
                                         const std::vector<std::string>& roster,
                                         bool binary_mode) {
  std::vector<int64_t> counts(roster.size(), 0);
  for (const auto& r : records)
    counts[static_cast<size_t>(target_class(r, roster, binary_mode))] += 1;
  return counts;
}

inline std::vector<TokenSequence> encode_records(const std::vector<CodeFunction>& records,
                                                 const Vocab& vocab, int max_len) {
  std::vector<TokenSequence> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(encode(r.source, vocab, max_len));
  return out;
}

// Binary collapse scores of a record set under the given parameters.
inline std::vector<double> vulnerability_scores(const ModelParams& params,
                                                const std::vector<TokenSequence>& seqs,
                                                int batch_size) {
  std::vector<double> scores;
  scores.reserve(seqs.size());
  size_t pos = 0;
  while (pos < seqs.size()) {
    size_t take = std::min(seqs.size() - pos, static_cast<size_t>(batch_size));
    std::vector<TokenSequence> batch(seqs.begin() + static_cast<long>(pos),
                                     seqs.begin() + static_cast<long>(pos + take));
    Mat logits = forward(params, batch, false);
    for (size_t k = 0; k < take; ++k) {
      Vec probs = softmax(logits.row(static_cast<Eigen::Index>(k)).transpose());
      scores.push_back(
          collapse_binary(probs, static_cast<size_t>(params.config.num_classes)).p_vuln);
    }
    pos += take;
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_pr_auc = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

namespace detail {

// Extra per-batch loss contribution (the extension run adds distillation);
// receives student logits and the record indices of the batch, returns a
// loss whose gradient spans the full logits width.
using AuxLossFn =
    std::function<LossResult(const Mat& logits, const std::vector<size_t>& indices)>;

inline TrainResult train_loop(const ModelParams& init, const DatasetSplit& split,
                              const TrainConfig& cfg, const ClassPriors& priors,
                              const Vocab& vocab, const std::vector<std::string>& roster,
                              const AuxLossFn& aux) {
  cfg.validate();
  if (split.train.empty()) throw Error("train: empty train partition");
  if (split.validation.empty()) throw Error("train: empty validation partition");
  if (static_cast<int>(roster.size()) != init.config.num_classes)
    throw Error("train: roster does not match model head");
  if (priors.q.size() != init.config.num_classes)
    throw Error("train: priors do not match model head");

  const int max_len = init.config.max_len;
  std::vector<TokenSequence> train_seqs = encode_records(split.train, vocab, max_len);
  std::vector<TokenSequence> val_seqs = encode_records(split.validation, vocab, max_len);
  std::vector<int> train_targets, val_labels;
  for (const auto& r : split.train)
    train_targets.push_back(target_class(r, roster, cfg.binary_mode));
  for (const auto& r : split.validation) val_labels.push_back(r.vulnerable ? 1 : 0);

  ModelParams params = init;
  OptimizerState opt = OptimizerState::like(params);
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));

  const size_t n_train = split.train.size();
  const int64_t steps_per_epoch =
      static_cast<int64_t>((n_train + cfg.batch_size - 1) / cfg.batch_size);
  const int64_t total_steps = steps_per_epoch * cfg.epochs;

  TrainResult result;
  ModelParams best_params = params;
  double best_val = -1.0;
  int64_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order(n_train);
    for (size_t i = 0; i < n_train; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle:" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    double last_lr = cfg.initial_lr;
    size_t pos = 0;
    while (pos < n_train) {
      size_t take = std::min(n_train - pos, static_cast<size_t>(cfg.batch_size));
      std::vector<TokenSequence> batch;
      std::vector<int> targets;
      std::vector<size_t> indices;
      batch.reserve(take);
      for (size_t k = 0; k < take; ++k) {
        size_t idx = order[pos + k];
        batch.push_back(train_seqs[idx]);
        targets.push_back(train_targets[idx]);
        indices.push_back(idx);
      }
      pos += take;

      ForwardCache cache;
      Mat logits = forward(params, batch, true, &dropout_rng, &cache);
      LossResult loss = fola_loss(logits, targets, priors, cfg.loss);
      if (aux) {
        LossResult extra = aux(logits, indices);
        loss.value += extra.value;
        loss.dlogits += extra.dlogits;
      }
      loss_sum += loss.value * static_cast<double>(take);

      ModelParams grads = backward(params, cache, loss.dlogits);
      clip_global_norm(grads, cfg.grad_clip, cfg.freeze_encoder);
      double lr = cosine_lr(step, total_steps, cfg.initial_lr, cfg.min_lr);
      adamw_step(params, grads, opt, lr, cfg, cfg.freeze_encoder);
      last_lr = lr;
      ++step;
    }

    std::vector<double> val_scores =
        vulnerability_scores(params, val_seqs, cfg.batch_size);
    double val_ap = pr_auc(val_scores, val_labels);

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(n_train);
    log.val_pr_auc = val_ap;
    log.lr = last_lr;
    result.log.push_back(log);

    if (val_ap > best_val) {
      best_val = val_ap;
      best_params = params;
      result.best_epoch = epoch;
    }
  }

  Checkpoint ckpt;
  ckpt.params = best_params;
  ckpt.vocab = vocab;
  ckpt.roster = roster;
  ckpt.class_counts = class_counts(split.train, roster, cfg.binary_mode);
  ckpt.metadata["best_epoch"] = std::to_string(result.best_epoch);
  ckpt.metadata["val_pr_auc"] = std::to_string(best_val);
  ckpt.metadata["loss_variant"] = loss_variant_name(cfg.loss.variant);
  ckpt.metadata["binary_mode"] = cfg.binary_mode ? "1" : "0";
  ckpt.metadata["freeze_encoder"] = cfg.freeze_encoder ? "1" : "0";
  result.checkpoint = std::move(ckpt);
  return result;
}

}  // namespace detail

// Supervised fine-tuning with per-epoch validation; the returned
// checkpoint holds the epoch with the highest validation PR-AUC (ties
// resolve to the earlier epoch).
inline TrainResult train(const ModelParams& init, const DatasetSplit& split,
                         const TrainConfig& cfg, const ClassPriors& priors,
                         const Vocab& vocab, const std::vector<std::string>& roster) {
  return detail::train_loop(init, split, cfg, priors, vocab, roster, nullptr);
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

// Central-difference check of backward() through an arbitrary scalar loss
// of the logits. Samples up to `samples_per_array` coordinates per array.
inline double grad_check(const ModelParams& params,
                         const std::vector<TokenSequence>& batch,
                         const std::function<LossResult(const Mat&)>& loss_fn,
                         double epsilon, int samples_per_array = 200,
                         uint64_t seed = 1234) {
  ModelParams work = params;
  ForwardCache cache;
  Mat logits = forward(work, batch, false, nullptr, &cache);
  LossResult loss = loss_fn(logits);
  ModelParams analytic = backward(work, cache, loss.dlogits);

  auto loss_value = [&]() {
    Mat l = forward(work, batch, false);
    return loss_fn(l).value;
  };

  Rng pick(seed);
  double worst = 0.0;
  auto refs = array_refs(work);
  auto grefs = array_refs(analytic);
  for (size_t a = 0; a < refs.size(); ++a) {
    Eigen::Index n = refs[a].size();
    Eigen::Index samples = std::min<Eigen::Index>(n, samples_per_array);
    for (Eigen::Index s = 0; s < samples; ++s) {
      Eigen::Index i = samples == n
                           ? s
                           : static_cast<Eigen::Index>(
                                 pick.next_below(static_cast<uint64_t>(n)));
      double saved = refs[a].data[i];
      refs[a].data[i] = saved + epsilon;
      double up = loss_value();
      refs[a].data[i] = saved - epsilon;
      double down = loss_value();
      refs[a].data[i] = saved;
      double fd = (up - down) / (2.0 * epsilon);
      double an = grefs[a].data[i];
      double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace mvd

#endif  // MVD_TRAIN_HPP_
