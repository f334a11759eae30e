#ifndef MVD_INCREMENTAL_HPP_
#define MVD_INCREMENTAL_HPP_

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mvd/checkpoint.hpp"
#include "mvd/eval.hpp"
#include "mvd/losses.hpp"
#include "mvd/train.hpp"

namespace mvd {

// Frozen pre-extension model used as the distillation teacher.
struct Teacher {
  ModelParams params;
  std::vector<std::string> roster;
};

inline Teacher snapshot_teacher(const Checkpoint& base) {
  base.validate();
  return Teacher{base.params, base.roster};
}

struct ExtensionPlan {
  Checkpoint base;
  std::string base_digest;  // recorded in the extension manifest
  std::string new_language;
  DatasetSplit data;  // new-language records only
  double distill_weight = 1.0;
  TrainConfig train_cfg;

  void validate() const {
    base.validate();
    if (base.binary_mode())
      throw Error("extend: base checkpoint is binary, it has no language classes");
    if (new_language.empty()) throw Error("extend: new language name is empty");
    for (const auto& r : base.roster) {
      if (r == new_language)
        throw Error("extend: language '" + new_language + "' already in roster");
    }
    bool has_vul = false, has_clean = false;
    auto check = [&](const std::vector<CodeFunction>& part, const char* which) {
      for (const auto& rec : part) {
        if (rec.language != new_language)
          throw Error(std::string("extend: ") + which + " contains a record of '" +
                      rec.language + "', expected only '" + new_language + "'");
        (rec.vulnerable ? has_vul : has_clean) = true;
      }
    };
    check(data.train, "train split");
    check(data.validation, "validation split");
    check(data.test, "test split");
    if (!has_vul || !has_clean)
      throw Error("extend: new-language data must contain both labels");
  }
};

struct ExtensionResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  size_t train_records = 0;
};

// Extends a trained checkpoint to one new language without old-language
// data: freezes the teacher, grows the head by one class, and minimizes
// distill_weight * L_distillation + L_FOLA on new-language records only.
// Every batch is asserted to contain nothing but new-language records.
inline ExtensionResult extend(const ExtensionPlan& plan) {
  plan.validate();
  Teacher teacher = snapshot_teacher(plan.base);

  ModelParams student = expand_head(plan.base.params, plan.base.params.config.num_classes + 1);
  std::vector<std::string> roster = plan.base.roster;
  roster.push_back(plan.new_language);

  // Priors: counts carried from the base checkpoint plus the new data;
  // new-language clean functions share class 0.
  std::vector<int64_t> counts = plan.base.class_counts;
  counts.push_back(0);
  for (const auto& r : plan.data.train) {
    if (r.vulnerable) counts.back() += 1;
    else counts[0] += 1;
  }
  ClassPriors priors = class_priors(counts);

  const int old_classes = plan.base.params.config.num_classes;
  const int max_len = student.config.max_len;

  // The teacher is frozen, so its logits per training record are fixed;
  // compute them once in eval mode.
  std::vector<TokenSequence> train_seqs =
      encode_records(plan.data.train, plan.base.vocab, max_len);
  Mat teacher_logits(static_cast<Eigen::Index>(train_seqs.size()), old_classes);
  {
    size_t pos = 0;
    const size_t bs = static_cast<size_t>(std::max(plan.train_cfg.batch_size, 1));
    while (pos < train_seqs.size()) {
      size_t take = std::min(train_seqs.size() - pos, bs);
      std::vector<TokenSequence> batch(train_seqs.begin() + static_cast<long>(pos),
                                       train_seqs.begin() + static_cast<long>(pos + take));
      Mat l = forward(teacher.params, batch, false);
      teacher_logits.middleRows(static_cast<Eigen::Index>(pos),
                                static_cast<Eigen::Index>(take)) = l;
      pos += take;
    }
  }

  const DistillMode mode = plan.train_cfg.loss.distill_mode;
  const double weight = plan.distill_weight;
  detail::AuxLossFn aux = [&](const Mat& logits,
                              const std::vector<size_t>& indices) -> LossResult {
    for (size_t idx : indices) {
      if (plan.data.train[idx].language != plan.new_language)
        throw Error("extend: old-language record reached a training batch");
    }
    Mat z_old(static_cast<Eigen::Index>(indices.size()), old_classes);
    for (size_t k = 0; k < indices.size(); ++k)
      z_old.row(static_cast<Eigen::Index>(k)) =
          teacher_logits.row(static_cast<Eigen::Index>(indices[k]));
    LossResult distill = distillation_loss(logits.leftCols(old_classes), z_old, mode);
    LossResult embedded;
    embedded.value = weight * distill.value;
    embedded.dlogits = Mat::Zero(logits.rows(), logits.cols());
    embedded.dlogits.leftCols(old_classes) = weight * distill.dlogits;
    return embedded;
  };

  TrainResult tr = detail::train_loop(student, plan.data, plan.train_cfg, priors,
                                      plan.base.vocab, roster, aux);

  ExtensionResult result;
  result.checkpoint = std::move(tr.checkpoint);
  result.log = std::move(tr.log);
  result.best_epoch = tr.best_epoch;
  result.train_records = plan.data.train.size();

  result.checkpoint.class_counts = counts;
  auto& meta = result.checkpoint.metadata;
  meta["extension.base_digest"] = plan.base_digest;
  meta["extension.new_language"] = plan.new_language;
  meta["extension.distill_weight"] = std::to_string(plan.distill_weight);
  meta["extension.distill_mode"] = distill_mode_name(mode);
  meta["extension.train_records"] = std::to_string(plan.data.train.size());
  meta["extension.data_languages"] = plan.new_language;
  return result;
}

// ---------------------------------------------------------------------------
// Forgetting report
// ---------------------------------------------------------------------------

struct ForgettingRow {
  std::string language;
  double before = 0.0;
  double after = 0.0;
  double delta = 0.0;     // after - before
  double relative = 0.0;  // delta / before
};

// Per-language PR-AUC deltas between the pre- and post-extension reports.
// Languages must match (the new language, present only in `after`, is
// skipped here and reported separately).
inline std::vector<ForgettingRow> forgetting_report(const MetricsReport& before,
                                                    const MetricsReport& after) {
  std::vector<ForgettingRow> rows;
  for (const auto& b : before.rows) {
    const LanguageMetrics* a = nullptr;
    for (const auto& row : after.rows) {
      if (row.language == b.language) a = &row;
    }
    if (!a) throw Error("forgetting_report: language '" + b.language +
                        "' missing from the post-extension report");
    ForgettingRow r;
    r.language = b.language;
    r.before = b.pr_auc;
    r.after = a->pr_auc;
    r.delta = r.after - r.before;
    r.relative = r.before != 0.0 ? r.delta / r.before : 0.0;
    rows.push_back(r);
  }
  return rows;
}

// Two-row PR-AUC table in the w/o-X / inc-X layout.
inline std::string render_forgetting(const std::string& new_language,
                                     const MetricsReport& before,
                                     const MetricsReport& after) {
  std::vector<std::string> langs;
  for (const auto& r : after.rows) langs.push_back(r.language);
  std::sort(langs.begin(), langs.end());

  auto find = [](const MetricsReport& rep, const std::string& lang) -> double {
    for (const auto& r : rep.rows)
      if (r.language == lang) return r.pr_auc;
    return std::numeric_limits<double>::quiet_NaN();
  };

  size_t w = 12;
  for (const auto& l : langs) w = std::max(w, l.size() + 2);
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(new_language.size()) + 8) << "Model";
  for (const auto& l : langs) out << std::left << std::setw(static_cast<int>(w)) << l;
  out << '\n';
  out << std::left << std::setw(static_cast<int>(new_language.size()) + 8)
      << ("w/o-" + new_language);
  for (const auto& l : langs)
    out << std::left << std::setw(static_cast<int>(w)) << format_metric(find(before, l));
  out << '\n';
  out << std::left << std::setw(static_cast<int>(new_language.size()) + 8)
      << ("inc-" + new_language);
  for (const auto& l : langs)
    out << std::left << std::setw(static_cast<int>(w)) << format_metric(find(after, l));
  out << '\n';
  return out.str();
}

}  // namespace mvd

#endif  // MVD_INCREMENTAL_HPP_
