#ifndef MVD_EVAL_HPP_
#define MVD_EVAL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvd/checkpoint.hpp"
#include "mvd/corpus.hpp"
#include "mvd/losses.hpp"
#include "mvd/model.hpp"

namespace mvd {

struct BinaryScore {
  double p_clean = 0.0;
  double p_vuln = 0.0;
  bool predicted_vulnerable = false;
};

// Sums the non-clean class probabilities into one vulnerability score.
// The decision boundary is inclusive: p_vuln >= 0.5 predicts vulnerable.
inline BinaryScore collapse_binary(const Vec& probs, size_t roster_size) {
  if (static_cast<size_t>(probs.size()) != roster_size)
    throw Error("collapse_binary: roster/vector length mismatch");
  BinaryScore s;
  s.p_clean = probs[0];
  for (Eigen::Index c = 1; c < probs.size(); ++c) s.p_vuln += probs[c];
  s.predicted_vulnerable = s.p_vuln >= 0.5;
  return s;
}

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Average precision over the tie-grouped precision-recall curve: all
// examples sharing a score enter at one threshold, so the value is
// invariant to input permutation. Sum over positive-triggering
// thresholds of (R_k - R_{k-1}) * P_k.
inline double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels,
                     std::vector<PrPoint>* curve = nullptr) {
  if (scores.size() != labels.size()) throw Error("pr_auc: size mismatch");
  int64_t npos = 0;
  for (int l : labels) npos += l ? 1 : 0;
  if (npos == 0) throw Error("undefined PR-AUC");

  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  double prev_recall = 0.0;
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    int64_t group_tp = 0, group_fp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) ++group_tp;
      else ++group_fp;
      ++j;
    }
    tp += group_tp;
    fp += group_fp;
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    double recall = static_cast<double>(tp) / static_cast<double>(npos);
    if (curve)
      curve->push_back({scores[order[i]], precision, recall});
    if (group_tp > 0) {
      ap += (recall - prev_recall) * precision;
      prev_recall = recall;
    }
    i = j;
  }
  return ap;
}

struct ConfusionMetrics {
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0, mcc = 0.0;
};

// Standard formulas with zero-denominator conventions: precision, recall
// and F1 fall back to 0; MCC is 0 when any marginal is zero.
inline ConfusionMetrics confusion_metrics(const std::vector<int>& preds,
                                          const std::vector<int>& labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw Error("confusion_metrics: bad input sizes");
  ConfusionMetrics m;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] && labels[i]) ++m.tp;
    else if (preds[i] && !labels[i]) ++m.fp;
    else if (!preds[i] && labels[i]) ++m.fn;
    else ++m.tn;
  }
  m.precision = (m.tp + m.fp) > 0 ? double(m.tp) / double(m.tp + m.fp) : 0.0;
  m.recall = (m.tp + m.fn) > 0 ? double(m.tp) / double(m.tp + m.fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  double d1 = double(m.tp + m.fp), d2 = double(m.tp + m.fn);
  double d3 = double(m.tn + m.fp), d4 = double(m.tn + m.fn);
  if (d1 == 0 || d2 == 0 || d3 == 0 || d4 == 0) {
    m.mcc = 0.0;
  } else {
    m.mcc = (double(m.tp) * double(m.tn) - double(m.fp) * double(m.fn)) /
            std::sqrt(d1 * d2 * d3 * d4);
  }
  return m;
}

struct LanguageMetrics {
  std::string language;
  bool absent = false;
  double pr_auc = std::numeric_limits<double>::quiet_NaN();
  double f1 = 0.0, precision = 0.0, recall = 0.0, mcc = 0.0;
  int64_t support_vulnerable = 0, support_clean = 0;
  std::vector<PrPoint> curve;
};

struct MetricsReport {
  std::vector<LanguageMetrics> rows;  // one per language, sorted by name
  LanguageMetrics average;            // arithmetic mean over present rows
};

inline MetricsReport make_report(std::vector<LanguageMetrics> rows) {
  MetricsReport rep;
  std::sort(rows.begin(), rows.end(),
            [](const LanguageMetrics& a, const LanguageMetrics& b) {
              return a.language < b.language;
            });
  rep.rows = std::move(rows);
  rep.average.language = "Average";
  double pr = 0, f1 = 0, prec = 0, rec = 0, mcc = 0;
  int n = 0;
  for (const auto& r : rep.rows) {
    if (r.absent) continue;
    pr += r.pr_auc;
    f1 += r.f1;
    prec += r.precision;
    rec += r.recall;
    mcc += r.mcc;
    rep.average.support_vulnerable += r.support_vulnerable;
    rep.average.support_clean += r.support_clean;
    ++n;
  }
  if (n > 0) {
    rep.average.pr_auc = pr / n;
    rep.average.f1 = f1 / n;
    rep.average.precision = prec / n;
    rep.average.recall = rec / n;
    rep.average.mcc = mcc / n;
  }
  return rep;
}

// Eval-mode inference over a language-grouped test set: forward, softmax,
// binary collapse, thresholded confusion metrics plus threshold-free AP.
inline MetricsReport evaluate(const Checkpoint& ckpt,
                              const std::vector<CodeFunction>& test_set,
                              int batch_size = 64) {
  ckpt.validate();
  if (batch_size < 1) throw Error("evaluate: batch_size must be >= 1");
  const bool binary = ckpt.binary_mode();
  std::set<std::string> roster_langs(ckpt.roster.begin() + 1, ckpt.roster.end());
  for (const auto& r : test_set) {
    if (!binary && !roster_langs.count(r.language))
      throw Error("evaluate: language '" + r.language + "' not in model roster");
  }

  std::map<std::string, std::vector<const CodeFunction*>> groups;
  for (const auto& r : test_set) groups[r.language].push_back(&r);

  std::vector<LanguageMetrics> rows;
  for (const auto& [lang, records] : groups) {
    LanguageMetrics lm;
    lm.language = lang;
    if (records.empty()) {
      lm.absent = true;
      rows.push_back(lm);
      continue;
    }
    std::vector<double> scores;
    std::vector<int> labels, preds;
    size_t pos = 0;
    while (pos < records.size()) {
      size_t take = std::min(records.size() - pos, static_cast<size_t>(batch_size));
      std::vector<TokenSequence> batch;
      for (size_t k = 0; k < take; ++k)
        batch.push_back(
            encode(records[pos + k]->source, ckpt.vocab, ckpt.params.config.max_len));
      Mat logits = forward(ckpt.params, batch, false);
      for (size_t k = 0; k < take; ++k) {
        Vec probs = softmax(logits.row(static_cast<Eigen::Index>(k)).transpose());
        BinaryScore bs = collapse_binary(probs, ckpt.roster.size());
        scores.push_back(bs.p_vuln);
        preds.push_back(bs.predicted_vulnerable ? 1 : 0);
        labels.push_back(records[pos + k]->vulnerable ? 1 : 0);
      }
      pos += take;
    }
    for (int l : labels) {
      if (l) ++lm.support_vulnerable;
      else ++lm.support_clean;
    }
    auto cm = confusion_metrics(preds, labels);
    lm.precision = cm.precision;
    lm.recall = cm.recall;
    lm.f1 = cm.f1;
    lm.mcc = cm.mcc;
    if (lm.support_vulnerable > 0) lm.pr_auc = pr_auc(scores, labels, &lm.curve);
    rows.push_back(lm);
  }
  return make_report(std::move(rows));
}

// Four-decimal fixed rendering. Exact display ties (a fifth decimal of 5)
// round toward zero so that republished table rows keep their original
// printed averages.
inline std::string format_metric(double v) {
  if (std::isnan(v)) return "-";
  bool neg = v < 0;
  double t = std::abs(v) * 1e4;
  long long scaled = static_cast<long long>(std::floor(t + 0.5 - 1e-9));
  std::ostringstream os;
  if (neg && scaled != 0) os << '-';
  os << scaled / 10000 << '.' << std::setw(4) << std::setfill('0') << scaled % 10000;
  return os.str();
}

// Comparison table: one block per language plus an Average block; rows are
// models. The best value per column is marked [1], the runner-up [2];
// equal values share a marker.
inline std::string render_report(
    const std::vector<std::pair<std::string, MetricsReport>>& reports) {
  if (reports.empty()) throw Error("render_report: no reports");

  std::vector<std::string> blocks;
  std::set<std::string> langs;
  for (const auto& [_, rep] : reports)
    for (const auto& row : rep.rows) langs.insert(row.language);
  blocks.assign(langs.begin(), langs.end());
  blocks.push_back("Average");

  size_t name_w = 5;
  for (const auto& [name, _] : reports) name_w = std::max(name_w, name.size());

  auto find_row = [](const MetricsReport& rep,
                     const std::string& block) -> const LanguageMetrics* {
    if (block == "Average") return &rep.average;
    for (const auto& row : rep.rows)
      if (row.language == block) return &row;
    return nullptr;
  };

  std::ostringstream out;
  const char* headers[5] = {"PR-AUC", "F1", "Precision", "Recall", "MCC"};
  for (const auto& block : blocks) {
    out << "== " << block << " ==\n";
    out << std::left << std::setw(static_cast<int>(name_w) + 2) << "Model";
    for (const char* h : headers) out << std::left << std::setw(13) << h;
    out << '\n';

    // Rank raw values per column across the models present in this block.
    std::array<std::vector<double>, 5> col_values;
    for (const auto& [name, rep] : reports) {
      const LanguageMetrics* row = find_row(rep, block);
      if (!row || row->absent) continue;
      double vals[5] = {row->pr_auc, row->f1, row->precision, row->recall, row->mcc};
      for (int c = 0; c < 5; ++c)
        if (!std::isnan(vals[c])) col_values[static_cast<size_t>(c)].push_back(vals[c]);
    }
    std::array<double, 5> top1, top2;
    for (int c = 0; c < 5; ++c) {
      auto& v = col_values[static_cast<size_t>(c)];
      std::sort(v.begin(), v.end(), std::greater<double>());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      top1[static_cast<size_t>(c)] =
          v.empty() ? std::numeric_limits<double>::quiet_NaN() : v[0];
      top2[static_cast<size_t>(c)] =
          v.size() < 2 ? std::numeric_limits<double>::quiet_NaN() : v[1];
    }

    for (const auto& [name, rep] : reports) {
      const LanguageMetrics* row = find_row(rep, block);
      out << std::left << std::setw(static_cast<int>(name_w) + 2) << name;
      if (!row || row->absent) {
        for (int c = 0; c < 5; ++c) out << std::left << std::setw(13) << "-";
        out << '\n';
        continue;
      }
      double vals[5] = {row->pr_auc, row->f1, row->precision, row->recall, row->mcc};
      for (int c = 0; c < 5; ++c) {
        std::string cell = format_metric(vals[c]);
        if (!std::isnan(vals[c])) {
          if (vals[c] == top1[static_cast<size_t>(c)]) cell += "[1]";
          else if (vals[c] == top2[static_cast<size_t>(c)]) cell += "[2]";
        }
        out << std::left << std::setw(13) << cell;
      }
      out << '\n';
    }
    out << '\n';
  }
  return out.str();
}

inline void write_report_csv(
    const std::vector<std::pair<std::string, MetricsReport>>& reports,
    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write report csv: " + path);
  out << "model,language,pr_auc,f1,precision,recall,mcc,support_vulnerable,"
         "support_clean\n";
  out << std::setprecision(10);
  for (const auto& [name, rep] : reports) {
    auto emit = [&](const LanguageMetrics& row) {
      out << name << ',' << row.language << ',';
      if (std::isnan(row.pr_auc)) out << "";
      else out << row.pr_auc;
      out << ',' << row.f1 << ',' << row.precision << ',' << row.recall << ','
          << row.mcc << ',' << row.support_vulnerable << ',' << row.support_clean
          << '\n';
    };
    for (const auto& row : rep.rows) {
      if (!row.absent) emit(row);
    }
    emit(rep.average);
  }
}

// Per-language metric rows from a prepared CSV with the write_report_csv
// schema; "Average" rows are dropped and recomputed.
inline std::vector<std::pair<std::string, MetricsReport>> read_report_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read report csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty report csv: " + path);
  std::map<std::string, std::vector<LanguageMetrics>> by_model;
  std::vector<std::string> model_order;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 7)
      throw Error(path + ":" + std::to_string(line_no) + ": expected 7+ columns");
    if (cells[1] == "Average") continue;
    LanguageMetrics row;
    row.language = cells[1];
    row.pr_auc = cells[2].empty() ? std::numeric_limits<double>::quiet_NaN()
                                  : std::stod(cells[2]);
    row.f1 = std::stod(cells[3]);
    row.precision = std::stod(cells[4]);
    row.recall = std::stod(cells[5]);
    row.mcc = std::stod(cells[6]);
    if (cells.size() >= 9) {
      row.support_vulnerable = std::stoll(cells[7]);
      row.support_clean = std::stoll(cells[8]);
    }
    if (!by_model.count(cells[0])) model_order.push_back(cells[0]);
    by_model[cells[0]].push_back(row);
  }
  std::vector<std::pair<std::string, MetricsReport>> out;
  for (const auto& name : model_order)
    out.emplace_back(name, make_report(by_model[name]));
  return out;
}

inline void write_pr_curves(const MetricsReport& rep, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write pr curve file: " + path);
  out << "language,threshold,recall,precision\n";
  out << std::setprecision(10);
  for (const auto& row : rep.rows) {
    for (const auto& pt : row.curve)
      out << row.language << ',' << pt.threshold << ',' << pt.recall << ','
          << pt.precision << '\n';
  }
}

}  // namespace mvd

#endif  // MVD_EVAL_HPP_
