#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mvd/eval.hpp"

using namespace mvd;

namespace {

// Exhaustive threshold-enumeration average precision: recount tp/fp from
// scratch at every distinct score, no shared code with pr_auc.
double ap_bruteforce(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  int64_t npos = 0;
  for (int l : labels) npos += l;
  double ap = 0, prev_r = 0;
  for (double t : thresholds) {
    int64_t tp = 0, fp = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        if (labels[i]) ++tp;
        else ++fp;
      }
    }
    double p = double(tp) / double(tp + fp);
    double r = double(tp) / double(npos);
    if (r > prev_r) {
      ap += (r - prev_r) * p;
      prev_r = r;
    }
  }
  return ap;
}

}  // namespace

TEST_CASE("collapse_binary") {
  Vec p3(3);
  p3 << 0.4, 0.35, 0.25;
  auto s = collapse_binary(p3, 3);
  CHECK(s.p_vuln == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(s.p_clean == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(s.predicted_vulnerable);

  Vec clean(4);
  clean << 1, 0, 0, 0;
  auto c = collapse_binary(clean, 4);
  CHECK(c.p_vuln == 0.0);
  CHECK_FALSE(c.predicted_vulnerable);

  Vec two(2);
  two << 0.5, 0.5;
  auto t = collapse_binary(two, 2);
  CHECK(t.p_vuln == 0.5);
  CHECK(t.predicted_vulnerable);  // inclusive boundary

  CHECK_THROWS_AS(collapse_binary(p3, 4), Error);
}

TEST_CASE("collapse conservation on random softmax outputs") {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    int n = 2 + int(rng.next_below(6));
    Vec z(n);
    for (int i = 0; i < n; ++i) z[i] = rng.uniform(-8, 8);
    Vec p = softmax(z);
    auto s = collapse_binary(p, size_t(n));
    CHECK(std::abs(s.p_clean + s.p_vuln - 1.0) <= 1e-9);
  }
}

TEST_CASE("pr_auc worked example") {
  double got = pr_auc({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
  CHECK(got == doctest::Approx(5.0 / 6).epsilon(1e-15));
  // 1*0.5 + (2/3)*0.5 exactly
  CHECK(got == 1.0 * 0.5 + (2.0 / 3.0) * 0.5);
}

TEST_CASE("pr_auc perfect separation and all-ties prevalence") {
  CHECK(pr_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
  // Single tie group: AP equals prevalence.
  CHECK(pr_auc({0.5, 0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 1, 0}) ==
        doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_WITH_AS(pr_auc({0.3, 0.2}, {0, 0}), "undefined PR-AUC", Error);
}

TEST_CASE("pr_auc equals brute force on random instances") {
  Rng rng(88);
  for (int trial = 0; trial < 300; ++trial) {
    size_t n = 1 + rng.next_below(12);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool any_pos = false;
    for (size_t i = 0; i < n; ++i) {
      // Coarse grid forces plenty of ties.
      scores[i] = double(rng.next_below(5)) / 4.0;
      labels[i] = rng.next_below(2) ? 1 : 0;
      any_pos |= labels[i] == 1;
    }
    if (!any_pos) labels[rng.next_below(n)] = 1;
    CHECK(pr_auc(scores, labels) == ap_bruteforce(scores, labels));  // exact
  }
}

TEST_CASE("pr_auc invariant under permutation and monotone transforms") {
  Rng rng(89);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    scores.push_back(double(rng.next_below(10)) / 10.0);
    labels.push_back(rng.next_below(3) == 0 ? 1 : 0);
  }
  labels[0] = 1;
  double base = pr_auc(scores, labels);

  std::vector<size_t> perm(scores.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng shuf(90);
  shuf.shuffle(perm);
  std::vector<double> ps(scores.size());
  std::vector<int> pl(labels.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    ps[i] = scores[perm[i]];
    pl[i] = labels[perm[i]];
  }
  CHECK(pr_auc(ps, pl) == base);

  std::vector<double> warped(scores.size());
  for (size_t i = 0; i < scores.size(); ++i)
    warped[i] = std::exp(3.0 * scores[i]) + 7.0;  // strictly increasing
  CHECK(pr_auc(warped, labels) == base);
}

TEST_CASE("confusion metrics basics") {
  auto perfect = confusion_metrics({1, 0, 1, 0}, {1, 0, 1, 0});
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.mcc == 1.0);

  // tp=fp=tn=fn=25: no correlation.
  std::vector<int> preds, labels;
  for (int i = 0; i < 25; ++i) { preds.push_back(1); labels.push_back(1); }
  for (int i = 0; i < 25; ++i) { preds.push_back(1); labels.push_back(0); }
  for (int i = 0; i < 25; ++i) { preds.push_back(0); labels.push_back(0); }
  for (int i = 0; i < 25; ++i) { preds.push_back(0); labels.push_back(1); }
  CHECK(confusion_metrics(preds, labels).mcc == 0.0);
}

TEST_CASE("confusion metrics worked example vs formula oracle") {
  // tp=5, fp=1, tn=90, fn=4
  std::vector<int> preds, labels;
  auto add = [&](int n, int p, int l) {
    for (int i = 0; i < n; ++i) {
      preds.push_back(p);
      labels.push_back(l);
    }
  };
  add(5, 1, 1);
  add(1, 1, 0);
  add(90, 0, 0);
  add(4, 0, 1);
  auto m = confusion_metrics(preds, labels);
  double precision = 5.0 / 6.0, recall = 5.0 / 9.0;
  double f1 = 2 * (precision * recall) / (precision + recall);
  double mcc = (5.0 * 90 - 1.0 * 4) / std::sqrt(6.0 * 9.0 * 91.0 * 94.0);
  CHECK(std::abs(m.precision - precision) <= 1e-12);
  CHECK(std::abs(m.recall - recall) <= 1e-12);
  CHECK(std::abs(m.f1 - f1) <= 1e-12);
  CHECK(std::abs(m.mcc - mcc) <= 1e-12);
}

TEST_CASE("confusion metrics zero-denominator conventions") {
  auto no_pred_pos = confusion_metrics({0, 0, 0}, {1, 0, 1});
  CHECK(no_pred_pos.precision == 0.0);
  CHECK(no_pred_pos.f1 == 0.0);
  CHECK(no_pred_pos.mcc == 0.0);  // tp+fp marginal is zero

  auto no_label_pos = confusion_metrics({1, 0, 0}, {0, 0, 0});
  CHECK(no_label_pos.recall == 0.0);
  CHECK(no_label_pos.mcc == 0.0);

  // Random adversarial confusion vectors stay in bounds.
  Rng rng(91);
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = 1 + rng.next_below(8);
    std::vector<int> p(n), l(n);
    for (size_t i = 0; i < n; ++i) {
      p[i] = int(rng.next_below(2));
      l[i] = int(rng.next_below(2));
    }
    auto m = confusion_metrics(p, l);
    CHECK(m.precision >= 0.0);
    CHECK(m.precision <= 1.0);
    CHECK(m.recall >= 0.0);
    CHECK(m.recall <= 1.0);
    CHECK(m.f1 >= 0.0);
    CHECK(m.f1 <= 1.0);
    CHECK(m.mcc >= -1.0);
    CHECK(m.mcc <= 1.0);
  }
}

TEST_CASE("format_metric: four decimals, display ties round toward zero") {
  CHECK(format_metric(0.8875) == "0.8875");
  CHECK(format_metric(1.0) == "1.0000");
  CHECK(format_metric(0.0) == "0.0000");
  CHECK(format_metric(-0.0316) == "-0.0316");
  CHECK(format_metric(0.53765) == "0.5376");  // tie at the 5th decimal
  CHECK(format_metric(0.72555) == "0.7255");
  CHECK(format_metric(0.72556) == "0.7256");
  CHECK(format_metric(std::nan("")) == "-");
}

namespace {

LanguageMetrics row(const std::string& lang, double prauc, double f1, double prec,
                    double rec, double mcc) {
  LanguageMetrics m;
  m.language = lang;
  m.pr_auc = prauc;
  m.f1 = f1;
  m.precision = prec;
  m.recall = rec;
  m.mcc = mcc;
  return m;
}

}  // namespace

TEST_CASE("published per-language rows reproduce their averages") {
  // Per-language rows of one model; the averaging path must yield the
  // published Average block to four decimals.
  auto rep = make_report({
      row("Python", 0.8875, 0.8830, 0.9731, 0.8098, 0.8804),
      row("C/C++", 0.3418, 0.2255, 0.7695, 0.1345, 0.3048),
      row("Java", 0.4204, 0.3317, 0.5693, 0.2584, 0.3368),
      row("C#", 0.7352, 0.6475, 0.7866, 0.5700, 0.5948),
      row("JavaScript", 0.5345, 0.4224, 0.6858, 0.3136, 0.4233),
      row("TypeScript", 0.3065, 0.1833, 0.5690, 0.1167, 0.2265),
  });
  CHECK(format_metric(rep.average.pr_auc) == "0.5376");
  CHECK(format_metric(rep.average.f1) == "0.4489");
  CHECK(format_metric(rep.average.precision) == "0.7255");
  CHECK(format_metric(rep.average.recall) == "0.3672");
  CHECK(format_metric(rep.average.mcc) == "0.4611");
}

TEST_CASE("render_report markers and layout") {
  auto a = make_report({row("Python", 0.8, 0.7, 0.6, 0.5, 0.4)});
  auto b = make_report({row("Python", 0.9, 0.7, 0.5, 0.4, 0.3)});

  SUBCASE("single model is top-1 everywhere") {
    std::string text = render_report({{"only", a}});
    CHECK(text.find("== Python ==") != std::string::npos);
    CHECK(text.find("== Average ==") != std::string::npos);
    size_t markers = 0, pos = 0;
    while ((pos = text.find("[1]", pos)) != std::string::npos) {
      ++markers;
      pos += 3;
    }
    CHECK(markers == 10);  // 5 columns x 2 blocks
    CHECK(text.find("[2]") == std::string::npos);
  }

  SUBCASE("two models, ties share top-1") {
    std::string text = render_report({{"ma", a}, {"mb", b}});
    // PR-AUC column: mb top-1, ma top-2; F1 tied -> both [1].
    CHECK(text.find("0.9000[1]") != std::string::npos);
    CHECK(text.find("0.8000[2]") != std::string::npos);
    size_t f1_ties = 0, pos = 0;
    while ((pos = text.find("0.7000[1]", pos)) != std::string::npos) {
      ++f1_ties;
      pos += 1;
    }
    CHECK(f1_ties == 4);  // both models, Python + Average blocks
  }

  SUBCASE("MVD/Python line of the comparison table renders verbatim") {
    auto mvd_rep = make_report({row("Python", 0.8875, 0.8830, 0.9731, 0.8098, 0.8804)});
    std::string text = render_report({{"MVD", mvd_rep}});
    for (const char* cell : {"0.8875", "0.8830", "0.9731", "0.8098", "0.8804"})
      CHECK(text.find(cell) != std::string::npos);
  }
}

TEST_CASE("report csv round trip recomputes averages") {
  auto rep = make_report({
      row("Python", 0.8, 0.7, 0.6, 0.5, 0.4),
      row("Java", 0.6, 0.5, 0.4, 0.3, 0.2),
  });
  std::string path = "test_eval_tmp.csv";
  write_report_csv({{"m1", rep}}, path);
  auto back = read_report_csv(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].first == "m1");
  REQUIRE(back[0].second.rows.size() == 2);
  CHECK(back[0].second.average.pr_auc == doctest::Approx(0.7).epsilon(1e-12));
  std::remove(path.c_str());
}
