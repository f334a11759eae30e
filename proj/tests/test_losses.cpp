#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "mvd/losses.hpp"

using namespace mvd;

namespace {

Mat random_logits(Rng& rng, int rows, int cols, double scale = 2.0) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

std::vector<int> random_targets(Rng& rng, int rows, int cols) {
  std::vector<int> t(static_cast<size_t>(rows));
  for (auto& v : t) v = static_cast<int>(rng.next_below(static_cast<uint64_t>(cols)));
  return t;
}

// Plain mean cross entropy, written independently of the loss module.
double ce_oracle(const Mat& logits, const std::vector<int>& targets) {
  double total = 0;
  for (int i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    double denom = 0;
    for (int k = 0; k < logits.cols(); ++k) denom += std::exp(logits(i, k) - mx);
    total += -(logits(i, targets[size_t(i)]) - mx - std::log(denom));
  }
  return total / logits.rows();
}

double max_grad_err(const Mat& analytic, const Mat& logits,
                    const std::function<double(const Mat&)>& f, double eps = 1e-5) {
  double worst = 0;
  for (int i = 0; i < logits.rows(); ++i) {
    for (int j = 0; j < logits.cols(); ++j) {
      Mat zp = logits, zm = logits;
      zp(i, j) += eps;
      zm(i, j) -= eps;
      double fd = (f(zp) - f(zm)) / (2 * eps);
      double a = analytic(i, j);
      double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("class_priors arithmetic and floor") {
  auto p = class_priors({100, 10, 10});
  CHECK(p.q[0] == doctest::Approx(5.0 / 6).epsilon(1e-12));
  CHECK(p.q[1] == doctest::Approx(1.0 / 12).epsilon(1e-12));
  CHECK(p.q[2] == doctest::Approx(1.0 / 12).epsilon(1e-12));

  auto floored = class_priors({10, 0});
  CHECK(floored.q[0] == doctest::Approx(10.0 / 10.5).epsilon(1e-12));
  CHECK(floored.q[1] == doctest::Approx(0.5 / 10.5).epsilon(1e-12));

  auto uniform = class_priors({7, 7, 7, 7});
  for (int i = 0; i < 4; ++i) CHECK(uniform.q[i] == doctest::Approx(0.25));

  CHECK_THROWS_AS(class_priors({0, 0}), Error);
}

TEST_CASE("fola reduces to cross entropy under ce settings") {
  Rng rng(11);
  auto priors = class_priors({50, 30, 20});
  for (int trial = 0; trial < 20; ++trial) {
    Mat z = random_logits(rng, 6, 3);
    auto targets = random_targets(rng, 6, 3);

    LossConfig ce_cfg;
    ce_cfg.variant = LossVariant::Ce;
    CHECK(std::abs(fola_loss(z, targets, priors, ce_cfg).value -
                   ce_oracle(z, targets)) < 1e-9);

    // gamma=0, tau=0 through the default variant is the same reduction.
    LossConfig zeroed;
    zeroed.gamma = 0;
    zeroed.tau = 0;
    CHECK(std::abs(fola_loss(z, targets, priors, zeroed).value -
                   ce_oracle(z, targets)) < 1e-9);
  }
}

TEST_CASE("variant reduction identities") {
  Rng rng(12);
  auto priors = class_priors({5, 90, 5});
  for (int trial = 0; trial < 20; ++trial) {
    Mat z = random_logits(rng, 4, 3);
    auto targets = random_targets(rng, 4, 3);
    LossConfig cfg;  // gamma=2 tau=1

    LossConfig focal = cfg;
    focal.variant = LossVariant::Focal;
    LossConfig adj_tau0 = cfg;
    adj_tau0.tau = 0;
    CHECK(fola_loss(z, targets, priors, focal).value ==
          doctest::Approx(fola_loss(z, targets, priors, adj_tau0).value).epsilon(1e-12));

    LossConfig lace = cfg;
    lace.variant = LossVariant::Lace;
    LossConfig adj_g0 = cfg;
    adj_g0.gamma = 0;
    CHECK(fola_loss(z, targets, priors, lace).value ==
          doctest::Approx(fola_loss(z, targets, priors, adj_g0).value).epsilon(1e-12));
  }
}

TEST_CASE("fola worked example against straight-line scalar oracle") {
  Mat z(1, 3);
  z << 2, 0, 0;
  std::vector<int> targets = {0};
  auto priors = class_priors({80, 10, 10});  // q = (0.8, 0.1, 0.1)
  LossConfig cfg;                            // gamma=2, tau=1, adjusted

  // Oracle computed step by step with scalar math only.
  double z0 = 2 + 1.0 * std::log(0.8);
  double z1 = 0 + 1.0 * std::log(0.1);
  double z2 = 0 + 1.0 * std::log(0.1);
  double m = std::max(z0, std::max(z1, z2));
  double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m), e2 = std::exp(z2 - m);
  double p0 = e0 / (e0 + e1 + e2);
  double expected = -std::pow(1 - p0, 2.0) * std::log(p0);

  CHECK(std::abs(fola_loss(z, targets, priors, cfg).value - expected) < 1e-10);

  // Literal form: focal on unadjusted probabilities plus tau*log(q_t).
  double mz = 2;
  double f0 = std::exp(2 - mz), f1 = std::exp(0 - mz), f2 = std::exp(0 - mz);
  double q0 = f0 / (f0 + f1 + f2);
  double expected_literal = -std::pow(1 - q0, 2.0) * std::log(q0) + 1.0 * std::log(0.8);
  LossConfig lit = cfg;
  lit.variant = LossVariant::FolaLiteral;
  CHECK(std::abs(fola_loss(z, targets, priors, lit).value - expected_literal) < 1e-10);
}

TEST_CASE("focal term vanishes when p_t is exactly 1") {
  Mat z(1, 3);
  z << 1000, 0, 0;  // softmax underflows to exactly (1, 0, 0)
  auto priors = class_priors({1, 1, 1});
  LossConfig cfg;
  cfg.tau = 0;
  auto res = fola_loss(z, {0}, priors, cfg);
  CHECK(res.value == 0.0);
}

TEST_CASE("fola non-negative without the literal constant") {
  Rng rng(13);
  auto priors = class_priors({60, 30, 10});
  for (int trial = 0; trial < 50; ++trial) {
    Mat z = random_logits(rng, 3, 3, 5.0);
    auto targets = random_targets(rng, 3, 3);
    LossConfig cfg;
    CHECK(fola_loss(z, targets, priors, cfg).value >= 0.0);
  }
}

TEST_CASE("fola gradient matches central differences for every variant") {
  Rng rng(14);
  auto priors = class_priors({50, 35, 15});
  for (LossVariant v : {LossVariant::FolaAdjusted, LossVariant::FolaLiteral,
                        LossVariant::Ce, LossVariant::Focal, LossVariant::Lace}) {
    LossConfig cfg;
    cfg.variant = v;
    cfg.alpha = Vec(3);
    cfg.alpha << 1.0, 2.0, 0.5;
    Mat z = random_logits(rng, 4, 3);
    auto targets = random_targets(rng, 4, 3);
    auto res = fola_loss(z, targets, priors, cfg);
    double err = max_grad_err(res.dlogits, z, [&](const Mat& zz) {
      return fola_loss(zz, targets, priors, cfg).value;
    });
    CHECK(err < 1e-6);
  }
}

TEST_CASE("prior monotonicity under the logit shift") {
  // Uniform logits, skewed priors: raising tau moves post-adjustment mass
  // toward frequent classes, so the rarest class strictly loses
  // probability (and the loss demands more margin for it).
  auto priors = class_priors({70, 20, 10});
  Vec z = Vec::Zero(3);
  double prev_rare = 1.0, prev_freq = 0.0;
  for (double tau : {0.0, 0.5, 1.0, 2.0}) {
    Vec adjusted = z + tau * priors.q.array().log().matrix();
    Vec p = softmax(adjusted);
    CHECK(p[2] < prev_rare);
    if (tau > 0) CHECK(p[0] > prev_freq);
    prev_rare = p[2];
    prev_freq = p[0];
  }
}

TEST_CASE("distillation zero cases") {
  Rng rng(15);
  Mat z = random_logits(rng, 5, 3);
  auto sym = distillation_loss(z, z, DistillMode::SymmetricSoftmax);
  CHECK(sym.value == 0.0);
  CHECK(sym.dlogits.cwiseAbs().maxCoeff() == 0.0);

  Mat probs(5, 3);
  for (int i = 0; i < 5; ++i) probs.row(i) = softmax(z.row(i).transpose()).transpose();
  auto lit = distillation_loss(probs, z, DistillMode::Literal);
  CHECK(lit.value == 0.0);
}

TEST_CASE("distillation value matches brute-force summation oracle") {
  Rng rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    Mat zn = random_logits(rng, 4, 3);
    Mat zo = random_logits(rng, 4, 3);

    double expected_sym = 0, expected_lit = 0;
    for (int i = 0; i < 4; ++i) {
      double mo = zo.row(i).maxCoeff(), mn = zn.row(i).maxCoeff();
      double so = 0, sn = 0;
      for (int k = 0; k < 3; ++k) {
        so += std::exp(zo(i, k) - mo);
        sn += std::exp(zn(i, k) - mn);
      }
      for (int k = 0; k < 3; ++k) {
        double po = std::exp(zo(i, k) - mo) / so;
        double pn = std::exp(zn(i, k) - mn) / sn;
        expected_sym += (pn - po) * (pn - po);
        expected_lit += (zn(i, k) - po) * (zn(i, k) - po);
      }
    }
    expected_sym /= 4;
    expected_lit /= 4;
    CHECK(std::abs(distillation_loss(zn, zo, DistillMode::SymmetricSoftmax).value -
                   expected_sym) < 1e-12);
    CHECK(std::abs(distillation_loss(zn, zo, DistillMode::Literal).value -
                   expected_lit) < 1e-12);
  }
}

TEST_CASE("distillation non-negative and errors on dimension mismatch") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    Mat zn = random_logits(rng, 2, 4, 4.0);
    Mat zo = random_logits(rng, 2, 4, 4.0);
    CHECK(distillation_loss(zn, zo, DistillMode::SymmetricSoftmax).value >= 0.0);
  }
  Mat a(2, 3), b(2, 4);
  a.setZero();
  b.setZero();
  CHECK_THROWS_AS(distillation_loss(a, b, DistillMode::SymmetricSoftmax), Error);
}

TEST_CASE("distillation gradients match central differences") {
  Rng rng(18);
  Mat zo = random_logits(rng, 3, 4);
  for (DistillMode mode : {DistillMode::SymmetricSoftmax, DistillMode::Literal}) {
    Mat zn = random_logits(rng, 3, 4);
    auto res = distillation_loss(zn, zo, mode);
    double err = max_grad_err(res.dlogits, zn, [&](const Mat& z) {
      return distillation_loss(z, zo, mode).value;
    });
    CHECK(err < 1e-6);
  }
}

TEST_CASE("total_loss composition") {
  Rng rng(19);
  auto priors = class_priors({30, 30, 20, 20});
  Mat z = random_logits(rng, 4, 4);
  auto targets = random_targets(rng, 4, 4);
  LossConfig cfg;
  auto fola = fola_loss(z, targets, priors, cfg);

  Mat zo = random_logits(rng, 4, 3);
  auto distill = distillation_loss(z.leftCols(3), zo, DistillMode::SymmetricSoftmax);

  SUBCASE("weight zero equals fola alone") {
    auto total = total_loss(fola, distill, 0.0);
    CHECK(total.value == fola.value);
    CHECK((total.dlogits - fola.dlogits).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("both zero gives zero") {
    LossResult zf;
    zf.dlogits = Mat::Zero(4, 4);
    LossResult zd;
    zd.dlogits = Mat::Zero(4, 3);
    CHECK(total_loss(zf, zd, 1.0).value == 0.0);
  }

  SUBCASE("gradient of sum equals sum of gradients") {
    auto total = total_loss(fola, distill, 1.0);
    for (int i = 0; i < 4; ++i) {
      for (int k = 0; k < 4; ++k) {
        double expect = fola.dlogits(i, k) + (k < 3 ? distill.dlogits(i, k) : 0.0);
        CHECK(std::abs(total.dlogits(i, k) - expect) <= 1e-12);
      }
    }
    CHECK(std::abs(total.value - (fola.value + distill.value)) <= 1e-12);
  }
}

TEST_CASE("statistical: adjusted loss helps minority recall on a 95/5 toy") {
  // Linear softmax classifier trained by full-batch gradient descent on a
  // separable two-cluster problem; recall measured on the training points.
  auto run = [](uint64_t seed, bool adjusted) {
    Rng rng(seed);
    std::vector<Vec> xs;
    std::vector<int> ys;
    for (int i = 0; i < 95; ++i) {
      Vec x(2);
      x << rng.uniform(-1.5, -0.5), rng.uniform(-1.5, -0.5);
      xs.push_back(x);
      ys.push_back(0);
    }
    for (int i = 0; i < 5; ++i) {
      Vec x(2);
      x << rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5);
      xs.push_back(x);
      ys.push_back(1);
    }
    auto priors = class_priors({95, 5});
    LossConfig cfg;
    if (!adjusted) cfg.variant = LossVariant::Ce;

    Mat W = Mat::Zero(2, 2);
    Vec b = Vec::Zero(2);
    const double lr = 0.5;
    for (int step = 0; step < 60; ++step) {
      Mat logits(100, 2);
      for (int i = 0; i < 100; ++i)
        logits.row(i) = (W * xs[size_t(i)] + b).transpose();
      auto res = fola_loss(logits, ys, priors, cfg);
      Mat dW = Mat::Zero(2, 2);
      Vec db = Vec::Zero(2);
      for (int i = 0; i < 100; ++i) {
        dW += res.dlogits.row(i).transpose() * xs[size_t(i)].transpose();
        db += res.dlogits.row(i).transpose();
      }
      W -= lr * dW;
      b -= lr * db;
    }
    int tp = 0, fn = 0;
    for (int i = 0; i < 100; ++i) {
      if (ys[size_t(i)] != 1) continue;
      Vec p = softmax(W * xs[size_t(i)] + b);
      if (p[1] >= 0.5) ++tp;
      else ++fn;
    }
    return static_cast<double>(tp) / (tp + fn);
  };

  int wins = 0;
  for (uint64_t seed : {101u, 202u, 303u, 404u, 505u}) {
    if (run(seed, true) >= run(seed, false)) ++wins;
  }
  CHECK(wins >= 3);
}
