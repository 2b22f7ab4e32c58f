#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "ecgmi/qgsvm.hpp"
#include "oracles.hpp"

using namespace ecgmi;
using namespace ecgmi::svm;

namespace {

FeatureVector random_vector(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  FeatureVector v(d);
  for (auto& x : v) x = nd(rng);
  return v;
}

std::vector<std::vector<double>> gram(const std::vector<FeatureVector>& x, const QGKernelParams& p = {}) {
  std::vector<std::vector<double>> k(x.size(), std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) k[i][j] = qg_kernel(x[i], x[j], p);
  return k;
}

struct Problem {
  std::vector<FeatureVector> x;
  std::vector<int> y;
};

/// n random 2-D points with both labels present.
Problem random_problem(std::mt19937_64& rng, std::size_t n) {
  Problem p;
  for (std::size_t i = 0; i < n; ++i) {
    p.x.push_back(random_vector(rng, 2, 1.5));
    p.y.push_back(rng() % 2 ? 1 : -1);
  }
  p.y[0] = 1;
  p.y[1] = -1;
  return p;
}

double training_accuracy(const SvmModel& m, const Problem& p) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.x.size(); ++i) ok += predict_svm(m, p.x[i]).label == p.y[i];
  return static_cast<double>(ok) / static_cast<double>(p.x.size());
}

}  // namespace

// ---- kernel -------------------------------------------------------------------------------

TEST(Kernel, ClosedFormAtDefaults) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t d = 1 + rng() % 8;
    const auto x = random_vector(rng, d), y = random_vector(rng, d);
    double d2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) d2 += (x[k] - y[k]) * (x[k] - y[k]);
    const double base = 1.0 + d2 / 6.0;
    EXPECT_NEAR(qg_kernel(x, y), 1.0 / (base * base), 1e-12);
  }
}

TEST(Kernel, WorkedValues) {
  const FeatureVector o{0.0, 0.0}, a{std::sqrt(6.0), 0.0}, b{std::sqrt(6.0), std::sqrt(6.0)};
  EXPECT_EQ(qg_kernel(o, o), 1.0);
  EXPECT_NEAR(qg_kernel(o, a), 0.25, 1e-15);
  EXPECT_NEAR(qg_kernel(o, b), 1.0 / 9.0, 1e-15);
  // general q: exponent 1/(1-q)
  const QGKernelParams p{2.0, 1.0};
  EXPECT_NEAR(qg_kernel_from_distance(3.0, p), 1.0 / 4.0, 1e-15);
}

TEST(Kernel, SymmetryBoundsMonotonicity) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 2000; ++i) {
    const auto x = random_vector(rng, 5), y = random_vector(rng, 5);
    const double kxy = qg_kernel(x, y);
    EXPECT_NEAR(kxy, qg_kernel(y, x), 1e-12);
    EXPECT_GT(kxy, 0.0);
    EXPECT_LT(kxy, 1.0);
    EXPECT_EQ(qg_kernel(x, x), 1.0);
  }
  for (double q : {1.1, 1.5, 2.5, 2.9}) {
    const QGKernelParams p{q, 0.7};
    double prev = 1.0;
    for (double d2 = 0.01; d2 < 100.0; d2 *= 1.3) {
      const double k = qg_kernel_from_distance(d2, p);
      EXPECT_LT(k, prev);
      prev = k;
    }
  }
}

TEST(Kernel, EmpiricalPsd) {
  std::mt19937_64 rng(3);
  for (int set = 0; set < 50; ++set) {
    std::vector<FeatureVector> x;
    for (int i = 0; i < 10; ++i) x.push_back(random_vector(rng, 3));
    const auto k = gram(x);
    Eigen::MatrixXd m(10, 10);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) m(i, j) = k[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
  }
}

TEST(Kernel, Errors) {
  const FeatureVector a{1.0, 2.0}, b{1.0};
  try {
    qg_kernel(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  EXPECT_THROW(qg_kernel(a, a, {1.0, 0.5}), Error);
  EXPECT_THROW(qg_kernel(a, a, {3.0, 0.5}), Error);
  EXPECT_THROW(qg_kernel(a, a, {1.5, 0.0}), Error);
}

// ---- SMO ------------------------------------------------------------------------------------

TEST(Smo, TwoPointHandSolution) {
  // K12 = (1 + 4/6)^-2 = 9/25; dual 2a - a^2 (1 - K12) peaks at a = 1 / (1 - 9/25) = 1.5625.
  const std::vector<FeatureVector> x{{-1.0}, {1.0}};
  const std::vector<int> y{-1, 1};
  SmoConfig cfg;
  cfg.C = 10.0;
  const auto r = train_svm(x, y, {}, cfg);
  ASSERT_EQ(r.alphas.size(), 2u);
  EXPECT_NEAR(r.alphas[0], 1.5625, 1e-6);
  EXPECT_NEAR(r.alphas[1], 1.5625, 1e-6);
  EXPECT_NEAR(r.model.bias(), 0.0, 1e-9);
  EXPECT_EQ(r.model.support_vectors().size(), 2u);
  EXPECT_NEAR(r.objective, 1.5625, 1e-9);
  EXPECT_EQ(predict_svm(r.model, FeatureVector{-0.3}).label, -1);
  EXPECT_EQ(predict_svm(r.model, FeatureVector{0.3}).label, 1);
}

TEST(Smo, ExactZeroDecisionIsNormal) {
  const SvmModel m({{-1.0}, {1.0}}, {-1.5625, 1.5625}, 0.0, {});
  const auto p = predict_svm(m, FeatureVector{0.0});
  EXPECT_EQ(p.decision_value, 0.0);
  EXPECT_EQ(p.label, -1);
}

TEST(Smo, Xor) {
  const std::vector<FeatureVector> x{{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  const std::vector<int> y{-1, -1, 1, 1};
  const auto r = train_svm(x, y);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(predict_svm(r.model, x[i]).label, y[i]) << i;
  }
  for (const auto& sv : r.model.support_vectors()) {
    const auto it = std::find(x.begin(), x.end(), sv);
    ASSERT_NE(it, x.end());
    EXPECT_EQ(predict_svm(r.model, sv).label, y[static_cast<std::size_t>(it - x.begin())]);
  }
}

TEST(Smo, MatchesProjectedGradientOracle) {
  std::mt19937_64 rng(4);
  for (int set = 0; set < 25; ++set) {
    const auto p = random_problem(rng, 6);
    const auto r = train_svm(p.x, p.y);
    std::vector<double> yd(p.y.begin(), p.y.end());
    const double best = oracle::dual_optimum(gram(p.x), yd, 1.0);
    EXPECT_NEAR(r.objective, best, 1e-3) << "set " << set;
    EXPECT_NEAR(r.model.dual_objective(), r.objective, 1e-9);
  }
}

TEST(Smo, DualFeasibilityAndKkt) {
  std::mt19937_64 rng(5);
  for (int set = 0; set < 30; ++set) {
    const auto p = random_problem(rng, 10 + rng() % 30);
    SmoConfig cfg;
    cfg.C = 0.5 + static_cast<double>(rng() % 10);
    const auto r = train_svm(p.x, p.y, {}, cfg);
    double balance = 0.0;
    for (std::size_t i = 0; i < r.alphas.size(); ++i) {
      EXPECT_GE(r.alphas[i], 0.0);
      EXPECT_LE(r.alphas[i], cfg.C);
      balance += r.alphas[i] * p.y[i];
    }
    EXPECT_LE(std::abs(balance), 1e-6);
    if (!r.hit_iteration_limit) EXPECT_LE(r.max_kkt_violation, cfg.kkt_tolerance);
  }
}

TEST(Smo, Deterministic) {
  std::mt19937_64 rng(6);
  const auto p = random_problem(rng, 40);
  EXPECT_EQ(train_svm(p.x, p.y).model, train_svm(p.x, p.y).model);
}

TEST(Smo, ContradictoryDuplicates) {
  const std::vector<FeatureVector> x{{0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}, {1.0, 1.0}, {2.0, 0.0}};
  const std::vector<int> y{1, -1, 1, -1, 1};
  SmoConfig cfg;
  cfg.max_iterations = 500;
  const auto r = train_svm(x, y, {}, cfg);
  EXPECT_LT(training_accuracy(r.model, {x, y}), 1.0);
}

TEST(Smo, Errors) {
  const std::vector<FeatureVector> x{{0.0}, {1.0}};
  auto code = [&](std::vector<FeatureVector> xs, std::vector<int> ys, SmoConfig cfg = {}) {
    try {
      train_svm(xs, ys, {}, cfg);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code(x, {1, 1}), ErrorCode::SingleClassTraining);
  EXPECT_EQ(code(x, {1}), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code({{0.0}, {1.0, 2.0}}, {1, -1}), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code(x, {1, 0}), ErrorCode::InvalidArgument);
  SmoConfig bad;
  bad.C = 0.0;
  EXPECT_EQ(code(x, {1, -1}, bad), ErrorCode::InvalidArgument);
}

TEST(Model, Invariants) {
  EXPECT_THROW(SvmModel({}, {}, 0.0, {}), Error);
  EXPECT_THROW(SvmModel({{1.0}}, {1.0, 2.0}, 0.0, {}), Error);
  EXPECT_THROW(SvmModel({{1.0}, {1.0, 2.0}}, {1.0, 2.0}, 0.0, {}), Error);
  const SvmModel m({{1.0, 2.0}}, {1.0}, 0.0, {});
  EXPECT_THROW(m.decision_value(FeatureVector{1.0}), Error);
}

TEST(Model, FileRoundTrip) {
  std::mt19937_64 rng(7);
  const auto p = random_problem(rng, 20);
  const auto m = train_svm(p.x, p.y, {1.7, 0.3}).model;
  const auto bytes = save_model(m);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), std::string("QGSVM\0", 6));
  EXPECT_EQ(bytes[6], 1);
  const auto back = load_model(bytes);
  EXPECT_EQ(back, m);
  EXPECT_EQ(save_model(back), bytes);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(load_model(trailing), Error);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 1);
  EXPECT_THROW(load_model(truncated), Error);
  auto version = bytes;
  version[6] = 9;
  EXPECT_THROW(load_model(version), Error);
}

// ---- one-vs-rest ---------------------------------------------------------------------------

TEST(OneVsRest, TwoClassesMatchBinaryModel) {
  std::mt19937_64 rng(8);
  const auto p = random_problem(rng, 30);
  std::vector<int> cls(p.y.size());
  for (std::size_t i = 0; i < cls.size(); ++i) cls[i] = p.y[i] > 0 ? 1 : 0;
  const auto models = train_one_vs_rest(p.x, cls, 2);
  const auto binary = train_svm(p.x, p.y).model;
  ASSERT_EQ(models.size(), 2u);
  EXPECT_EQ(models[1], binary);
  for (int i = 0; i < 200; ++i) {
    const auto q = random_vector(rng, 2, 2.0);
    const int expected = predict_svm(binary, q).label > 0 ? 1 : 0;
    const double f1 = models[1].decision_value(q), f0 = models[0].decision_value(q);
    EXPECT_NEAR(f1, -f0, 0.05);
    if (std::abs(f1) > 0.05) EXPECT_EQ(predict_one_vs_rest(models, q), expected);
  }
}

TEST(OneVsRest, ThreeClouds) {
  std::mt19937_64 rng(9);
  const std::vector<FeatureVector> centres{{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}};
  std::vector<FeatureVector> x;
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 15; ++i) {
      auto v = random_vector(rng, 2, 0.5);
      v[0] += centres[static_cast<std::size_t>(c)][0];
      v[1] += centres[static_cast<std::size_t>(c)][1];
      x.push_back(v);
      labels.push_back(c);
    }
  const auto models = train_one_vs_rest(x, labels, 3);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(predict_one_vs_rest(models, x[i]), labels[i]);
}

TEST(OneVsRest, Errors) {
  const std::vector<FeatureVector> x{{0.0}, {1.0}};
  try {
    train_one_vs_rest(x, std::vector<int>{0, 0}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleClassTraining);
  }
  EXPECT_THROW(train_one_vs_rest(x, std::vector<int>{0, 1}, 1), Error);
  EXPECT_THROW(train_one_vs_rest(x, std::vector<int>{0, 2}, 2), Error);
}

TEST(OneVsRest, TieGoesToLowestIndex) {
  const SvmModel a({{0.0}}, {1.0}, 0.0, {}), b({{0.0}}, {1.0}, 0.0, {});
  const std::vector<SvmModel> models{a, b};
  EXPECT_EQ(predict_one_vs_rest(models, FeatureVector{0.5}), 0);
}
