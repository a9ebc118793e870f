#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "marginlab/dataset.hpp"
#include "marginlab/error.hpp"
#include "marginlab/experiments.hpp"
#include "marginlab/trainer.hpp"

namespace {

using namespace marginlab;

// Lloyd's algorithm with farthest-point seeding; returns the centers.
Matrix kmeans(const Matrix& x, std::size_t k, int iters = 50) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const auto dist2 = [&](std::size_t i, const Matrix& c, std::size_t j) {
    double s = 0.0;
    for (std::size_t t = 0; t < d; ++t) s += (x(i, t) - c(j, t)) * (x(i, t) - c(j, t));
    return s;
  };
  Matrix centers(k, d);
  for (std::size_t t = 0; t < d; ++t) centers(0, t) = x(0, t);
  for (std::size_t j = 1; j < k; ++j) {
    std::size_t far = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      double near = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < j; ++c) near = std::min(near, dist2(i, centers, c));
      if (near > best) {
        best = near;
        far = i;
      }
    }
    for (std::size_t t = 0; t < d; ++t) centers(j, t) = x(far, t);
  }
  std::vector<std::size_t> assign(n);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      for (std::size_t c = 1; c < k; ++c)
        if (dist2(i, centers, c) < dist2(i, centers, arg)) arg = c;
      assign[i] = arg;
    }
    Matrix sum(k, d);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[assign[i]];
      for (std::size_t t = 0; t < d; ++t) sum(assign[i], t) += x(i, t);
    }
    for (std::size_t c = 0; c < k; ++c)
      if (count[c] > 0)
        for (std::size_t t = 0; t < d; ++t) centers(c, t) = sum(c, t) / count[c];
  }
  return centers;
}

TEST(Blobs, Deterministic) {
  BlobSpec spec;
  spec.seed = 42;
  const auto a = generate_blobs(spec);
  const auto b = generate_blobs(spec);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.labels, b.labels);
  spec.seed = 43;
  EXPECT_NE(generate_blobs(spec).samples, a.samples);
}

TEST(Blobs, ShapesAndValidation) {
  BlobSpec spec{.classes = 3, .per_class = 5, .input_dim = 2, .dispersion = 0.1};
  const auto d = generate_blobs(spec);
  EXPECT_EQ(d.samples.rows(), 15u);
  EXPECT_EQ(d.samples.cols(), 2u);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(std::count(d.labels.begin(), d.labels.end(), c), 5);
  spec.dispersion = 0.0;
  EXPECT_THROW(generate_blobs(spec), ConfigError);
  spec = {.classes = 1};
  EXPECT_THROW(generate_blobs(spec), ConfigError);
}

TEST(Blobs, TinyDispersionGivesPointClusters) {
  BlobSpec spec{.classes = 2, .per_class = 50, .input_dim = 3, .dispersion = 1e-9, .seed = 3};
  const auto d = generate_blobs(spec);
  const Matrix centers = blob_centers(spec);
  for (std::size_t i = 0; i < d.samples.rows(); ++i) {
    for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(d.samples(i, t), centers(d.labels[i], t), 1e-7);
  }
  // Separable by the perpendicular bisector of the two centers.
  for (std::size_t i = 0; i < d.samples.rows(); ++i) {
    double side = 0.0;
    for (std::size_t t = 0; t < 3; ++t) {
      side += (d.samples(i, t) - 0.5 * (centers(0, t) + centers(1, t))) * (centers(0, t) - centers(1, t));
    }
    EXPECT_EQ(side > 0, d.labels[i] == 0);
  }
}

TEST(Blobs, KMeansRecoversCenters) {
  BlobSpec spec{.classes = 8, .per_class = 200, .input_dim = 8, .dispersion = 0.1, .seed = 5};
  const auto d = generate_blobs(spec);
  const Matrix truth = blob_centers(spec);
  const Matrix found = kmeans(d.samples, 8);
  std::vector<bool> used(8, false);
  for (std::size_t c = 0; c < 8; ++c) {
    std::size_t arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < 8; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < 8; ++t) s += (truth(c, t) - found(j, t)) * (truth(c, t) - found(j, t));
      if (s < best) {
        best = s;
        arg = j;
      }
    }
    EXPECT_LT(std::sqrt(best), 0.05) << "class " << c;
    EXPECT_FALSE(used[arg]);
    used[arg] = true;
  }
}

TEST(Mlp, ShapesAndValidation) {
  const MlpModel m = make_mlp(8, {16, 12}, 3, 5, 1);
  EXPECT_EQ(m.input_dim(), 8u);
  EXPECT_EQ(m.feature_dim(), 3u);
  EXPECT_EQ(m.num_classes(), 5u);
  EXPECT_NO_THROW(validate(m));
  MlpModel bad = m;
  bad.weights[1] = Matrix(7, 12);
  EXPECT_THROW(validate(bad), DimensionError);
  EXPECT_THROW(make_mlp(8, {}, 1, 5, 1), ConfigError);
}

TEST(Mlp, IdentityLayerPassesInputsThrough) {
  MlpModel m;
  m.weights = {Matrix::identity(3)};
  m.biases = {Matrix(1, 3)};
  m.classifier.W = Matrix::identity(3);
  const Matrix x{{1, -2, 3}, {0.5, 0, -1}};
  EXPECT_EQ(extract_features(m, x), x);
  EXPECT_EQ(extract_features(m, x), extract_features(m, x));
}

TEST(AngularStats, TrivialCases) {
  ClassWeights w{Matrix{{1, -1}, {0, 0}}};
  const Matrix feats{{2, 0}, {1, 0}, {-3, 0}};
  const auto st = angular_stats(feats, {0, 0, 1}, w);
  EXPECT_NEAR(st.mean_intra_spread, 0.0, 1e-12);
  EXPECT_NEAR(st.min_inter_gap, std::numbers::pi, 1e-7);
  EXPECT_THROW(angular_stats(Matrix{{0, 0}}, {0}, w), DegenerateVectorError);
}

TrainConfig quick_config(LossSpec spec, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.spec = spec;
  cfg.seed = seed;
  cfg.epochs = 20;
  cfg.lr_drop_epochs = {12, 16};
  return cfg;
}

SyntheticDataset toy(std::uint64_t seed) {
  return generate_blobs({.classes = 8, .per_class = 200, .input_dim = 8, .dispersion = 0.1,
                         .seed = seed});
}

TEST(Train, ZeroMarginMatchesNslTrace) {
  const auto data = toy(1);
  const MlpModel m = make_mlp(8, {64}, 2, 8, 1);
  const TrainRun a = train(m, data, quick_config(LossSpec::lmcl(30, 0.0), 1));
  const TrainRun b = train(m, data, quick_config(LossSpec::nsl(30), 1));
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t e = 0; e < a.trace.size(); ++e) EXPECT_NEAR(a.trace[e].loss, b.trace[e].loss, 1e-12);
}

TEST(Train, DeterministicBitForBit) {
  const auto data = toy(2);
  const MlpModel m = make_mlp(8, {64}, 2, 8, 2);
  const TrainRun a = train(m, data, quick_config(LossSpec::lmcl(30, 0.2), 2));
  const TrainRun b = train(m, data, quick_config(LossSpec::lmcl(30, 0.2), 2));
  EXPECT_EQ(a.model.weights, b.model.weights);
  EXPECT_EQ(a.model.classifier.W, b.model.classifier.W);
  for (std::size_t e = 0; e < a.trace.size(); ++e) EXPECT_EQ(a.trace[e].loss, b.trace[e].loss);
  EXPECT_EQ(a.trace.size(), 20u);
}

TEST(Train, ScheduleDropsLearningRate) {
  const auto run = train(make_mlp(8, {64}, 2, 8, 1), toy(1), quick_config(LossSpec::lmcl(30, 0.1), 1));
  EXPECT_DOUBLE_EQ(run.trace[11].learning_rate, 0.05);
  EXPECT_NEAR(run.trace[12].learning_rate, 0.005, 1e-15);
  EXPECT_NEAR(run.trace[19].learning_rate, 0.0005, 1e-15);
}

TEST(Train, DivergenceCarriesEpoch) {
  TrainConfig cfg = quick_config(LossSpec::softmax(), 1);
  cfg.learning_rate = 1e6;
  cfg.momentum = 0.0;
  try {
    train(make_mlp(8, {64}, 2, 8, 1), toy(1), cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_LT(e.epoch(), 20u);
  }
}

TEST(Train, InputRescalingLeavesNormalizedLossUnchanged) {
  // Zero biases and ReLU are positively homogeneous, so scaling every input
  // by k scales the features by k and the normalized loss does not move.
  auto data = toy(3);
  const MlpModel m = make_mlp(8, {64}, 2, 8, 3);
  Batch b{extract_features(m, data.samples), data.labels, 8};
  Batch scaled{extract_features(m, 7.5 * data.samples), data.labels, 8};
  EXPECT_NEAR(loss_value(LossSpec::lmcl(30, 0.2), b, m.classifier),
              loss_value(LossSpec::lmcl(30, 0.2), scaled, m.classifier), 1e-10);
}

TEST(IsConverged, WindowRule) {
  std::vector<EpochStats> falling;
  for (std::size_t e = 0; e < 20; ++e) falling.push_back({e, 10.0 / (1.0 + e), 0.0, 0.1});
  EXPECT_TRUE(is_converged(falling, 5, 0.5));
  std::vector<EpochStats> flat;
  for (std::size_t e = 0; e < 20; ++e) flat.push_back({e, 10.0 - 0.1 * e, 0.0, 0.1});
  EXPECT_FALSE(is_converged(flat, 5, 0.5));
  auto rising = falling;
  for (std::size_t e = 15; e < 20; ++e) rising[e].loss = 3.0;
  EXPECT_FALSE(is_converged(rising, 5, 0.5));
}

// End-to-end toy setting with the full 60-epoch schedule.
class ToyRuns : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ExperimentConfig cfg;
    for (double m : {0.0, 0.1, 0.2})
      for (std::uint64_t s : {1, 2, 3}) runs_.push_back(run_experiment(cfg, s, m));
  }
  static std::vector<RunResult> runs_;
};
std::vector<RunResult> ToyRuns::runs_;

TEST_F(ToyRuns, ConvergeWithHighAccuracy) {
  for (const auto& r : runs_) {
    ASSERT_FALSE(r.diverged);
    EXPECT_TRUE(r.converged()) << "m=" << r.m << " seed=" << r.seed;
    EXPECT_GE(r.run->trace.back().accuracy, 0.99);
  }
}

TEST_F(ToyRuns, ClassMeansAlignWithWeights) {
  for (const auto& r : runs_) {
    const Matrix fn = normalized_rows(r.train_features);
    const Matrix wn = normalized_columns(r.run->model.classifier.W);
    for (std::size_t c = 0; c < 8; ++c) {
      double mx = 0.0, my = 0.0;
      for (std::size_t i = 0; i < fn.rows(); ++i) {
        if (r.train_data.labels[i] != c) continue;
        mx += fn(i, 0);
        my += fn(i, 1);
      }
      const double cosv = (mx * wn(0, c) + my * wn(1, c)) / std::hypot(mx, my);
      EXPECT_GE(cosv, 0.9) << "class " << c;
    }
  }
}

TEST_F(ToyRuns, InterClassGapGrowsWithMargin) {
  std::vector<double> med;
  for (std::size_t mi = 0; mi < 3; ++mi) {
    std::vector<double> gaps;
    for (std::size_t si = 0; si < 3; ++si) gaps.push_back(runs_[mi * 3 + si].stats.min_inter_gap);
    med.push_back(median(gaps));
  }
  EXPECT_LT(med[0], med[1]);
  EXPECT_LT(med[1], med[2]);
}

TEST(Train, LargeMarginFailsToConverge) {
  ExperimentConfig cfg;
  const RunResult r = run_experiment(cfg, 1, 0.9);
  ASSERT_FALSE(r.diverged);
  EXPECT_TRUE(!r.converged() || r.final_loss() > 0.9 * r.initial_loss());
}

}  // namespace
