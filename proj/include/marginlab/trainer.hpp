#pragma once

// MLP feature extractor + cosine classifier trained by mini-batch SGD.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/margin_losses.hpp"
#include "marginlab/matrix.hpp"

namespace marginlab {

// input -> [hidden, relu]* -> K-dim linear feature layer -> class weights.
struct MlpModel {
  std::vector<Matrix> weights;  // layer l: fan_in x fan_out
  std::vector<Matrix> biases;   // layer l: 1 x fan_out
  ClassWeights classifier;      // K x C

  std::size_t input_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  std::size_t feature_dim() const { return weights.empty() ? 0 : weights.back().cols(); }
  std::size_t num_classes() const { return classifier.W.cols(); }
};

// Throws DimensionError if consecutive layer shapes disagree or K < 2.
void validate(const MlpModel& model);

// Fan-in scaled uniform layers (bound sqrt(6 / fan_in)), zero biases, class
// weights along random unit directions.
MlpModel make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t feature_dim, std::size_t num_classes, std::uint64_t seed);

struct TrainConfig {
  LossSpec spec;
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  std::vector<std::size_t> lr_drop_epochs = {30, 45};  // lr *= lr_drop_factor at each
  double lr_drop_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  bool normalize_features = true;
  // A run is converged when the mean loss over the last window is below
  // convergence_ratio times the first-epoch loss and did not rise compared
  // to the window before it.
  std::size_t convergence_window = 5;
  double convergence_ratio = 0.5;
};

void validate(const TrainConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double learning_rate = 0.0;
};

struct TrainRun {
  MlpModel model;
  std::vector<EpochStats> trace;
  bool converged = false;
};

// Deterministic given (model, data, cfg). Throws DivergenceError carrying the
// epoch index on a non-finite loss.
TrainRun train(MlpModel model, const SyntheticDataset& data, const TrainConfig& cfg);

bool is_converged(const std::vector<EpochStats>& trace, std::size_t window, double ratio);

// Forward pass up to the feature layer, no normalization.
Matrix extract_features(const MlpModel& model, const Matrix& inputs);

// Class predictions: argmax of raw logits for softmax models, argmax of
// cosines otherwise.
std::vector<std::size_t> predict(const MlpModel& model, const Matrix& inputs,
                                 LossVariant variant);
double accuracy(const std::vector<std::size_t>& predicted,
                const std::vector<std::size_t>& labels);

struct ClassAngularStats {
  std::size_t label = 0;
  std::size_t count = 0;
  double intra_spread = 0.0;  // mean angle (rad) between members and their class weight
  double inter_gap = 0.0;     // min angle (rad) between a member and any other-class sample
};

struct AngularStats {
  std::vector<ClassAngularStats> per_class;
  double min_inter_gap = 0.0;
  double mean_intra_spread = 0.0;
};

// Angles are measured on L2-normalized features and weight columns. Classes
// with no samples are skipped. Throws DegenerateVectorError on a zero feature.
AngularStats angular_stats(const Matrix& features, const std::vector<std::size_t>& labels,
                           const ClassWeights& weights);

}  // namespace marginlab
