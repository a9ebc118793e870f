#pragma once

// JSON experiment configuration shared by the train / toy2d / msweep commands.
//
// Every section and field is optional; omitted values take the toy defaults
// (8 classes, 2-D features, s = 30). Unknown keys and wrongly typed values are
// rejected with the dotted path of the offending field.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "marginlab/dataset.hpp"
#include "marginlab/trainer.hpp"

namespace marginlab {

struct ModelConfig {
  std::vector<std::size_t> hidden = {64};
  std::size_t feature_dim = 2;
};

struct EvalConfig {
  std::size_t holdout_per_class = 50;
  std::size_t pairs_per_type = 2000;
  std::vector<double> far = {0.01, 0.001};
};

struct ExperimentConfig {
  BlobSpec dataset{.classes = 8, .per_class = 200, .input_dim = 8, .dispersion = 0.1,
                   .center_scale = 1.0, .seed = 0};
  ModelConfig model;
  TrainConfig train;
  // Epochs of plain softmax pretraining before the main loss (0 = off).
  std::size_t warm_start_epochs = 0;
  EvalConfig eval;
  std::vector<double> m_grid = {0.0, 0.1, 0.2};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::filesystem::path output_dir = "out";
};

ExperimentConfig default_experiment_config();

// Throws ConfigError naming the field path ("loss.m", "train.epochs", ...).
ExperimentConfig parse_experiment_config(const nlohmann::ordered_json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Fully resolved config, suitable for embedding in reports.
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

// Semantic checks on a parsed config (also run by the parser).
void validate(const ExperimentConfig& cfg);

}  // namespace marginlab
