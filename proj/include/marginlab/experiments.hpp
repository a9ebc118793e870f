#pragma once

// One seeded experiment run (dataset -> optional softmax warm start -> train ->
// angular stats -> held-out verification), plus seed/m-grid fan-out.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "marginlab/eval_metrics.hpp"
#include "marginlab/experiment_config.hpp"
#include "marginlab/io.hpp"
#include "marginlab/trainer.hpp"

namespace marginlab {

struct TarPoint {
  double far = 0.0;
  std::optional<double> tar;  // nullopt when the FAR is infeasible for the pair count
};

struct RunResult {
  std::uint64_t seed = 0;
  double m = 0.0;
  bool diverged = false;
  std::optional<std::size_t> diverged_epoch;
  std::optional<TrainRun> run;
  SyntheticDataset train_data;
  Matrix train_features;
  AngularStats stats;
  SyntheticDataset holdout;
  Matrix holdout_features;
  std::vector<io::IdPair> pairs;
  VerificationResult verification;
  std::vector<TarPoint> tar;

  bool converged() const { return !diverged && run && run->converged; }
  double initial_loss() const;
  double final_loss() const;
};

// Dataset seed for a run seed: dataset.seed + seed.
BlobSpec dataset_for_seed(const ExperimentConfig& cfg, std::uint64_t seed);

// Balanced random same/different pairs over row indices. Throws ProtocolError
// when no positive or no negative pair exists.
std::vector<io::IdPair> sample_verification_pairs(const std::vector<std::size_t>& labels,
                                                  std::size_t per_type, std::uint64_t seed);

// The configured loss with m replaced by `m` (variant forced to LMCL when m > 0).
RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                         std::optional<double> m = std::nullopt);

// Worker count from MARGINLAB_THREADS (unset or invalid: hardware concurrency).
std::size_t worker_count();

// Runs task(i) for i in [0, n) on up to worker_count() threads. Results land
// at their own index, so output order never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task);

double median(std::vector<double> values);

}  // namespace marginlab
