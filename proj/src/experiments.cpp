#include "marginlab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <string>
#include <thread>

#include "marginlab/error.hpp"

namespace marginlab {

double RunResult::initial_loss() const {
  return run && !run->trace.empty() ? run->trace.front().loss : 0.0;
}

double RunResult::final_loss() const {
  return run && !run->trace.empty() ? run->trace.back().loss : 0.0;
}

BlobSpec dataset_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  BlobSpec spec = cfg.dataset;
  spec.seed = cfg.dataset.seed + seed;
  return spec;
}

std::vector<io::IdPair> sample_verification_pairs(const std::vector<std::size_t>& labels,
                                                  std::size_t per_type, std::uint64_t seed) {
  const std::size_t n = labels.size();
  bool has_pos = false;
  bool has_neg = false;
  for (std::size_t i = 0; i < n && !(has_pos && has_neg); ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      (labels[i] == labels[j] ? has_pos : has_neg) = true;
      if (has_pos && has_neg) break;
    }
  }
  if (!has_pos || !has_neg) {
    throw ProtocolError("cannot form both same- and different-identity pairs");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<io::IdPair> out;
  std::size_t pos = 0;
  std::size_t neg = 0;
  while (pos < per_type || neg < per_type) {
    const std::size_t a = pick(rng);
    const std::size_t b = pick(rng);
    if (a == b) continue;
    const bool same = labels[a] == labels[b];
    if (same ? pos >= per_type : neg >= per_type) continue;
    ++(same ? pos : neg);
    out.push_back({a, b});
  }
  return out;
}

RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                         std::optional<double> m) {
  RunResult r;
  r.seed = seed;
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  if (m) {
    tc.spec.variant = (*m > 0.0 || tc.spec.variant == LossVariant::Softmax) ? LossVariant::Lmcl
                                                                            : tc.spec.variant;
    tc.spec.m = *m;
  }
  r.m = tc.spec.m;

  const BlobSpec spec = dataset_for_seed(cfg, seed);
  r.train_data = generate_blobs(spec);
  MlpModel model = make_mlp(spec.input_dim, cfg.model.hidden, cfg.model.feature_dim,
                            spec.classes, seed);
  try {
    if (cfg.warm_start_epochs > 0) {
      TrainConfig warm = tc;
      warm.spec = LossSpec::softmax();
      warm.epochs = cfg.warm_start_epochs;
      warm.lr_drop_epochs.clear();
      warm.normalize_features = true;
      model = train(std::move(model), r.train_data, warm).model;
    }
    r.run = train(std::move(model), r.train_data, tc);
  } catch (const DivergenceError& e) {
    r.diverged = true;
    r.diverged_epoch = e.epoch();
    return r;
  }

  const MlpModel& trained = r.run->model;
  r.train_features = extract_features(trained, r.train_data.samples);
  try {
    r.stats = angular_stats(r.train_features, r.train_data.labels, trained.classifier);
  } catch (const DegenerateVectorError&) {
    // Collapsed features: leave stats empty, verification below still runs
    // on whatever the model produces.
  }

  r.holdout = generate_holdout(spec, cfg.eval.holdout_per_class,
                               spec.seed * 0x2545F4914F6CDD1DULL + 0x632BE59BD9B4E019ULL);
  r.holdout_features = extract_features(trained, r.holdout.samples);
  r.pairs = sample_verification_pairs(r.holdout.labels, cfg.eval.pairs_per_type, seed);

  ScoredPairs scored;
  for (const auto& p : r.pairs) {
    const auto fa = r.holdout_features.row(p.a);
    const auto fb = r.holdout_features.row(p.b);
    const bool degenerate = l2_norm(fa) == 0.0 || l2_norm(fb) == 0.0;
    scored.scores.push_back(degenerate ? 0.0 : cosine_score(fa, fb));
    scored.same.push_back(r.holdout.labels[p.a] == r.holdout.labels[p.b]);
  }
  r.verification = verification_accuracy(scored);
  for (double far : cfg.eval.far) {
    TarPoint tp{far, std::nullopt};
    try {
      tp.tar = tar_at_far(scored, far);
    } catch (const ProtocolError&) {
    }
    r.tar.push_back(tp);
  }
  return r;
}

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MARGINLAB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace marginlab
