#include "marginlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "marginlab/autodiff.hpp"
#include "marginlab/error.hpp"

namespace marginlab {

void validate(const MlpModel& model) {
  if (model.weights.empty()) throw DimensionError("model has no layers");
  if (model.biases.size() != model.weights.size()) {
    throw DimensionError("model has mismatched weight/bias counts");
  }
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const Matrix& w = model.weights[l];
    if (l > 0 && model.weights[l - 1].cols() != w.rows()) {
      throw DimensionError("layer " + std::to_string(l) + " expects " +
                           std::to_string(w.rows()) + " inputs, previous layer gives " +
                           std::to_string(model.weights[l - 1].cols()));
    }
    if (model.biases[l].rows() != 1 || model.biases[l].cols() != w.cols()) {
      throw DimensionError("bias of layer " + std::to_string(l) + " has wrong shape");
    }
  }
  if (model.feature_dim() < 2) throw DimensionError("feature dimension must be >= 2");
  if (model.classifier.W.rows() != model.feature_dim()) {
    throw DimensionError("class weights expect " + std::to_string(model.classifier.W.rows()) +
                         "-dim features, model produces " +
                         std::to_string(model.feature_dim()));
  }
}

MlpModel make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t feature_dim, std::size_t num_classes, std::uint64_t seed) {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (feature_dim < 2) throw ConfigError("feature_dim must be >= 2");
  if (num_classes < 2) throw ConfigError("need at least 2 classes");
  std::mt19937_64 rng(seed);
  MlpModel model;
  std::vector<std::size_t> widths = {input_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(feature_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l + 1] < 1) throw ConfigError("hidden widths must be >= 1");
    const double bound = std::sqrt(6.0 / static_cast<double>(widths[l]));
    std::uniform_real_distribution<double> uni(-bound, bound);
    Matrix w(widths[l], widths[l + 1]);
    for (auto& v : w.data()) v = uni(rng);
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(1, widths[l + 1]);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix cw(feature_dim, num_classes);
  for (auto& v : cw.data()) v = normal(rng);
  model.classifier.W = normalized_columns(cw);
  return model;
}

void validate(const TrainConfig& cfg) {
  validate(cfg.spec);
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(cfg.lr_drop_factor > 0.0)) throw ConfigError("lr_drop_factor must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (!(cfg.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (cfg.convergence_window < 1) throw ConfigError("convergence_window must be >= 1");
}

namespace {

struct Params {
  std::vector<ad::NodeId> weights;
  std::vector<ad::NodeId> biases;
  ad::NodeId classifier;
};

ad::NodeId forward_features(ad::Graph& g, const Params& p, ad::NodeId x) {
  ad::NodeId h = x;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    h = ad::add_row_broadcast(g, ad::matmul(g, h, p.weights[l]), p.biases[l]);
    if (l + 1 < p.weights.size()) h = ad::relu(g, h);
  }
  return h;
}

// Every trainable matrix in a fixed order, for the optimizer.
std::vector<Matrix*> parameters(MlpModel& m) {
  std::vector<Matrix*> out;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    out.push_back(&m.weights[l]);
    out.push_back(&m.biases[l]);
  }
  out.push_back(&m.classifier.W);
  return out;
}

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.learning_rate;
  for (std::size_t drop : cfg.lr_drop_epochs)
    if (epoch >= drop) lr *= cfg.lr_drop_factor;
  return lr;
}

}  // namespace

bool is_converged(const std::vector<EpochStats>& trace, std::size_t window, double ratio) {
  if (trace.empty() || window == 0) return false;
  const auto window_mean = [&](std::size_t end) {
    const std::size_t begin = end >= window ? end - window : 0;
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += trace[i].loss;
    return s / static_cast<double>(end - begin);
  };
  const double last = window_mean(trace.size());
  if (!std::isfinite(last) || !(last < ratio * trace.front().loss)) return false;
  if (trace.size() >= 2 * window) {
    const double previous = window_mean(trace.size() - window);
    // Allow mini-batch noise of 1% when comparing plateaued windows.
    if (last > previous * 1.01 + 1e-9) return false;
  }
  return true;
}

TrainRun train(MlpModel model, const SyntheticDataset& data, const TrainConfig& cfg) {
  validate(model);
  validate(cfg);
  if (data.samples.cols() != model.input_dim()) {
    throw DimensionError("dataset has " + std::to_string(data.samples.cols()) +
                         " input columns, model expects " + std::to_string(model.input_dim()));
  }
  if (data.classes != model.num_classes()) {
    throw DimensionError("dataset has " + std::to_string(data.classes) +
                         " classes, model has " + std::to_string(model.num_classes()));
  }
  const std::size_t n = data.samples.rows();
  if (n == 0) throw DimensionError("empty dataset");
  const FeatureScale scaling = cfg.normalize_features ? FeatureScale::Fixed : FeatureScale::Learned;

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  auto params = parameters(model);
  std::vector<Matrix> velocity;
  for (const Matrix* p : params) velocity.emplace_back(p->rows(), p->cols());

  TrainRun run;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      Matrix xb(end - start, data.samples.cols());
      std::vector<std::size_t> yb(end - start);
      for (std::size_t i = start; i < end; ++i) {
        std::copy_n(data.samples.row(order[i]).begin(), data.samples.cols(),
                    xb.row(i - start).begin());
        yb[i - start] = data.labels[order[i]];
      }

      ad::Graph g;
      Params p;
      for (std::size_t l = 0; l < model.weights.size(); ++l) {
        p.weights.push_back(g.variable(model.weights[l]));
        p.biases.push_back(g.variable(model.biases[l]));
      }
      p.classifier = g.variable(model.classifier.W);
      const auto features = forward_features(g, p, g.variable(std::move(xb)));
      const auto loss = build_loss(g, features, p.classifier, yb, cfg.spec, scaling).loss;
      const double value = g.value(loss)[0];
      if (!std::isfinite(value)) {
        throw DivergenceError(epoch, "training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch));
      }
      loss_sum += value * static_cast<double>(end - start);
      g.backward(loss);

      std::vector<ad::NodeId> ids;
      for (std::size_t l = 0; l < model.weights.size(); ++l) {
        ids.push_back(p.weights[l]);
        ids.push_back(p.biases[l]);
      }
      ids.push_back(p.classifier);
      for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& param = *params[k];
        Matrix& vel = velocity[k];
        const Matrix& grad = g.grad(ids[k]);
        for (std::size_t e = 0; e < param.size(); ++e) {
          const double step = grad[e] + cfg.weight_decay * param[e];
          vel[e] = cfg.momentum * vel[e] + step;
          param[e] -= lr * vel[e];
        }
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(epoch_loss) || !model.classifier.W.all_finite()) {
      throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch));
    }
    const double acc = accuracy(predict(model, data.samples, cfg.spec.variant), data.labels);
    run.trace.push_back({epoch, epoch_loss, acc, lr});
  }
  run.converged = is_converged(run.trace, cfg.convergence_window, cfg.convergence_ratio);
  run.model = std::move(model);
  return run;
}

Matrix extract_features(const MlpModel& model, const Matrix& inputs) {
  validate(model);
  if (inputs.cols() != model.input_dim()) {
    throw DimensionError("inputs have " + std::to_string(inputs.cols()) +
                         " columns, model expects " + std::to_string(model.input_dim()));
  }
  Matrix h = inputs;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    h = matmul(h, model.weights[l]);
    for (std::size_t r = 0; r < h.rows(); ++r)
      for (std::size_t c = 0; c < h.cols(); ++c) h(r, c) += model.biases[l][c];
    if (l + 1 < model.weights.size())
      for (auto& v : h.data()) v = std::max(v, 0.0);
  }
  return h;
}

std::vector<std::size_t> predict(const MlpModel& model, const Matrix& inputs,
                                 LossVariant variant) {
  const Matrix f = extract_features(model, inputs);
  Matrix scores;
  if (variant == LossVariant::Softmax) {
    scores = matmul(f, model.classifier.W);
  } else {
    // Rows with zero norm cannot be scored by angle; fall back to raw logits.
    Matrix fn = f;
    for (std::size_t r = 0; r < fn.rows(); ++r) {
      const double norm = l2_norm(fn.row(r));
      if (norm > 0.0)
        for (auto& v : fn.row(r)) v /= norm;
    }
    scores = matmul(fn, normalized_columns(model.classifier.W));
  }
  std::vector<std::size_t> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& labels) {
  if (predicted.size() != labels.size() || labels.empty()) {
    throw DimensionError("accuracy: size mismatch");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

namespace {

double safe_angle(double cosine) { return std::acos(std::clamp(cosine, -1.0, 1.0)); }

}  // namespace

AngularStats angular_stats(const Matrix& features, const std::vector<std::size_t>& labels,
                           const ClassWeights& weights) {
  if (labels.size() != features.rows()) throw DimensionError("angular_stats: label count");
  if (features.cols() != weights.W.rows()) {
    throw DimensionError("angular_stats: feature dim does not match weights");
  }
  const std::size_t C = weights.W.cols();
  for (std::size_t y : labels)
    if (y >= C) throw DomainError("angular_stats: label out of range");
  const Matrix x = normalized_rows(features);
  const Matrix w = normalized_columns(weights.W);

  std::vector<double> spread(C, 0.0);
  std::vector<std::size_t> count(C, 0);
  // Largest cosine between a member of class c and any sample of another class.
  std::vector<double> nearest(C, -1.0);
  bool any_pair = false;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t c = labels[i];
    double d = 0.0;
    for (std::size_t k = 0; k < x.cols(); ++k) d += x(i, k) * w(k, c);
    spread[c] += safe_angle(d);
    ++count[c];
    for (std::size_t j = i + 1; j < x.rows(); ++j) {
      if (labels[j] == c) continue;
      const double cij = dot(x.row(i), x.row(j));
      nearest[c] = std::max(nearest[c], cij);
      nearest[labels[j]] = std::max(nearest[labels[j]], cij);
      any_pair = true;
    }
  }

  AngularStats out;
  out.min_inter_gap = std::numbers::pi;
  double spread_total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    if (count[c] == 0) continue;
    ClassAngularStats s;
    s.label = c;
    s.count = count[c];
    s.intra_spread = spread[c] / static_cast<double>(count[c]);
    s.inter_gap = any_pair ? safe_angle(nearest[c]) : std::numbers::pi;
    out.min_inter_gap = std::min(out.min_inter_gap, s.inter_gap);
    spread_total += s.intra_spread;
    out.per_class.push_back(s);
  }
  if (!out.per_class.empty()) {
    out.mean_intra_spread = spread_total / static_cast<double>(out.per_class.size());
  }
  return out;
}

}  // namespace marginlab
