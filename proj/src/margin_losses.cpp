#include "marginlab/margin_losses.hpp"

#include <cmath>

#include "marginlab/error.hpp"

namespace marginlab {

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::Softmax:
      return "SOFTMAX";
    case LossVariant::Nsl:
      return "NSL";
    case LossVariant::Lmcl:
      return "LMCL";
  }
  return "?";
}

std::optional<LossVariant> parse_loss_variant(std::string_view name) {
  if (name == "SOFTMAX" || name == "softmax") return LossVariant::Softmax;
  if (name == "NSL" || name == "nsl") return LossVariant::Nsl;
  if (name == "LMCL" || name == "lmcl") return LossVariant::Lmcl;
  return std::nullopt;
}

void validate(const LossSpec& spec) {
  if (spec.variant != LossVariant::Softmax && !(spec.s > 0.0 && std::isfinite(spec.s))) {
    throw ConfigError("s must be positive and finite, got " + std::to_string(spec.s));
  }
  if (spec.variant != LossVariant::Lmcl && spec.m != 0.0) {
    throw ConfigError("m must be 0 for " + to_string(spec.variant));
  }
  if (!(spec.m >= 0.0 && spec.m < 1.0)) {
    throw ConfigError("m must lie in [0, 1), got " + std::to_string(spec.m));
  }
}

void validate(const Batch& batch) {
  if (batch.features.rows() == 0) throw DimensionError("batch is empty");
  if (batch.labels.size() != batch.features.rows()) {
    throw DimensionError("batch has " + std::to_string(batch.labels.size()) + " labels for " +
                         std::to_string(batch.features.rows()) + " feature rows");
  }
  for (std::size_t y : batch.labels) {
    if (y >= batch.num_classes) {
      throw DomainError("label " + std::to_string(y) + " >= class count " +
                        std::to_string(batch.num_classes));
    }
  }
}

ad::NodeId cosine_logits(ad::Graph& g, ad::NodeId features, ad::NodeId weights, double eps) {
  const Matrix& x = g.value(features);
  const Matrix& w = g.value(weights);
  if (x.cols() != w.rows()) {
    throw DimensionError("feature dim " + std::to_string(x.cols()) + " vs weight rows " +
                         std::to_string(w.rows()));
  }
  const auto xn = ad::row_l2_normalize(g, features, eps);
  const auto wn = ad::transpose(g, ad::row_l2_normalize(g, ad::transpose(g, weights), eps));
  return ad::matmul(g, xn, wn);
}

LossNodes build_loss(ad::Graph& g, ad::NodeId features, ad::NodeId weights,
                     std::span<const std::size_t> labels, const LossSpec& spec,
                     FeatureScale scale, double eps) {
  validate(spec);
  if (spec.variant == LossVariant::Softmax) {
    const Matrix& x = g.value(features);
    const Matrix& w = g.value(weights);
    if (x.cols() != w.rows()) {
      throw DimensionError("feature dim " + std::to_string(x.cols()) + " vs weight rows " +
                           std::to_string(w.rows()));
    }
    const auto logits = ad::matmul(g, features, weights);
    return {logits, ad::softmax_cross_entropy(g, logits, labels)};
  }

  auto cos = cosine_logits(g, features, weights, eps);
  if (spec.m != 0.0) {
    const Matrix& c = g.value(cos);
    Matrix offset(c.rows(), c.cols());
    for (std::size_t r = 0; r < c.rows(); ++r) {
      if (labels[r] >= c.cols()) throw DomainError("label out of range");
      offset(r, labels[r]) = -spec.m;
    }
    cos = ad::add_constant(g, cos, offset);
  }
  const auto logits = scale == FeatureScale::Fixed
                          ? ad::scale(g, cos, spec.s)
                          : ad::mul_col_broadcast(g, cos, ad::row_l2_norm(g, features));
  return {logits, ad::softmax_cross_entropy(g, logits, labels)};
}

namespace {

ad::NodeId batch_loss(ad::Graph& g, const Batch& batch, const ClassWeights& weights,
                      const LossSpec& spec) {
  validate(batch);
  if (weights.W.cols() != batch.num_classes) {
    throw DimensionError("weights have " + std::to_string(weights.W.cols()) +
                         " columns for " + std::to_string(batch.num_classes) + " classes");
  }
  const auto x = g.variable(batch.features);
  const auto w = g.variable(weights.W);
  return build_loss(g, x, w, batch.labels, spec).loss;
}

}  // namespace

ad::NodeId softmax_loss(ad::Graph& g, const Batch& batch, const ClassWeights& weights) {
  return batch_loss(g, batch, weights, LossSpec::softmax());
}

ad::NodeId nsl_loss(ad::Graph& g, const Batch& batch, const ClassWeights& weights,
                    const LossSpec& spec) {
  if (spec.variant != LossVariant::Nsl) throw ConfigError("nsl_loss requires variant NSL");
  return batch_loss(g, batch, weights, spec);
}

ad::NodeId lmcl_loss(ad::Graph& g, const Batch& batch, const ClassWeights& weights,
                     const LossSpec& spec) {
  if (spec.variant != LossVariant::Lmcl) throw ConfigError("lmcl_loss requires variant LMCL");
  return batch_loss(g, batch, weights, spec);
}

double loss_value(const LossSpec& spec, const Batch& batch, const ClassWeights& weights) {
  ad::Graph g;
  return g.value(batch_loss(g, batch, weights, spec))[0];
}

LossGradients loss_gradients(const LossSpec& spec, const Batch& batch,
                             const ClassWeights& weights) {
  validate(batch);
  ad::Graph g;
  const auto x = g.variable(batch.features);
  const auto w = g.variable(weights.W);
  const auto loss = build_loss(g, x, w, batch.labels, spec).loss;
  g.backward(loss);
  return {g.value(loss)[0], g.grad(x), g.grad(w)};
}

}  // namespace marginlab
