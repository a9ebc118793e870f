#pragma once

// Softmax, normalized softmax (NSL) and large margin cosine (LMCL) losses,
// expressed on the autodiff tape.
//
// Shapes: features are N x K (one sample per row), class weights are K x C
// (one class per column). For NSL and LMCL both are L2-normalized before the
// product, so logits are s * cos(theta), with the margin m subtracted from the
// ground-truth cosine only:
//
//   L = mean_i -log( e^{s(cos_yi - m)} / (e^{s(cos_yi - m)} + sum_{j != yi} e^{s cos_j}) )

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marginlab/autodiff.hpp"
#include "marginlab/matrix.hpp"

namespace marginlab {

enum class LossVariant { Softmax, Nsl, Lmcl };

std::string to_string(LossVariant v);
std::optional<LossVariant> parse_loss_variant(std::string_view name);

struct LossSpec {
  LossVariant variant = LossVariant::Lmcl;
  double s = 30.0;  // hypersphere radius, fixed
  double m = 0.0;   // cosine margin, LMCL only

  static LossSpec softmax() { return {LossVariant::Softmax, 1.0, 0.0}; }
  static LossSpec nsl(double s) { return {LossVariant::Nsl, s, 0.0}; }
  static LossSpec lmcl(double s, double m) { return {LossVariant::Lmcl, s, m}; }
};

// Throws ConfigError if s <= 0 (normalized variants), m != 0 outside LMCL, or
// m outside [0, 1).
void validate(const LossSpec& spec);

struct Batch {
  Matrix features;                  // N x K, before normalization
  std::vector<std::size_t> labels;  // N entries in [0, num_classes)
  std::size_t num_classes = 0;
};

void validate(const Batch& batch);

struct ClassWeights {
  Matrix W;  // K x C raw weights
};

// How feature norms enter the normalized losses. Fixed is the standard
// hypersphere scheme (every feature rescaled to norm s). Learned keeps the raw
// feature norm as the scale, i.e. logits |x| (cos - m), which is the "without
// feature normalization" ablation. Weights are normalized in both modes.
enum class FeatureScale { Fixed, Learned };

struct LossNodes {
  ad::NodeId logits;
  ad::NodeId loss;  // 1 x 1
};

LossNodes build_loss(ad::Graph& g, ad::NodeId features, ad::NodeId weights,
                     std::span<const std::size_t> labels, const LossSpec& spec,
                     FeatureScale scale = FeatureScale::Fixed, double eps = 1e-12);

// Cosine matrix (N x C) between normalized feature rows and weight columns.
ad::NodeId cosine_logits(ad::Graph& g, ad::NodeId features, ad::NodeId weights,
                         double eps = 1e-12);

ad::NodeId softmax_loss(ad::Graph& g, const Batch& batch, const ClassWeights& weights);
ad::NodeId nsl_loss(ad::Graph& g, const Batch& batch, const ClassWeights& weights,
                    const LossSpec& spec);
ad::NodeId lmcl_loss(ad::Graph& g, const Batch& batch, const ClassWeights& weights,
                     const LossSpec& spec);

// Convenience: loss value without keeping the graph around.
double loss_value(const LossSpec& spec, const Batch& batch, const ClassWeights& weights);

struct LossGradients {
  double loss = 0.0;
  Matrix d_features;  // N x K
  Matrix d_weights;   // K x C
};

LossGradients loss_gradients(const LossSpec& spec, const Batch& batch,
                             const ClassWeights& weights);

}  // namespace marginlab
