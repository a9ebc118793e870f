#pragma once

// Theoretical quantities of the cosine-margin family and brute-force checks:
//   * the lower bound of the scale s for a desired class-center posterior P_W,
//   * the admissible range of the margin m given C classes in K dimensions,
//   * equiangular (regular simplex / uniform circle) weight configurations,
//   * decision regions of softmax, NSL, A-Softmax and LMCL for two classes.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marginlab/matrix.hpp"

namespace marginlab {

// s >= ((C-1)/C) ln((C-1) P_W / (1 - P_W)). Throws DomainError when C < 2 or
// P_W is outside (0, 1).
double s_lower_bound(std::size_t num_classes, double p_w);

enum class BoundKind { Exact, Soft };
std::string to_string(BoundKind k);

struct MarginScope {
  double m_upper = 0.0;
  BoundKind kind = BoundKind::Exact;
};

// K = 2: 1 - cos(2 pi / C), exact. K > 2: C / (C - 1), exact when C <= K + 1,
// soft (the true bound is strictly smaller and has no closed form) otherwise.
MarginScope m_scope(std::size_t num_classes, std::size_t dim);

// K x C matrix of unit columns. K = 2: C directions spaced 2 pi / C on the
// circle. K > 2: regular simplex, pairwise dots -1/(C-1), zero column sum.
// Throws ConfigError when C > K + 1 and K > 2.
Matrix simplex_weights(std::size_t num_classes, std::size_t dim);

// Throws DomainError unless every column has unit norm within tol.
void require_unit_columns(const Matrix& W, double tol = 1e-9);

double max_pairwise_dot(const Matrix& W);

struct InequalityEvidence {
  std::string description;
  double lhs = 0.0;  // the side claimed to be >= rhs
  double rhs = 0.0;
  bool satisfied = false;
};

// Checks, for unit columns W_1..W_C:
//   sum_{i != j} W_i.W_j >= -C,
//   max_{i != j} W_i.W_j >= -1/(C-1),
//   mean_{i != j} e^{s W_i.W_j} >= e^{s mean_{i != j} W_i.W_j} for each s.
// A relative slack of 1e-12 absorbs rounding at the equality configurations.
std::vector<InequalityEvidence> verify_weight_inequalities(
    const Matrix& W, std::span<const double> s_values = std::span<const double>{});

// Minimum over classes of the normalized-softmax posterior of class i for a
// feature placed exactly at W_i, with all logits s W_j.W_i.
double class_center_min_posterior(const Matrix& W, double s);

struct BoundReport {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  double p_w = 0.0;
  double s_lower = 0.0;
  MarginScope margin;
  std::optional<double> s;  // user-supplied scale
  std::optional<double> m;  // user-supplied margin
  std::optional<bool> s_satisfied;
  std::optional<bool> m_satisfied;
  // The bound exceeds the largest margin LossSpec accepts (m < 1), so part of
  // the reported range cannot be trained.
  bool m_upper_above_one = false;
  // Posterior at class centers of the simplex with s = s_lower (C <= K + 1).
  std::optional<double> simplex_posterior_at_bound;
  std::vector<InequalityEvidence> evidence;
};

BoundReport make_bound_report(std::size_t num_classes, std::size_t dim, double p_w,
                              std::optional<double> s = std::nullopt,
                              std::optional<double> m = std::nullopt);

// Random-restart projected descent on the smoothed maximum pairwise dot of C
// unit vectors in R^K. Returns the best configuration found (K x C).
struct SpreadResult {
  Matrix W;
  double max_dot = 0.0;
};
SpreadResult spread_unit_vectors(std::size_t num_classes, std::size_t dim,
                                 std::size_t restarts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Two-class decision regions.

enum class BoundaryKind { Softmax, Nsl, ASoftmax, Lmcl };
std::string to_string(BoundaryKind k);
std::optional<BoundaryKind> parse_boundary_kind(std::string_view name);

enum class Region { C1, C2, Margin, Overlap };
std::string to_string(Region r);

struct RegionParams {
  // LMCL: cosine margin m in [0, 1). A-Softmax: angular multiplier >= 1.
  double margin = 0.0;
  // Softmax only: |W1|, |W2|.
  double w1_norm = 1.0;
  double w2_norm = 1.0;
};

void validate(BoundaryKind kind, const RegionParams& params);

// Coordinates are angles (theta1, theta2) in [0, pi] for A-Softmax and cosines
// (cos theta1, cos theta2) in [-1, 1] otherwise. Inequalities are non-strict.
//
// Softmax: a class claims a point when it wins under the weight-norm rule
// |W1| cos1 >= |W2| cos2 or under the test-time cosine rule cos1 >= cos2; points
// claimed by both are the overlap (negative margin) area.
Region classify_point(BoundaryKind kind, const RegionParams& params, double u, double v);

struct RegionGrid {
  BoundaryKind kind = BoundaryKind::Lmcl;
  RegionParams params;
  std::size_t resolution = 0;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> u;  // horizontal samples (theta1 or cos theta1)
  std::vector<double> v;  // vertical samples (theta2 or cos theta2)
  std::vector<Region> labels;  // row-major: labels[row * resolution + col], row indexes v

  bool angular() const { return kind == BoundaryKind::ASoftmax; }
  double cell() const { return (hi - lo) / static_cast<double>(resolution); }
  Region at(std::size_t row, std::size_t col) const { return labels[row * resolution + col]; }
  std::size_t count(Region r) const;
};

// Samples cell centers; the vertical axis is offset by a quarter cell so no
// sample lies exactly on the diagonal u == v.
RegionGrid decision_regions(BoundaryKind kind, const RegionParams& params,
                            std::size_t resolution = 512);

// Width sqrt(2) m of the LMCL margin band measured perpendicular to the
// diagonal of the (cos theta1, cos theta2) square.
double lmcl_margin_width(double m);

// Horizontal extent of MARGIN cells in each row (axis units). Rows whose band
// touches the left or right edge report nullopt.
std::vector<std::optional<double>> margin_row_widths(const RegionGrid& grid);

// Median perpendicular band width of a cosine-space grid (horizontal extent /
// sqrt 2). Returns 0 when no interior row has a margin.
double measured_band_width(const RegionGrid& grid);

}  // namespace marginlab
