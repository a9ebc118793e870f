#include "marginlab/bound_geometry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

#include "marginlab/error.hpp"

namespace marginlab {

double s_lower_bound(std::size_t num_classes, double p_w) {
  if (num_classes < 2) throw DomainError("s_lower_bound: need at least 2 classes");
  if (!(p_w > 0.0 && p_w < 1.0)) {
    throw DomainError("s_lower_bound: P_W must lie in (0, 1), got " + std::to_string(p_w));
  }
  const double c = static_cast<double>(num_classes);
  return (c - 1.0) / c * std::log((c - 1.0) * p_w / (1.0 - p_w));
}

std::string to_string(BoundKind k) { return k == BoundKind::Exact ? "EXACT" : "SOFT"; }

MarginScope m_scope(std::size_t num_classes, std::size_t dim) {
  if (num_classes < 2) throw DomainError("m_scope: need at least 2 classes");
  if (dim < 2) throw DomainError("m_scope: feature dimension must be >= 2");
  const double c = static_cast<double>(num_classes);
  if (dim == 2) return {1.0 - std::cos(2.0 * std::numbers::pi / c), BoundKind::Exact};
  return {c / (c - 1.0), num_classes <= dim + 1 ? BoundKind::Exact : BoundKind::Soft};
}

Matrix simplex_weights(std::size_t num_classes, std::size_t dim) {
  if (num_classes < 2) throw DomainError("simplex_weights: need at least 2 classes");
  if (dim < 2) throw DomainError("simplex_weights: feature dimension must be >= 2");
  Matrix W(dim, num_classes);
  if (dim == 2) {
    for (std::size_t i = 0; i < num_classes; ++i) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(i) /
                       static_cast<double>(num_classes);
      W(0, i) = std::cos(a);
      W(1, i) = std::sin(a);
    }
    return W;
  }
  if (num_classes > dim + 1) {
    throw ConfigError("simplex_weights: a regular simplex of " + std::to_string(num_classes) +
                      " vertices does not fit in " + std::to_string(dim) + " dimensions");
  }
  // Vertex i is e_i - (1/C) 1 expressed in the Helmert basis of the subspace
  // orthogonal to 1, rescaled to unit length.
  const double c = static_cast<double>(num_classes);
  const double unit = std::sqrt(c / (c - 1.0));
  for (std::size_t k = 1; k < num_classes; ++k) {
    const double kk = static_cast<double>(k);
    const double norm = std::sqrt(kk * (kk + 1.0));
    for (std::size_t i = 0; i < k; ++i) W(k - 1, i) = unit / norm;
    W(k - 1, k) = -kk * unit / norm;
  }
  return W;
}

void require_unit_columns(const Matrix& W, double tol) {
  for (std::size_t j = 0; j < W.cols(); ++j) {
    double n2 = 0.0;
    for (std::size_t r = 0; r < W.rows(); ++r) n2 += W(r, j) * W(r, j);
    if (std::abs(std::sqrt(n2) - 1.0) > tol) {
      throw DomainError("weight column " + std::to_string(j) + " is not unit norm");
    }
  }
}

namespace {

Matrix gram(const Matrix& W) { return matmul(W.transposed(), W); }

}  // namespace

double max_pairwise_dot(const Matrix& W) {
  if (W.cols() < 2) throw DomainError("max_pairwise_dot: need at least 2 columns");
  const Matrix G = gram(W);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < G.rows(); ++i)
    for (std::size_t j = 0; j < G.cols(); ++j)
      if (i != j) best = std::max(best, G(i, j));
  return best;
}

std::vector<InequalityEvidence> verify_weight_inequalities(const Matrix& W,
                                                           std::span<const double> s_values) {
  static constexpr double kDefaultScales[] = {1.0, 8.0, 64.0};
  if (s_values.empty()) s_values = kDefaultScales;
  if (W.cols() < 2) throw DomainError("verify_weight_inequalities: need at least 2 columns");
  require_unit_columns(W);

  const std::size_t C = W.cols();
  const double c = static_cast<double>(C);
  const Matrix G = gram(W);
  double dot_sum = 0.0;
  double max_dot = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < C; ++i) {
    for (std::size_t j = 0; j < C; ++j) {
      if (i == j) continue;
      dot_sum += G(i, j);
      max_dot = std::max(max_dot, G(i, j));
    }
  }
  const auto holds = [](double lhs, double rhs) {
    return lhs >= rhs - 1e-12 * std::max(1.0, std::abs(rhs));
  };

  std::vector<InequalityEvidence> out;
  out.push_back({"sum_{i!=j} Wi.Wj >= -C", dot_sum, -c, holds(dot_sum, -c)});
  out.push_back({"max_{i!=j} Wi.Wj >= -1/(C-1)", max_dot, -1.0 / (c - 1.0),
                 holds(max_dot, -1.0 / (c - 1.0))});

  const double pairs = c * (c - 1.0);
  for (double s : s_values) {
    double mean_exp = 0.0;
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t j = 0; j < C; ++j)
        if (i != j) mean_exp += std::exp(s * G(i, j));
    mean_exp /= pairs;
    const double exp_mean = std::exp(s * dot_sum / pairs);
    char label[96];
    std::snprintf(label, sizeof label, "Jensen: mean e^{s Wi.Wj} >= e^{s mean Wi.Wj} at s=%g", s);
    out.push_back({label,
                   mean_exp, exp_mean, holds(mean_exp, exp_mean)});
  }
  return out;
}

double class_center_min_posterior(const Matrix& W, double s) {
  const Matrix G = gram(W);
  double worst = 1.0;
  for (std::size_t i = 0; i < G.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < G.cols(); ++j) mx = std::max(mx, s * G(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < G.cols(); ++j) denom += std::exp(s * G(i, j) - mx);
    worst = std::min(worst, std::exp(s * G(i, i) - mx) / denom);
  }
  return worst;
}

BoundReport make_bound_report(std::size_t num_classes, std::size_t dim, double p_w,
                              std::optional<double> s, std::optional<double> m) {
  BoundReport r;
  r.num_classes = num_classes;
  r.dim = dim;
  r.p_w = p_w;
  r.s_lower = s_lower_bound(num_classes, p_w);
  r.margin = m_scope(num_classes, dim);
  r.m_upper_above_one = r.margin.m_upper >= 1.0;
  r.s = s;
  r.m = m;
  if (s) r.s_satisfied = *s >= r.s_lower;
  if (m) r.m_satisfied = *m >= 0.0 && *m <= r.margin.m_upper;
  if (dim == 2 || num_classes <= dim + 1) {
    const Matrix W = simplex_weights(num_classes, dim);
    if (num_classes <= dim + 1) {
      r.simplex_posterior_at_bound = class_center_min_posterior(W, r.s_lower);
    }
    std::vector<double> scales = {1.0, 8.0, 64.0};
    if (s) scales.push_back(*s);
    r.evidence = verify_weight_inequalities(W, scales);
  }
  return r;
}

SpreadResult spread_unit_vectors(std::size_t num_classes, std::size_t dim,
                                 std::size_t restarts, std::uint64_t seed) {
  if (num_classes < 2 || dim < 2) throw DomainError("spread_unit_vectors: C, K must be >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t C = num_classes;

  SpreadResult best{Matrix{}, std::numeric_limits<double>::infinity()};
  for (std::size_t attempt = 0; attempt < std::max<std::size_t>(restarts, 1); ++attempt) {
    // Rows are the vectors during the search.
    Matrix X(C, dim);
    for (auto& v : X.data()) v = normal(rng);
    X = normalized_rows(X);

    for (double beta : {5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0}) {
      for (int iter = 0; iter < 400; ++iter) {
        // Gradient of (1/beta) log sum_{i<j} exp(beta xi.xj).
        const Matrix G = matmul(X, X.transposed());
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < C; ++i)
          for (std::size_t j = i + 1; j < C; ++j) mx = std::max(mx, G(i, j));
        Matrix weight(C, C);
        double z = 0.0;
        for (std::size_t i = 0; i < C; ++i) {
          for (std::size_t j = i + 1; j < C; ++j) {
            const double e = std::exp(beta * (G(i, j) - mx));
            weight(i, j) = weight(j, i) = e;
            z += e;
          }
        }
        Matrix grad = (1.0 / z) * matmul(weight, X);
        // Keep only the tangential part; the radial part is undone by the
        // projection anyway and makes simultaneous updates oscillate.
        for (std::size_t i = 0; i < C; ++i) {
          const double radial = dot(grad.row(i), X.row(i));
          for (std::size_t d = 0; d < dim; ++d) grad(i, d) -= radial * X(i, d);
        }
        X = normalized_rows(X - (0.5 / (1.0 + 0.1 * beta)) * grad);
        const double md = max_pairwise_dot(X.transposed());
        if (md < best.max_dot) best = {X.transposed(), md};
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

std::string to_string(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::Softmax:
      return "SOFTMAX";
    case BoundaryKind::Nsl:
      return "NSL";
    case BoundaryKind::ASoftmax:
      return "ASOFTMAX";
    case BoundaryKind::Lmcl:
      return "LMCL";
  }
  return "?";
}

std::optional<BoundaryKind> parse_boundary_kind(std::string_view name) {
  std::string up(name);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char ch) {
    return static_cast<char>(std::toupper(ch));
  });
  if (up == "SOFTMAX") return BoundaryKind::Softmax;
  if (up == "NSL") return BoundaryKind::Nsl;
  if (up == "ASOFTMAX" || up == "A-SOFTMAX") return BoundaryKind::ASoftmax;
  if (up == "LMCL") return BoundaryKind::Lmcl;
  return std::nullopt;
}

std::string to_string(Region r) {
  switch (r) {
    case Region::C1:
      return "C1";
    case Region::C2:
      return "C2";
    case Region::Margin:
      return "MARGIN";
    case Region::Overlap:
      return "OVERLAP";
  }
  return "?";
}

void validate(BoundaryKind kind, const RegionParams& p) {
  switch (kind) {
    case BoundaryKind::Lmcl:
      if (!(p.margin >= 0.0 && p.margin < 1.0)) {
        throw ConfigError("LMCL margin m must lie in [0, 1)");
      }
      break;
    case BoundaryKind::ASoftmax:
      if (!(p.margin >= 1.0 && std::isfinite(p.margin))) {
        throw ConfigError("A-Softmax multiplier must be >= 1");
      }
      break;
    case BoundaryKind::Softmax:
      if (!(p.w1_norm > 0.0 && p.w2_norm > 0.0)) {
        throw ConfigError("softmax weight norms must be positive");
      }
      break;
    case BoundaryKind::Nsl:
      break;
  }
}

namespace {

Region combine(bool first, bool second) {
  if (first && second) return Region::Overlap;
  if (first) return Region::C1;
  if (second) return Region::C2;
  return Region::Margin;
}

}  // namespace

Region classify_point(BoundaryKind kind, const RegionParams& p, double u, double v) {
  switch (kind) {
    case BoundaryKind::Softmax: {
      const bool norm_rule_1 = p.w1_norm * u >= p.w2_norm * v;
      const bool norm_rule_2 = p.w2_norm * v >= p.w1_norm * u;
      return combine(norm_rule_1 || u >= v, norm_rule_2 || v >= u);
    }
    case BoundaryKind::Nsl:
      return combine(u >= v, v >= u);
    case BoundaryKind::Lmcl:
      return combine(u >= v + p.margin, v >= u + p.margin);
    case BoundaryKind::ASoftmax:
      return combine(std::cos(p.margin * u) >= std::cos(v), std::cos(p.margin * v) >= std::cos(u));
  }
  return Region::Margin;
}

std::size_t RegionGrid::count(Region r) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), r));
}

RegionGrid decision_regions(BoundaryKind kind, const RegionParams& params,
                            std::size_t resolution) {
  if (resolution < 2) throw ConfigError("grid resolution must be >= 2");
  validate(kind, params);
  RegionGrid grid;
  grid.kind = kind;
  grid.params = params;
  grid.resolution = resolution;
  grid.lo = grid.angular() ? 0.0 : -1.0;
  grid.hi = grid.angular() ? std::numbers::pi : 1.0;
  const double h = grid.cell();
  grid.u.resize(resolution);
  grid.v.resize(resolution);
  for (std::size_t i = 0; i < resolution; ++i) {
    grid.u[i] = grid.lo + (static_cast<double>(i) + 0.5) * h;
    grid.v[i] = grid.lo + (static_cast<double>(i) + 0.25) * h;
  }
  grid.labels.resize(resolution * resolution);
  for (std::size_t row = 0; row < resolution; ++row)
    for (std::size_t col = 0; col < resolution; ++col)
      grid.labels[row * resolution + col] = classify_point(kind, params, grid.u[col], grid.v[row]);
  return grid;
}

double lmcl_margin_width(double m) {
  if (!(m >= 0.0 && m < 1.0)) throw DomainError("lmcl_margin_width: m must lie in [0, 1)");
  return std::numbers::sqrt2 * m;
}

std::vector<std::optional<double>> margin_row_widths(const RegionGrid& grid) {
  const std::size_t n = grid.resolution;
  std::vector<std::optional<double>> widths(n);
  for (std::size_t row = 0; row < n; ++row) {
    std::size_t count = 0;
    const bool touches = grid.at(row, 0) == Region::Margin || grid.at(row, n - 1) == Region::Margin;
    for (std::size_t col = 0; col < n; ++col) count += grid.at(row, col) == Region::Margin;
    if (!touches) widths[row] = static_cast<double>(count) * grid.cell();
  }
  return widths;
}

double measured_band_width(const RegionGrid& grid) {
  std::vector<double> interior;
  for (const auto& w : margin_row_widths(grid))
    if (w && *w > 0.0) interior.push_back(*w);
  if (interior.empty()) return 0.0;
  std::nth_element(interior.begin(), interior.begin() + interior.size() / 2, interior.end());
  return interior[interior.size() / 2] / std::numbers::sqrt2;
}

}  // namespace marginlab
