#pragma once

// Test-only oracles: central finite differences and a direct long-double
// evaluation of the three losses that does not touch the autodiff tape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "marginlab/margin_losses.hpp"
#include "marginlab/matrix.hpp"

namespace marginlab::testing {

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

inline std::vector<std::size_t> random_labels(std::mt19937_64& rng, std::size_t n,
                                              std::size_t classes) {
  std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
  std::vector<std::size_t> out(n);
  for (auto& y : out) y = pick(rng);
  return out;
}

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// derivative is ~0 from turning O(1e-11) rounding noise into a huge ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-2) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                               double h = 1e-5) {
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline double max_relative_error(const Matrix& analytic, const Matrix& numeric,
                                 double floor = 1e-2) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
  }
  return worst;
}

// Direct formula: mean_i -log softmax(z_i)[y_i] with z from raw inner products
// (softmax) or s * cos with the margin on the target class.
inline double oracle_loss(const LossSpec& spec, const Batch& batch, const ClassWeights& w) {
  const std::size_t n = batch.features.rows();
  const std::size_t k = batch.features.cols();
  const std::size_t c = w.W.cols();
  long double total = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<long double> z(c);
    long double xn = 0.0L;
    for (std::size_t d = 0; d < k; ++d) xn += static_cast<long double>(batch.features(i, d)) * batch.features(i, d);
    xn = std::sqrt(xn);
    for (std::size_t j = 0; j < c; ++j) {
      long double dotp = 0.0L;
      long double wn = 0.0L;
      for (std::size_t d = 0; d < k; ++d) {
        dotp += static_cast<long double>(batch.features(i, d)) * w.W(d, j);
        wn += static_cast<long double>(w.W(d, j)) * w.W(d, j);
      }
      if (spec.variant == LossVariant::Softmax) {
        z[j] = dotp;
      } else {
        long double cosv = dotp / (xn * std::sqrt(wn));
        if (j == batch.labels[i]) cosv -= spec.m;
        z[j] = spec.s * cosv;
      }
    }
    const long double mx = *std::max_element(z.begin(), z.end());
    long double denom = 0.0L;
    for (long double v : z) denom += std::exp(v - mx);
    total += -(z[batch.labels[i]] - mx - std::log(denom));
  }
  return static_cast<double>(total / static_cast<long double>(n));
}

}  // namespace marginlab::testing
