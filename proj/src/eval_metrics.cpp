#include "marginlab/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include "marginlab/error.hpp"

namespace marginlab {

double cosine_score(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_score: length mismatch");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateVectorError("cosine_score: zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

ScoredPairs score_pairs(const PairSet& pairs) {
  ScoredPairs out;
  out.scores.reserve(pairs.size());
  out.same.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.scores.push_back(cosine_score(p.a, p.b));
    out.same.push_back(p.same);
  }
  return out;
}

VerificationResult verification_accuracy(const ScoredPairs& scored) {
  const std::size_t n = scored.scores.size();
  if (scored.same.size() != n) throw DimensionError("scores/labels length mismatch");
  const std::size_t positives =
      static_cast<std::size_t>(std::count(scored.same.begin(), scored.same.end(), true));
  if (positives == 0 || positives == n) {
    throw ProtocolError("verification needs at least one positive and one negative pair");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return scored.scores[i] < scored.scores[j]; });

  // Sweep thresholds upward. With threshold below everything all pairs are
  // accepted: correct = positives. Passing a score group flips those pairs to
  // rejected.
  const double lowest = scored.scores[order.front()];
  VerificationResult best{lowest - 1.0, static_cast<double>(positives) / static_cast<double>(n)};
  std::size_t correct = positives;
  std::size_t i = 0;
  while (i < n) {
    const double s = scored.scores[order[i]];
    std::size_t j = i;
    while (j < n && scored.scores[order[j]] == s) {
      if (scored.same[order[j]]) {
        --correct;
      } else {
        ++correct;
      }
      ++j;
    }
    const double threshold = j < n ? 0.5 * (s + scored.scores[order[j]]) : s + 1.0;
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    if (acc > best.accuracy) best = {threshold, acc};
    i = j;
  }
  return best;
}

VerificationResult verification_accuracy(const PairSet& pairs) {
  if (pairs.empty()) throw ProtocolError("empty pair set");
  return verification_accuracy(score_pairs(pairs));
}

double tar_at_far(const ScoredPairs& scored, double far) {
  if (!(far > 0.0 && far <= 1.0)) throw DomainError("FAR must lie in (0, 1]");
  std::vector<double> negatives;
  std::vector<double> positives;
  for (std::size_t i = 0; i < scored.scores.size(); ++i)
    (scored.same[i] ? positives : negatives).push_back(scored.scores[i]);
  if (positives.empty()) throw ProtocolError("TAR@FAR needs at least one positive pair");
  const double allowed = far * static_cast<double>(negatives.size());
  if (allowed < 1.0) {
    const auto needed = static_cast<std::size_t>(std::ceil(1.0 / far));
    throw ProtocolError("FAR " + std::to_string(far) + " needs at least " +
                        std::to_string(needed) + " negative pairs, have " +
                        std::to_string(negatives.size()));
  }
  std::sort(negatives.begin(), negatives.end(), std::greater<>());
  // At most floor(far * n) negatives may lie strictly above the threshold.
  const auto k = static_cast<std::size_t>(std::floor(allowed + 1e-9));
  const double threshold = k >= negatives.size() ? negatives.back() - 1.0 : negatives[k];
  const auto accepted = std::count_if(positives.begin(), positives.end(),
                                      [&](double s) { return s > threshold; });
  return static_cast<double>(accepted) / static_cast<double>(positives.size());
}

double tar_at_far(const PairSet& pairs, double far) {
  if (pairs.empty()) throw ProtocolError("empty pair set");
  return tar_at_far(score_pairs(pairs), far);
}

double rank1_identification(const GalleryProbe& gp) {
  if (gp.gallery.rows() == 0 || gp.probes.rows() == 0) {
    throw ProtocolError("identification needs a non-empty gallery and probe set");
  }
  if (gp.gallery_ids.size() != gp.gallery.rows() || gp.probe_ids.size() != gp.probes.rows()) {
    throw DimensionError("identity list length does not match features");
  }
  if (gp.gallery.cols() != gp.probes.cols()) {
    throw DimensionError("gallery and probe features differ in dimension");
  }
  const Matrix g = normalized_rows(gp.gallery);
  const Matrix p = normalized_rows(gp.probes);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < g.rows(); ++j) {
      const double s = dot(p.row(i), g.row(j));
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    hits += gp.gallery_ids[best] == gp.probe_ids[i];
  }
  return static_cast<double>(hits) / static_cast<double>(p.rows());
}

}  // namespace marginlab
