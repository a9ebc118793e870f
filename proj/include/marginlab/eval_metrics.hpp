#pragma once

// Cosine-similarity verification and identification metrics.

#include <cstddef>
#include <span>
#include <vector>

#include "marginlab/matrix.hpp"

namespace marginlab {

// Dot product of the L2-normalized vectors. Throws DegenerateVectorError on a
// zero vector and DimensionError on a length mismatch.
double cosine_score(std::span<const double> a, std::span<const double> b);

struct Pair {
  std::vector<double> a;
  std::vector<double> b;
  bool same = false;
};

using PairSet = std::vector<Pair>;

struct ScoredPairs {
  std::vector<double> scores;
  std::vector<bool> same;
};

ScoredPairs score_pairs(const PairSet& pairs);

struct VerificationResult {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// A pair is predicted "same" when score > threshold. Candidates are the
// midpoints between consecutive distinct scores plus one below the minimum and
// one above the maximum; the lowest threshold reaching the best accuracy wins.
// Throws ProtocolError unless both positives and negatives are present.
VerificationResult verification_accuracy(const ScoredPairs& scored);
VerificationResult verification_accuracy(const PairSet& pairs);

// True-accept rate at the smallest negative-score threshold t for which the
// fraction of negatives with score > t is <= far. Throws ProtocolError when
// far * negatives < 1 (the message names the minimum negative count), or
// when there are no positives.
double tar_at_far(const ScoredPairs& scored, double far);
double tar_at_far(const PairSet& pairs, double far);

struct GalleryProbe {
  Matrix gallery;  // one feature per row
  std::vector<std::size_t> gallery_ids;
  Matrix probes;
  std::vector<std::size_t> probe_ids;
};

// Fraction of probes whose most cosine-similar gallery row carries the same
// identity; ties go to the lowest gallery index.
double rank1_identification(const GalleryProbe& gp);

}  // namespace marginlab
