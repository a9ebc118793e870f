#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "marginlab/matrix.hpp"

namespace marginlab {

// Isotropic Gaussian clusters. Class centers are drawn once from
// N(0, center_scale^2 I) using `seed`; samples add N(0, dispersion^2 I) noise.
struct BlobSpec {
  std::size_t classes = 8;
  std::size_t per_class = 200;
  std::size_t input_dim = 4;
  double dispersion = 0.3;
  double center_scale = 1.0;
  std::uint64_t seed = 1;
};

struct SyntheticDataset {
  Matrix samples;                   // N x input_dim, grouped by class
  std::vector<std::size_t> labels;  // N
  std::size_t classes = 0;
  BlobSpec spec;
};

// Throws ConfigError for classes < 2, per_class < 1, input_dim < 1 or
// dispersion <= 0.
void validate(const BlobSpec& spec);

Matrix blob_centers(const BlobSpec& spec);
SyntheticDataset generate_blobs(const BlobSpec& spec);
// Fresh samples around the same centers, drawn from an independent stream.
SyntheticDataset generate_holdout(const BlobSpec& spec, std::size_t per_class,
                                  std::uint64_t sample_seed);

}  // namespace marginlab
