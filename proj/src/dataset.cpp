#include "marginlab/dataset.hpp"

#include <random>
#include <string>

#include "marginlab/error.hpp"

namespace marginlab {

void validate(const BlobSpec& spec) {
  if (spec.classes < 2) throw ConfigError("classes must be >= 2");
  if (spec.per_class < 1) throw ConfigError("per_class must be >= 1");
  if (spec.input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (!(spec.dispersion > 0.0)) {
    throw ConfigError("dispersion must be positive, got " + std::to_string(spec.dispersion));
  }
  if (!(spec.center_scale > 0.0)) throw ConfigError("center_scale must be positive");
}

Matrix blob_centers(const BlobSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, spec.center_scale);
  Matrix centers(spec.classes, spec.input_dim);
  for (auto& v : centers.data()) v = normal(rng);
  return centers;
}

namespace {

SyntheticDataset sample_around(const BlobSpec& spec, std::size_t per_class,
                               std::uint64_t sample_seed) {
  const Matrix centers = blob_centers(spec);
  std::mt19937_64 rng(sample_seed);
  std::normal_distribution<double> noise(0.0, spec.dispersion);
  SyntheticDataset ds;
  ds.spec = spec;
  ds.classes = spec.classes;
  ds.samples = Matrix(spec.classes * per_class, spec.input_dim);
  ds.labels.resize(spec.classes * per_class);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::size_t r = c * per_class + k;
      ds.labels[r] = c;
      for (std::size_t d = 0; d < spec.input_dim; ++d) {
        ds.samples(r, d) = centers(c, d) + noise(rng);
      }
    }
  }
  return ds;
}

}  // namespace

SyntheticDataset generate_blobs(const BlobSpec& spec) {
  validate(spec);
  // Offset keeps the sample stream distinct from the center stream.
  return sample_around(spec, spec.per_class, spec.seed ^ 0x9e3779b97f4a7c15ULL);
}

SyntheticDataset generate_holdout(const BlobSpec& spec, std::size_t per_class,
                                  std::uint64_t sample_seed) {
  validate(spec);
  if (per_class < 1) throw ConfigError("holdout per_class must be >= 1");
  return sample_around(spec, per_class, sample_seed);
}

}  // namespace marginlab
