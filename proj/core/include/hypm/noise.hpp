#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hypm/dataset.hpp"

namespace hypm {

enum class NoiseKind { symmetric, asymmetric };

/// Class-similarity weights for asymmetric noise. Values are clipped to
/// [0, inf), the diagonal is forced to zero and the matrix is symmetrized
/// as (M + M^T)/2 on load.
struct SimilarityMatrix {
  std::vector<std::string> class_names;  // index order
  std::vector<double> values;            // C x C row-major

  std::size_t size() const { return class_names.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * size() + col]; }
};

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double ratio = 0.0;  // in [0, 1]
  std::uint64_t seed = 0;
  std::optional<SimilarityMatrix> similarity;  // required iff asymmetric

  void validate() const;
};

struct NoiseLedgerEntry {
  std::string sample_id;
  int clean_label = 0;
  int noisy_label = 0;
};

struct NoiseLedger {
  std::vector<NoiseLedgerEntry> entries;
  double achieved_ratio = 0.0;
};

/// Flip exactly round(ratio * N) labels across the given training samples,
/// selected uniformly without replacement. Symmetric noise replaces a label
/// uniformly over the other known classes; asymmetric noise samples the
/// replacement with probability proportional to similarity[y][y'] over the
/// other known classes. Samples are mutated in place.
///
/// Preconditions: every sample's label is in `known_classes` (the caller
/// restricts to source-domain, known-class training data).
NoiseLedger inject(std::vector<DomainDataset>& datasets, const std::vector<int>& known_classes,
                   const NoiseSpec& spec);

/// CSV with a class-name header row, C rows by C columns.
SimilarityMatrix load_similarity(const std::filesystem::path& path,
                                 const std::vector<std::string>& expected_class_names);

/// labels_noisy.csv: sample_id, clean_label, noisy_label.
void write_noise_ledger(const NoiseLedger& ledger, const std::filesystem::path& path);

/// The label override consumed by training: only (sample_id, noisy_label)
/// are read, so the trainer cannot observe clean labels by construction.
struct NoisyLabelOverride {
  std::vector<std::pair<std::string, int>> noisy_labels;
};

NoisyLabelOverride load_noisy_labels(const std::filesystem::path& path);

/// Replace the labels of listed samples; unknown sample ids are an error.
void apply_label_override(std::vector<DomainDataset>& datasets, const NoisyLabelOverride& ov);

}  // namespace hypm
