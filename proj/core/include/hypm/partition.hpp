#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hypm/dataset.hpp"
#include "hypm/geometry.hpp"
#include "hypm/model.hpp"

namespace hypm {

enum class PrototypeSpace { hyperbolic, euclidean };

/// Histogram realization of the mode of a continuous distance sample.
struct ModeConfig {
  std::size_t num_bins = 32;

  void validate() const;
};

/// A backbone embedding together with the sample identity it came from.
/// Tests plant these directly to exercise the partition pipeline without a
/// trained model.
struct EmbeddedSample {
  std::string id;
  std::string domain;
  int label = 0;
  std::vector<double> embedding;
};

using DomainClass = std::pair<std::string, int>;

/// Per-(domain, class) centers and mode thresholds.
struct PrototypeTable {
  std::map<DomainClass, std::vector<double>> centers;  // mapped-space coordinates
  std::map<DomainClass, double> thresholds;
  long computed_at_step = 0;
};

struct Partition {
  std::set<std::string> clean;                 // sample ids
  std::set<std::string> noisy;
  std::map<std::string, int> corrected_labels;  // keyed exactly by noisy ids
};

/// Backbone embeddings for a pool, sorted by sample id. The forward passes
/// may fan out over `num_threads` workers; results are accumulated in sorted
/// order so the output is bitwise independent of the thread count.
std::vector<EmbeddedSample> extract_embeddings(const ModelState& state, const SamplePool& pool,
                                               unsigned num_threads = 1);

/// Right edge of the modal histogram bin over [min, max] with equal bins;
/// ties pick the lowest bin. All-equal input degenerates to max + 1 (every
/// sample below threshold).
double mode_threshold(const std::vector<double>& distances, const ModeConfig& cfg);

/// Centers (mean of mapped embeddings per (domain, class)) and mode
/// thresholds over the per-group distance lists. Groups with no samples are
/// omitted; a warning names them when `known_classes` says they should exist.
PrototypeTable compute_prototypes(const std::vector<EmbeddedSample>& samples,
                                  const std::vector<int>& known_classes, PrototypeSpace space,
                                  const BallConfig& ball, const ModeConfig& mode, long step);

/// Distance of one embedding to a stored center under the configured space.
double prototype_distance(const std::vector<double>& embedding,
                          const std::vector<double>& center, PrototypeSpace space,
                          const BallConfig& ball);

/// Clean iff distance to the own-label prototype is strictly below the
/// threshold; equality and samples whose (domain, class) prototype is
/// missing land in the noisy set. Corrections are not filled in here.
Partition split_clean_noisy(const std::vector<EmbeddedSample>& samples,
                            const PrototypeTable& table, PrototypeSpace space,
                            const BallConfig& ball);

/// Nearest-prototype relabeling of `noisy_samples` against the prototypes of
/// `domain`; ties resolve to the lowest class index. Throws if the domain has
/// no prototypes at all.
std::map<std::string, int> correct_labels(const std::vector<EmbeddedSample>& noisy_samples,
                                          const PrototypeTable& table, const std::string& domain,
                                          PrototypeSpace space, const BallConfig& ball);

/// One full refresh over all source domains: embeddings are expected to cover
/// every training sample. Corrections are precomputed against every domain so
/// any sampled meta pair can look up its entries.
struct PartitionResult {
  PrototypeTable table;
  Partition base;  // clean/noisy only
  std::map<std::string, std::map<std::string, int>> corrected_by_domain;

  /// The per-pair view: corrections taken from `correcting_domain`.
  Partition view(const std::string& correcting_domain) const;
};

PartitionResult compute_partition(const std::vector<EmbeddedSample>& samples,
                                  const std::vector<int>& known_classes, PrototypeSpace space,
                                  const BallConfig& ball, const ModeConfig& mode, long step);

/// Diagnostic dump: sample_id, domain, given_label, distance, threshold,
/// assignment, corrected_label (-1 for clean samples).
void write_partition_csv(const std::vector<EmbeddedSample>& samples, const PrototypeTable& table,
                         const Partition& partition, PrototypeSpace space, const BallConfig& ball,
                         const std::filesystem::path& path);

}  // namespace hypm
