#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hypm/rng.hpp"
#include "hypm/tensor.hpp"

namespace hypm {

struct LabeledSample {
  std::string id;     // globally unique, stable
  Tensor image;       // {H,W,3}, values in [0,1]
  int label = 0;      // class index; possibly noisy in training data
  std::string domain;
};

struct DomainDataset {
  std::string name;
  std::vector<LabeledSample> samples;
};

/// Leave-one-domain-out split with the last classes (by index order, which is
/// lexicographic class-name order) held out as unknown.
struct SplitSpec {
  std::string test_domain;
  std::vector<int> known_classes;    // sorted ascending
  std::vector<int> unknown_classes;  // sorted ascending

  bool is_known(int label) const;
  std::size_t num_known() const { return known_classes.size(); }
};

struct DatasetManifest {
  std::vector<std::string> domains;
  std::vector<std::string> classes;  // index order == lexicographic order
  std::size_t height = 0, width = 0;
};

/// Synthetic multi-domain dataset. Class identity is a binary bar code over
/// horizontal stripes; domain identity is a style transform (channel
/// permutation, brightness offset and pixel-noise level, all functions of the
/// domain index). Bitwise deterministic in (seed, sizes).
std::vector<DomainDataset> generate_synthetic(std::size_t num_domains, std::size_t num_classes,
                                              std::size_t per_class, std::uint64_t seed,
                                              std::size_t height, std::size_t width);

/// Class/domain names used by the synthetic generator and by manifests.
std::string synthetic_domain_name(std::size_t index);
std::string synthetic_class_name(std::size_t index);

/// Load root/<domain>/<class_name>/<file>.ppm. Class names across the whole
/// tree are mapped to indices by ascending lexicographic order. All images
/// must share dimensions. Errors name the offending path.
std::vector<DomainDataset> load_ppm_tree(const std::filesystem::path& root);

/// Write datasets as a PPM tree plus manifest.json.
void write_ppm_tree(const std::vector<DomainDataset>& datasets,
                    const std::vector<std::string>& class_names,
                    const std::filesystem::path& root);

DatasetManifest read_manifest(const std::filesystem::path& root);

SplitSpec make_split(const std::vector<DomainDataset>& datasets, const std::string& test_domain,
                     std::size_t num_unknown);

/// Pools are borrowed views into datasets; datasets are immutable once built.
using SamplePool = std::vector<const LabeledSample*>;

/// Uniform draw of `size` samples: without replacement when size <= |pool|,
/// with replacement otherwise.
SamplePool sample_batch(const SamplePool& pool, std::size_t size, RngStream& rng);

/// Batch aligned with `reference`: element i is drawn uniformly from the pool
/// samples whose label differs from reference[i]'s label.
SamplePool sample_batch_different_classes(const SamplePool& pool, const SamplePool& reference,
                                          RngStream& rng);

/// Stack sample images into a {B,H,W,3} batch tensor.
Tensor stack_images(const SamplePool& batch);
std::vector<int> batch_labels(const SamplePool& batch);

}  // namespace hypm
