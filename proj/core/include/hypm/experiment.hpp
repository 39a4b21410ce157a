#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hypm/metrics.hpp"
#include "hypm/trainer.hpp"

namespace hypm {

struct SyntheticSpec {
  std::size_t domains = 4;
  std::size_t classes = 7;
  std::size_t per_class = 50;
  std::uint64_t seed = 1;
  std::size_t height = 32;
  std::size_t width = 32;
};

/// Either a PPM tree on disk or an in-process synthetic dataset.
struct DataSource {
  std::optional<std::string> root;
  std::optional<SyntheticSpec> synthetic;

  void validate() const;  // exactly one of the two
};

struct ModelSpec {
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t embed_dim = 64;
};

/// The full, canonically serializable description of one experiment run.
/// Unknown JSON keys are rejected on load.
struct ExperimentConfig {
  DataSource data;
  std::string output_dir;
  std::string test_domain;
  std::size_t num_unknown = 1;
  std::string noisy_labels;  // path of the label override; empty = none
  ModelSpec model;
  TrainConfig train;
  long checkpoint_every = 0;  // extra periodic checkpoints; 0 = final only
  double eval_threshold = 0.5;

  void validate() const;
};

ExperimentConfig config_from_json_string(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string canonical_json(const ExperimentConfig& config);
/// FNV-1a of the canonical serialization, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

std::vector<DomainDataset> load_datasets(const DataSource& source);

/// Source-domain, known-class samples only; asserts the residual pool is
/// valid for training.
std::vector<DomainDataset> training_view(const std::vector<DomainDataset>& all,
                                         const SplitSpec& split);

// ---- commands (thin wrappers the CLI binds to) ----

struct GenDataArgs {
  SyntheticSpec spec;
  std::string out_dir;
  bool force = false;
};

/// Dataset tree + manifest.json. Refuses a non-empty output directory
/// without force.
void cmd_gen_data(const GenDataArgs& args);

struct InjectNoiseArgs {
  std::string data_root;
  std::string test_domain;
  std::size_t num_unknown = 1;
  NoiseKind kind = NoiseKind::symmetric;
  double ratio = 0.2;
  std::uint64_t seed = 0;
  std::string similarity_csv;  // required iff asymmetric
  std::string out_csv;         // labels_noisy.csv
};

NoiseLedger cmd_inject_noise(const InjectNoiseArgs& args);

struct TrainResult {
  ModelState state;
  std::vector<StepReport> reports;
  std::filesystem::path checkpoint_path;
};

/// Full training run: writes config.json, training_log.csv and
/// checkpoint.hypm into output_dir.
TrainResult cmd_train(const ExperimentConfig& config);

/// Writes metrics.json, confidences.csv and oscr_curve.csv into out_dir.
MetricsReport cmd_evaluate(const ExperimentConfig& config,
                           const std::filesystem::path& checkpoint,
                           const std::filesystem::path& out_dir);

enum class AblateGrid { n_epoch, components, prototype_space };

struct AblateRow {
  std::string variant;
  std::string hash;
  MetricsReport metrics;
};

/// Runs the variant grid (train + evaluate per variant) and writes
/// ablation.csv plus per-variant artifacts under output_dir.
std::vector<AblateRow> cmd_ablate(const ExperimentConfig& base, AblateGrid grid,
                                  const std::vector<long>& n_epoch_values = {500, 1000, 1500,
                                                                             2000, 2500});

/// Worker-thread cap for prototype extraction: HYPM_THREADS, else 4, always
/// bounded by the hardware concurrency.
unsigned resolve_worker_threads();

}  // namespace hypm
