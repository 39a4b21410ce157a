#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hypm/augment.hpp"
#include "hypm/dataset.hpp"
#include "hypm/model.hpp"
#include "hypm/noise.hpp"
#include "hypm/partition.hpp"

namespace hypm {

struct AblationConfig {
  bool use_hyb_meta = true;
  bool use_nca_prompt = true;
  bool use_label_correction = true;
  bool cross_domain_meta_test = true;
  PrototypeSpace prototype_space = PrototypeSpace::hyperbolic;
};

struct TrainConfig {
  long n_epoch_refresh = 500;  // prototype/partition refresh period
  AblationConfig ablations;
  /// Inner (meta-train) learning rate; a negative value tracks the scheduled
  /// outer rate.
  double inner_lr = -1.0;
  /// Commit the inner step to the live parameters instead of a clone.
  bool committed_inner_step = false;
  std::uint64_t seed = 0;
  SgdConfig sgd;
  BallConfig ball;
  ModeConfig mode;
  AugmentConfig augment;
  unsigned num_threads = 1;  // prototype extraction fan-out (HYPM_THREADS)

  void validate() const;
};

struct StepReport {
  long step = 0;
  double loss_meta_train = 0.0;
  double loss_meta_test = 0.0;
  std::string domain_i = "-";
  std::string domain_j = "-";
  std::size_t clean_count = 0;
  std::size_t noisy_count = 0;
  double lr = 0.0;
};

/// Uniform ordered pair of distinct source domains.
std::pair<std::string, std::string> select_domain_pair(const std::vector<std::string>& domains,
                                                       RngStream& rng);

struct MetaTrainOutcome {
  ModelState adapted;
  double loss = 0.0;
  ParamGrads grads;  // of L_m-train w.r.t. the original parameters
};

struct MetaTestOutcome {
  double loss = 0.0;
  ParamGrads grads;  // of L_m-test w.r.t. the adapted parameters
};

using StepCallback = std::function<void(const ModelState&, const StepReport&)>;

/// Episodic trainer: domain-pair selection, periodic prototype refresh,
/// meta-train on the first domain (clean + augmented + corrected-noisy
/// losses), cross-domain meta-test on the adapted clone, and a first-order
/// combined outer update. With use_hyb_meta disabled the loop degenerates to
/// ERM on the given labels plus, if enabled, the augmented extra-class term.
class MetaTrainer {
 public:
  MetaTrainer(const std::vector<DomainDataset>& datasets, const SplitSpec& split, TrainConfig cfg);

  const TrainConfig& config() const { return cfg_; }
  std::vector<std::string> source_domains() const { return source_domains_; }
  const SamplePool& training_pool() const { return pool_; }

  /// Recomputes the cached partition at step 0 and whenever
  /// step % n_epoch_refresh == 0, over all source domains; otherwise returns
  /// the cache untouched.
  const PartitionResult& refresh_partition_if_due(const ModelState& state, long step);

  /// L_m-train over a clean batch, an augmented batch and a corrected-noisy
  /// batch, plus one inner SGD step applied to a clone of the parameters.
  MetaTrainOutcome meta_train_step(const ModelState& state,
                                   const std::pair<std::string, std::string>& pair,
                                   const Partition& partition);

  /// L_m-test over clean batches of both pair domains, evaluated on the
  /// adapted parameters.
  MetaTestOutcome meta_test_step(const ModelState& adapted,
                                 const std::pair<std::string, std::string>& pair,
                                 const Partition& partition);

  /// Combined first-order update on the original parameters at the scheduled
  /// outer rate; increments the step counter.
  void outer_update(ModelState& state, const MetaTrainOutcome& train,
                    const MetaTestOutcome& test);

  /// The full loop for sgd.max_steps steps. Emits one StepReport per step.
  std::vector<StepReport> run(ModelState& state, const StepCallback& on_step = {});

 private:
  SamplePool clean_pool(const Partition& partition, const std::string& domain) const;
  SamplePool noisy_pool(const Partition& partition,
                        const std::pair<std::string, std::string>& pair) const;
  StepReport erm_step(ModelState& state);

  TrainConfig cfg_;
  std::vector<int> known_classes_;
  std::vector<std::string> source_domains_;
  SamplePool pool_;                               // all training samples
  std::map<std::string, SamplePool> by_domain_;   // training samples per domain
  std::map<std::string, const LabeledSample*> by_id_;
  RngStream rng_pairs_;
  RngStream rng_batch_;
  RngStream rng_crop_;
  std::optional<PartitionResult> cache_;
  long cache_computed_at_ = -1;
};

/// Convenience wrapper: build the trainer, filter the training pool and run.
std::vector<StepReport> run_training(const std::vector<DomainDataset>& datasets,
                                     const SplitSpec& split, const TrainConfig& cfg,
                                     ModelState& state, const StepCallback& on_step = {});

void write_training_log(const std::vector<StepReport>& reports,
                        const std::filesystem::path& path);

}  // namespace hypm
