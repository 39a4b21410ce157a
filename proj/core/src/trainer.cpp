#include "hypm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace hypm {

void TrainConfig::validate() const {
  sgd.validate();
  ball.validate();
  mode.validate();
  augment.validate();
  if (n_epoch_refresh < 1) throw std::invalid_argument("TrainConfig: n_epoch_refresh must be >= 1");
  if (sgd.max_steps > 0 && n_epoch_refresh > sgd.max_steps)
    throw std::invalid_argument("TrainConfig: n_epoch_refresh must be <= max_steps");
}

std::pair<std::string, std::string> select_domain_pair(const std::vector<std::string>& domains,
                                                       RngStream& rng) {
  if (domains.size() < 2)
    throw std::invalid_argument("select_domain_pair: need >= 2 source domains");
  const std::size_t i = rng.uniform_below(domains.size());
  std::size_t j = rng.uniform_below(domains.size() - 1);
  if (j >= i) ++j;
  return {domains[i], domains[j]};
}

namespace {

constexpr std::size_t kPromptParamIndex = 8;  // ModelState::parameters() order

double inner_lr_of(const TrainConfig& cfg, long step) {
  return cfg.inner_lr >= 0.0 ? cfg.inner_lr : cfg.sgd.lr_at(step);
}

/// Asynchronous mode alternates which parameter group a step may touch;
/// adversarial mode flips the prompt gradient so the prompt ascends the loss.
void filter_grads(ParamGrads& grads, PromptMode mode, long step) {
  switch (mode) {
    case PromptMode::synchronous:
    case PromptMode::fixed_crop:
      return;
    case PromptMode::asynchronous: {
      const bool network_turn = (step % 2) == 0;
      if (network_turn) {
        for (double& v : grads[kPromptParamIndex].data) v = 0.0;
      } else {
        for (std::size_t i = 0; i < grads.size(); ++i)
          if (i != kPromptParamIndex)
            for (double& v : grads[i].data) v = 0.0;
      }
      return;
    }
    case PromptMode::adversarial: {
      const bool network_turn = (step % 2) == 0;
      if (network_turn) {
        for (double& v : grads[kPromptParamIndex].data) v = 0.0;
      } else {
        for (std::size_t i = 0; i < grads.size(); ++i)
          if (i != kPromptParamIndex)
            for (double& v : grads[i].data) v = 0.0;
        for (double& v : grads[kPromptParamIndex].data) v = -v;
      }
      return;
    }
  }
}

}  // namespace

MetaTrainer::MetaTrainer(const std::vector<DomainDataset>& datasets, const SplitSpec& split,
                         TrainConfig cfg)
    : cfg_(std::move(cfg)),
      known_classes_(split.known_classes),
      rng_pairs_(cfg_.seed, "pairs"),
      rng_batch_(cfg_.seed, "batch"),
      rng_crop_(cfg_.seed, "crop") {
  cfg_.validate();
  for (const DomainDataset& ds : datasets) {
    if (ds.name == split.test_domain) continue;
    for (const LabeledSample& s : ds.samples) {
      // Train pool must never contain test-domain or unknown-class samples.
      if (!split.is_known(s.label))
        throw std::invalid_argument("MetaTrainer: sample '" + s.id +
                                    "' carries an unknown-class label");
      pool_.push_back(&s);
      by_domain_[ds.name].push_back(&s);
      by_id_[s.id] = &s;
    }
    source_domains_.push_back(ds.name);
  }
  std::sort(source_domains_.begin(), source_domains_.end());
  if (source_domains_.size() < 2)
    throw std::invalid_argument("MetaTrainer: need >= 2 source domains");
  if (pool_.empty()) throw std::invalid_argument("MetaTrainer: empty training pool");
}

const PartitionResult& MetaTrainer::refresh_partition_if_due(const ModelState& state, long step) {
  const bool due = !cache_.has_value() ||
                   (step % cfg_.n_epoch_refresh == 0 && step != cache_computed_at_);
  if (due) {
    std::vector<EmbeddedSample> embedded = extract_embeddings(state, pool_, cfg_.num_threads);
    cache_ = compute_partition(embedded, known_classes_, cfg_.ablations.prototype_space, cfg_.ball,
                               cfg_.mode, step);
    cache_computed_at_ = step;
  }
  return *cache_;
}

SamplePool MetaTrainer::clean_pool(const Partition& partition, const std::string& domain) const {
  SamplePool out;
  for (const LabeledSample* s : by_domain_.at(domain))
    if (partition.clean.count(s->id)) out.push_back(s);
  return out;
}

SamplePool MetaTrainer::noisy_pool(const Partition& partition,
                                   const std::pair<std::string, std::string>& pair) const {
  SamplePool out;
  for (const std::string& d : {pair.first, pair.second})
    for (const LabeledSample* s : by_domain_.at(d))
      if (partition.noisy.count(s->id)) out.push_back(s);
  return out;
}

MetaTrainOutcome MetaTrainer::meta_train_step(const ModelState& state,
                                              const std::pair<std::string, std::string>& pair,
                                              const Partition& partition) {
  const SamplePool clean_si = clean_pool(partition, pair.first);
  if (clean_si.empty())
    throw std::runtime_error("meta_train_step: empty clean pool for domain '" + pair.first +
                             "'; train longer before the first refresh or use another seed");
  const std::size_t bsz = cfg_.sgd.batch_size;

  ModelGraph g = ModelGraph::leaves(state);
  const SamplePool clean_batch = sample_batch(clean_si, bsz, rng_batch_);
  ad::Var loss =
      ad::cross_entropy(g.logits(ad::constant(stack_images(clean_batch))),
                        batch_labels(clean_batch));

  if (cfg_.ablations.use_nca_prompt) {
    SamplePool partner_pool = clean_si;
    if (cfg_.augment.mix_cross_domain) {
      SamplePool cross;
      for (const std::string& d : source_domains_)
        if (d != pair.first)
          for (const LabeledSample* s : clean_pool(partition, d)) cross.push_back(s);
      if (!cross.empty()) partner_pool = std::move(cross);
    }
    const SamplePool partner = sample_batch_different_classes(partner_pool, clean_batch, rng_batch_);
    const Tensor mixed = mix_pair(stack_images(clean_batch), stack_images(partner));
    const CropMask mask =
        random_crop_mask(state.arch.in_h, state.arch.in_w, cfg_.augment, rng_crop_);
    ad::Var augmented =
        ad::paste_window(mixed, g.prompt, mask.top, mask.left, mask.height, mask.width);
    const std::vector<int> aug_labels(clean_batch.size(),
                                      static_cast<int>(state.arch.num_known_classes));
    loss = ad::add(loss, ad::cross_entropy(ad::linear(g.embeddings(augmented), g.head_w, g.head_b),
                                           aug_labels));
  }

  const SamplePool noisy = noisy_pool(partition, pair);
  if (!noisy.empty()) {
    const SamplePool noisy_batch = sample_batch(noisy, bsz, rng_batch_);
    std::vector<int> labels;
    labels.reserve(noisy_batch.size());
    for (const LabeledSample* s : noisy_batch) {
      if (cfg_.ablations.use_label_correction) {
        const auto it = partition.corrected_labels.find(s->id);
        labels.push_back(it != partition.corrected_labels.end() ? it->second : s->label);
      } else {
        labels.push_back(s->label);
      }
    }
    loss = ad::add(loss,
                   ad::cross_entropy(g.logits(ad::constant(stack_images(noisy_batch))), labels));
  }

  ad::backward(loss);
  MetaTrainOutcome out;
  out.loss = loss->value.item();
  out.grads = g.collect_grads(state);
  filter_grads(out.grads, cfg_.augment.mode, state.step);
  out.adapted = state;
  apply_sgd(out.adapted, out.grads, inner_lr_of(cfg_, state.step));
  return out;
}

MetaTestOutcome MetaTrainer::meta_test_step(const ModelState& adapted,
                                            const std::pair<std::string, std::string>& pair,
                                            const Partition& partition) {
  const std::string second =
      cfg_.ablations.cross_domain_meta_test ? pair.second : pair.first;
  MetaTestOutcome out;
  ModelGraph g = ModelGraph::leaves(adapted);
  ad::Var loss;
  for (const std::string& domain : {pair.first, second}) {
    const SamplePool pool = clean_pool(partition, domain);
    if (pool.empty())
      throw std::runtime_error("meta_test_step: empty clean pool for domain '" + domain + "'");
    const SamplePool batch = sample_batch(pool, cfg_.sgd.batch_size, rng_batch_);
    ad::Var term =
        ad::cross_entropy(g.logits(ad::constant(stack_images(batch))), batch_labels(batch));
    loss = loss ? ad::add(loss, term) : term;
  }
  ad::backward(loss);
  out.loss = loss->value.item();
  out.grads = g.collect_grads(adapted);
  filter_grads(out.grads, cfg_.augment.mode, adapted.step);
  return out;
}

void MetaTrainer::outer_update(ModelState& state, const MetaTrainOutcome& train,
                               const MetaTestOutcome& test) {
  ParamGrads combined = train.grads;
  accumulate(combined, test.grads);
  if (cfg_.committed_inner_step) {
    const long step = state.step;
    state = train.adapted;
    state.step = step;
  }
  sgd_step(state, combined, cfg_.sgd);
}

StepReport MetaTrainer::erm_step(ModelState& state) {
  const std::size_t bsz = cfg_.sgd.batch_size;
  ModelGraph g = ModelGraph::leaves(state);
  const SamplePool batch = sample_batch(pool_, bsz, rng_batch_);
  ad::Var loss = ad::cross_entropy(g.logits(ad::constant(stack_images(batch))),
                                   batch_labels(batch));
  if (cfg_.ablations.use_nca_prompt) {
    const SamplePool partner = sample_batch_different_classes(pool_, batch, rng_batch_);
    const Tensor mixed = mix_pair(stack_images(batch), stack_images(partner));
    const CropMask mask =
        random_crop_mask(state.arch.in_h, state.arch.in_w, cfg_.augment, rng_crop_);
    ad::Var augmented =
        ad::paste_window(mixed, g.prompt, mask.top, mask.left, mask.height, mask.width);
    const std::vector<int> aug_labels(batch.size(),
                                      static_cast<int>(state.arch.num_known_classes));
    loss = ad::add(loss, ad::cross_entropy(ad::linear(g.embeddings(augmented), g.head_w, g.head_b),
                                           aug_labels));
  }
  ad::backward(loss);
  ParamGrads grads = g.collect_grads(state);
  filter_grads(grads, cfg_.augment.mode, state.step);
  StepReport r;
  r.step = state.step;
  r.loss_meta_train = loss->value.item();
  r.loss_meta_test = 0.0;
  r.clean_count = pool_.size();
  r.noisy_count = 0;
  r.lr = cfg_.sgd.lr_at(state.step);
  sgd_step(state, grads, cfg_.sgd);
  return r;
}

std::vector<StepReport> MetaTrainer::run(ModelState& state, const StepCallback& on_step) {
  std::vector<StepReport> reports;
  reports.reserve(static_cast<std::size_t>(std::max<long>(0, cfg_.sgd.max_steps)));
  while (state.step < cfg_.sgd.max_steps) {
    if (!cfg_.ablations.use_hyb_meta) {
      reports.push_back(erm_step(state));
      if (on_step) on_step(state, reports.back());
      continue;
    }
    const auto pair = select_domain_pair(source_domains_, rng_pairs_);
    const PartitionResult& cached = refresh_partition_if_due(state, state.step);
    const Partition partition = cached.view(pair.first);
    StepReport r;
    r.step = state.step;
    r.domain_i = pair.first;
    r.domain_j = pair.second;
    r.clean_count = cached.base.clean.size();
    r.noisy_count = cached.base.noisy.size();
    r.lr = cfg_.sgd.lr_at(state.step);
    const MetaTrainOutcome train = meta_train_step(state, pair, partition);
    const MetaTestOutcome test = meta_test_step(train.adapted, pair, partition);
    r.loss_meta_train = train.loss;
    r.loss_meta_test = test.loss;
    outer_update(state, train, test);
    reports.push_back(r);
    if (on_step) on_step(state, reports.back());
  }
  return reports;
}

std::vector<StepReport> run_training(const std::vector<DomainDataset>& datasets,
                                     const SplitSpec& split, const TrainConfig& cfg,
                                     ModelState& state, const StepCallback& on_step) {
  MetaTrainer trainer(datasets, split, cfg);
  return trainer.run(state, on_step);
}

void write_training_log(const std::vector<StepReport>& reports,
                        const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_training_log: cannot open " + path.string());
  f << "step,loss_meta_train,loss_meta_test,domain_i,domain_j,clean_count,noisy_count,lr\n";
  f.precision(17);
  for (const StepReport& r : reports)
    f << r.step << "," << r.loss_meta_train << "," << r.loss_meta_test << "," << r.domain_i << ","
      << r.domain_j << "," << r.clean_count << "," << r.noisy_count << "," << r.lr << "\n";
}

}  // namespace hypm
