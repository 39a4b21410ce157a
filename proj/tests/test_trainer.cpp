#include <doctest.h>

#include <cmath>
#include <map>

#include "hypm/trainer.hpp"

using namespace hypm;

namespace {

struct Fixture {
  std::vector<DomainDataset> data;
  SplitSpec split;
  TrainConfig cfg;
  ConvNetConfig arch;

  explicit Fixture(std::size_t classes = 4, std::size_t per_class = 6, std::size_t hw = 8,
                   std::size_t num_unknown = 1) {
    data = generate_synthetic(3, classes, per_class, 77, hw, hw);
    split = make_split(data, "domain_02", num_unknown);
    cfg.seed = 5;
    cfg.sgd.max_steps = 20;
    cfg.sgd.batch_size = 4;
    cfg.sgd.decay_at_step = 15;
    cfg.n_epoch_refresh = 10;
    cfg.ball.gamma = 1.0;
    arch.in_h = hw;
    arch.in_w = hw;
    arch.conv1_channels = 3;
    arch.conv2_channels = 4;
    arch.embed_dim = 8;
    arch.num_known_classes = split.num_known();
  }

  std::vector<DomainDataset> training() const {
    std::vector<DomainDataset> out;
    for (const auto& ds : data) {
      if (ds.name == split.test_domain) continue;
      DomainDataset filtered{ds.name, {}};
      for (const auto& s : ds.samples)
        if (split.is_known(s.label)) filtered.samples.push_back(s);
      out.push_back(std::move(filtered));
    }
    return out;
  }

  ModelState state(std::uint64_t seed = 1) const {
    RngStream rng(seed, "init");
    return ModelState::init(arch, rng);
  }
};

bool same_params(const ModelState& a, const ModelState& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->data != pb[i]->data) return false;
  return true;
}

/// Every id clean except a fixed noisy tail per domain, corrected to class 0.
Partition fabricate_partition(const std::vector<DomainDataset>& training,
                              std::size_t noisy_per_domain) {
  Partition p;
  for (const auto& ds : training) {
    std::size_t taken = 0;
    for (const auto& s : ds.samples) {
      if (taken < noisy_per_domain) {
        p.noisy.insert(s.id);
        p.corrected_labels[s.id] = 0;
        ++taken;
      } else {
        p.clean.insert(s.id);
      }
    }
  }
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("domain pair selection") {
  SUBCASE("two domains give one of the two ordered arrangements") {
    RngStream rng(1, "pairs");
    for (int i = 0; i < 50; ++i) {
      const auto [a, b] = select_domain_pair({"x", "y"}, rng);
      CHECK(a != b);
      CHECK((a == "x" || a == "y"));
    }
  }
  SUBCASE("ordered pairs are uniform within three sigma") {
    RngStream rng(2, "pairs");
    std::map<std::pair<std::string, std::string>, double> counts;
    const std::size_t n = 100000;
    for (std::size_t i = 0; i < n; ++i) counts[select_domain_pair({"a", "b", "c"}, rng)] += 1.0;
    CHECK(counts.size() == 6);
    const double p = 1.0 / 6.0;
    const double sigma = std::sqrt(static_cast<double>(n) * p * (1 - p));
    for (const auto& [_, c] : counts)
      CHECK(std::abs(c - static_cast<double>(n) * p) <= 3.0 * sigma);
  }
  SUBCASE("fixed stream reproduces the sequence") {
    RngStream a(3, "pairs"), b(3, "pairs");
    for (int i = 0; i < 20; ++i)
      CHECK(select_domain_pair({"a", "b", "c"}, a) == select_domain_pair({"a", "b", "c"}, b));
  }
  SUBCASE("fewer than two domains is an error") {
    RngStream rng(4, "pairs");
    CHECK_THROWS_AS(select_domain_pair({"solo"}, rng), std::invalid_argument);
  }
}

TEST_CASE("train config invariants") {
  Fixture fx;
  TrainConfig bad = fx.cfg;
  bad.n_epoch_refresh = 50;  // > max_steps = 20
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = fx.cfg;
  bad.n_epoch_refresh = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  fx.cfg.validate();
}

TEST_CASE("partition refresh caching at the paper schedule") {
  Fixture fx;
  fx.cfg.sgd.max_steps = 1000;
  fx.cfg.sgd.decay_at_step = 800;
  fx.cfg.n_epoch_refresh = 500;
  MetaTrainer trainer(fx.training(), fx.split, fx.cfg);
  const ModelState state = fx.state();

  const PartitionResult& first = trainer.refresh_partition_if_due(state, 0);
  CHECK(first.table.computed_at_step == 0);
  const PartitionResult* first_ptr = &first;

  const PartitionResult& cached = trainer.refresh_partition_if_due(state, 250);
  CHECK(&cached == first_ptr);  // cache hit, identical object
  CHECK(cached.table.computed_at_step == 0);

  const PartitionResult& second = trainer.refresh_partition_if_due(state, 500);
  CHECK(second.table.computed_at_step == 500);
}

TEST_CASE("meta-train step") {
  Fixture fx(8, 4, 8, 1);  // 7 known classes -> C+1 = 8 head outputs
  const auto training = fx.training();
  MetaTrainer trainer(training, fx.split, fx.cfg);
  const std::pair<std::string, std::string> pair{"domain_00", "domain_01"};

  SUBCASE("uniform-logit model: three terms sum to 3 ln 8; meta-test to 2 ln 8") {
    ModelState zero = fx.state();
    for (Tensor* t : zero.parameters())
      for (double& v : t->data) v = 0.0;
    const Partition partition = fabricate_partition(training, 2);
    TrainConfig cfg = fx.cfg;
    cfg.inner_lr = 0.0;  // adapted = original, so meta-test also sees uniform logits
    MetaTrainer t2(training, fx.split, cfg);
    const MetaTrainOutcome out = t2.meta_train_step(zero, pair, partition);
    CHECK(out.loss == doctest::Approx(3.0 * std::log(8.0)).epsilon(1e-12));
    CHECK(same_params(out.adapted, zero));
    const MetaTestOutcome test = t2.meta_test_step(out.adapted, pair, partition);
    CHECK(test.loss == doctest::Approx(2.0 * std::log(8.0)).epsilon(1e-12));
  }
  SUBCASE("without the prompt term the loss drops to two terms") {
    ModelState zero = fx.state();
    for (Tensor* t : zero.parameters())
      for (double& v : t->data) v = 0.0;
    TrainConfig cfg = fx.cfg;
    cfg.ablations.use_nca_prompt = false;
    MetaTrainer t2(training, fx.split, cfg);
    const Partition partition = fabricate_partition(training, 2);
    const MetaTrainOutcome out = t2.meta_train_step(zero, pair, partition);
    CHECK(out.loss == doctest::Approx(2.0 * std::log(8.0)).epsilon(1e-12));
  }
  SUBCASE("empty noisy pool removes its term") {
    ModelState zero = fx.state();
    for (Tensor* t : zero.parameters())
      for (double& v : t->data) v = 0.0;
    const Partition partition = fabricate_partition(training, 0);
    const MetaTrainOutcome out = trainer.meta_train_step(zero, pair, partition);
    CHECK(out.loss == doctest::Approx(2.0 * std::log(8.0)).epsilon(1e-12));
  }
  SUBCASE("empty clean pool for the first domain is an error") {
    Partition partition;
    for (const auto& ds : training)
      for (const auto& s : ds.samples) partition.noisy.insert(s.id);
    const ModelState state = fx.state();
    CHECK_THROWS_WITH_AS(trainer.meta_train_step(state, pair, partition),
                         doctest::Contains("empty clean pool"), std::runtime_error);
  }
}

TEST_CASE("meta-test domain selection honors the cross-domain flag") {
  Fixture fx;
  const auto training = fx.training();
  // clean samples only in domain_00: cross-domain meta-test must fail,
  // same-domain meta-test must pass
  Partition partition;
  for (const auto& ds : training)
    for (const auto& s : ds.samples) {
      if (ds.name == "domain_00")
        partition.clean.insert(s.id);
      else
        partition.noisy.insert(s.id);
    }
  const std::pair<std::string, std::string> pair{"domain_00", "domain_01"};
  const ModelState state = fx.state();

  MetaTrainer cross(training, fx.split, fx.cfg);
  CHECK_THROWS_AS(cross.meta_test_step(state, pair, partition), std::runtime_error);

  TrainConfig cfg = fx.cfg;
  cfg.ablations.cross_domain_meta_test = false;
  MetaTrainer same(training, fx.split, cfg);
  const MetaTestOutcome out = same.meta_test_step(state, pair, partition);
  CHECK(std::isfinite(out.loss));
}

TEST_CASE("outer update") {
  Fixture fx;
  const auto training = fx.training();
  MetaTrainer trainer(training, fx.split, fx.cfg);
  const std::pair<std::string, std::string> pair{"domain_00", "domain_01"};
  const Partition partition = fabricate_partition(training, 1);

  SUBCASE("zero meta-test gradient reduces to a plain step on the meta-train loss") {
    ModelState state = fx.state(2);
    const MetaTrainOutcome train = trainer.meta_train_step(state, pair, partition);
    MetaTestOutcome test;
    test.loss = 0.0;
    test.grads = zero_grads(state);
    ModelState expected = state;
    sgd_step(expected, train.grads, fx.cfg.sgd);
    trainer.outer_update(state, train, test);
    CHECK(same_params(state, expected));
    CHECK(state.step == 1);
  }
  SUBCASE("zero learning rate leaves parameters unchanged") {
    ModelState state = fx.state(3);
    const ModelState before = state;
    ParamGrads g = zero_grads(state);
    for (Tensor& t : g)
      for (double& v : t.data) v = 0.5;
    apply_sgd(state, g, 0.0);
    CHECK(same_params(state, before));
  }
}

TEST_CASE("run loop") {
  SUBCASE("zero steps returns the initial state") {
    Fixture fx;
    fx.cfg.sgd.max_steps = 0;
    ModelState state = fx.state(4);
    const ModelState before = state;
    const auto reports = run_training(fx.training(), fx.split, fx.cfg, state);
    CHECK(reports.empty());
    CHECK(same_params(state, before));
  }
  SUBCASE("one report per step, finite losses, scheduled rate logged") {
    Fixture fx;
    ModelState state = fx.state(5);
    const auto reports = run_training(fx.training(), fx.split, fx.cfg, state);
    REQUIRE(reports.size() == 20);
    for (const auto& r : reports) {
      CHECK(std::isfinite(r.loss_meta_train));
      CHECK(std::isfinite(r.loss_meta_test));
      CHECK(r.loss_meta_train >= 0.0);
      CHECK(r.clean_count + r.noisy_count == 36);  // 2 source domains x 3 known x 6
      CHECK(r.lr == doctest::Approx(r.step >= 15 ? 1e-4 : 1e-3));
    }
    CHECK(state.step == 20);
  }
  SUBCASE("identical seeds give bitwise-identical trajectories") {
    Fixture fx;
    ModelState a = fx.state(6);
    ModelState b = fx.state(6);
    const auto ra = run_training(fx.training(), fx.split, fx.cfg, a);
    const auto rb = run_training(fx.training(), fx.split, fx.cfg, b);
    CHECK(same_params(a, b));
    REQUIRE(ra.size() == rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) {
      CHECK(ra[i].loss_meta_train == rb[i].loss_meta_train);
      CHECK(ra[i].domain_i == rb[i].domain_i);
    }
  }
  SUBCASE("unknown-class training samples are rejected") {
    Fixture fx;
    ModelState state = fx.state();
    CHECK_THROWS_AS(run_training(fx.data, fx.split, fx.cfg, state), std::invalid_argument);
  }
  SUBCASE("disabled meta path degenerates to ERM") {
    Fixture fx;
    fx.cfg.ablations.use_hyb_meta = false;
    ModelState state = fx.state(7);
    const auto reports = run_training(fx.training(), fx.split, fx.cfg, state);
    REQUIRE(reports.size() == 20);
    for (const auto& r : reports) {
      CHECK(r.loss_meta_test == 0.0);
      CHECK(r.noisy_count == 0);
      CHECK(r.domain_i == "-");
    }
  }
}

TEST_CASE("prompt updates stay inside the step's crop window under synchronous mode") {
  Fixture fx;
  fx.cfg.sgd.max_steps = 1;
  fx.cfg.n_epoch_refresh = 1;
  fx.cfg.augment.crop_fraction = 0.5;
  ModelState state = fx.state(8);
  const Tensor prompt_before = state.prompt;
  MetaTrainer trainer(fx.training(), fx.split, fx.cfg);
  const auto reports = trainer.run(state);
  REQUIRE(reports.size() == 1);
  // exactly one 4x4 window may have changed
  std::size_t changed_rows_min = 99, changed_rows_max = 0, changed = 0;
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        if (state.prompt.data[(y * 8 + x) * 3 + c] != prompt_before.data[(y * 8 + x) * 3 + c]) {
          ++changed;
          changed_rows_min = std::min(changed_rows_min, y);
          changed_rows_max = std::max(changed_rows_max, y);
        }
  CHECK(changed > 0);
  CHECK(changed <= 4 * 4 * 3);
  CHECK(changed_rows_max - changed_rows_min <= 3);
}

TEST_CASE("noise-free separable data ends with a small noisy set after the second refresh") {
  // easily separable: larger images, no label noise, a few hundred steps
  Fixture fx(4, 8, 8, 1);
  fx.cfg.sgd.max_steps = 250;
  fx.cfg.sgd.decay_at_step = 200;
  fx.cfg.n_epoch_refresh = 100;
  ModelState state = fx.state(9);
  const auto reports = run_training(fx.training(), fx.split, fx.cfg, state);
  const auto& last = reports.back();
  const double frac = static_cast<double>(last.noisy_count) /
                      static_cast<double>(last.clean_count + last.noisy_count);
  CHECK(frac <= 0.05);
}

TEST_SUITE_END();
