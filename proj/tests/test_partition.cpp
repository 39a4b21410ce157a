#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hypm/partition.hpp"
#include "hypm/rng.hpp"

using namespace hypm;

namespace {

BallConfig unit_ball() {
  BallConfig cfg;
  cfg.gamma = 1.0;
  return cfg;
}

struct Plant {
  std::vector<EmbeddedSample> samples;
  std::set<std::string> planted_noisy;           // ids whose label was flipped
  std::map<std::string, int> true_labels;        // id -> real cluster
};

/// Two domains, `classes` clusters at well-separated centers, `per_class`
/// samples each; `flip_per_class` of them are embedded near another class's
/// center but keep the wrong (planted) label.
Plant make_plant(std::size_t classes, std::size_t per_class, std::size_t flip_per_class,
                 double sigma, std::uint64_t seed) {
  Plant plant;
  RngStream rng(seed, "plant");
  const std::size_t dim = 4;
  std::vector<std::vector<double>> mu(classes, std::vector<double>(dim, 0.0));
  for (std::size_t k = 0; k < classes; ++k) mu[k][k % dim] = (k / dim) % 2 == 0 ? 2.0 : -2.0;
  for (const std::string& domain : {std::string("s0"), std::string("s1")}) {
    for (std::size_t k = 0; k < classes; ++k) {
      for (std::size_t i = 0; i < per_class; ++i) {
        EmbeddedSample s;
        s.id = domain + "_k" + std::to_string(k) + "_" + std::to_string(i);
        s.domain = domain;
        s.label = static_cast<int>(k);
        const bool flipped = i < flip_per_class;
        const std::size_t source = flipped ? (k + 1) % classes : k;
        s.embedding = mu[source];
        for (double& v : s.embedding) v += sigma * rng.normal();
        plant.true_labels[s.id] = static_cast<int>(source);
        if (flipped) plant.planted_noisy.insert(s.id);
        plant.samples.push_back(std::move(s));
      }
    }
  }
  return plant;
}

}  // namespace

TEST_SUITE_BEGIN("partition");

TEST_CASE("mode threshold") {
  const ModeConfig cfg32{32};
  SUBCASE("hand histogram, default bins") {
    CHECK(mode_threshold({1.0, 1.0, 1.0, 5.0}, cfg32) == doctest::Approx(1.125).epsilon(1e-12));
  }
  SUBCASE("hand histogram, two bins") {
    CHECK(mode_threshold({0.0, 0.0, 0.0, 0.9, 1.0}, ModeConfig{2}) ==
          doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("degenerate all-equal input") {
    CHECK(mode_threshold({2.5, 2.5, 2.5}, cfg32) == doctest::Approx(3.5));
  }
  SUBCASE("ties pick the lowest bin") {
    // two bins, equal counts -> first bin wins, right edge 0.5
    CHECK(mode_threshold({0.0, 0.0, 1.0, 1.0}, ModeConfig{2}) == doctest::Approx(0.5));
  }
  SUBCASE("contracts") {
    CHECK_THROWS_AS(mode_threshold({}, cfg32), std::invalid_argument);
    CHECK_THROWS_AS(mode_threshold({1.0}, ModeConfig{1}), std::invalid_argument);
  }
}

TEST_CASE("one sample per class: everything clean, centers equal the samples") {
  const BallConfig ball = unit_ball();
  std::vector<EmbeddedSample> samples;
  for (int k = 0; k < 3; ++k) {
    EmbeddedSample s;
    s.id = "x" + std::to_string(k);
    s.domain = "s0";
    s.label = k;
    s.embedding = {0.3 * k, -0.1 * k};
    samples.push_back(s);
  }
  const PrototypeTable table =
      compute_prototypes(samples, {0, 1, 2}, PrototypeSpace::hyperbolic, ball, ModeConfig{32}, 0);
  REQUIRE(table.centers.size() == 3);
  for (const auto& s : samples) {
    const auto& center = table.centers.at({s.domain, s.label});
    const auto mapped = exp_map(s.embedding, ball).coords;
    for (std::size_t i = 0; i < mapped.size(); ++i)
      CHECK(center[i] == doctest::Approx(mapped[i]).epsilon(1e-14));
  }
  const Partition p = split_clean_noisy(samples, table, PrototypeSpace::hyperbolic, ball);
  CHECK(p.clean.size() == 3);
  CHECK(p.noisy.empty());
}

TEST_CASE("prototype table is deterministic") {
  const Plant plant = make_plant(3, 20, 4, 0.05, 17);
  const BallConfig ball = unit_ball();
  const PrototypeTable a =
      compute_prototypes(plant.samples, {0, 1, 2}, PrototypeSpace::hyperbolic, ball, ModeConfig{32}, 5);
  const PrototypeTable b =
      compute_prototypes(plant.samples, {0, 1, 2}, PrototypeSpace::hyperbolic, ball, ModeConfig{32}, 5);
  REQUIRE(a.centers.size() == b.centers.size());
  for (const auto& [key, center] : a.centers) {
    CHECK(b.centers.at(key) == center);                    // bitwise
    CHECK(b.thresholds.at(key) == a.thresholds.at(key));   // bitwise
  }
}

TEST_CASE("planted clusters: split recovers the mislabeled minority") {
  const Plant plant = make_plant(3, 50, 10, 0.02, 23);  // 20% planted noise
  const BallConfig ball = unit_ball();

  // separation sanity: inter-center distance at least 10x the cluster radius
  {
    const auto a = exp_map(std::vector<double>{2.0, 0, 0, 0}, ball);
    const auto b = exp_map(std::vector<double>{0, 2.0, 0, 0}, ball);
    const auto a_off = exp_map(std::vector<double>{2.0 + 3 * 0.02, 0, 0, 0}, ball);
    CHECK(hyperbolic_distance(a, b, ball) >= 10.0 * hyperbolic_distance(a, a_off, ball));
  }

  for (PrototypeSpace space : {PrototypeSpace::hyperbolic, PrototypeSpace::euclidean}) {
    const PartitionResult result =
        compute_partition(plant.samples, {0, 1, 2}, space, ball, ModeConfig{32}, 0);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& s : plant.samples) {
      const bool planted = plant.planted_noisy.count(s.id) > 0;
      const bool flagged = result.base.noisy.count(s.id) > 0;
      tp += planted && flagged;
      fp += !planted && flagged;
      fn += planted && !flagged;
    }
    const double f1 = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    CHECK(f1 >= 0.9);

    // label correction recovers the true cluster for every noisy sample
    for (const std::string& domain : {"s0", "s1"}) {
      const auto& corrected = result.corrected_by_domain.at(domain);
      for (const auto& [id, label] : corrected)
        CHECK(label == plant.true_labels.at(id));
    }
  }
}

TEST_CASE("split boundary semantics") {
  const BallConfig ball = unit_ball();
  PrototypeTable table;
  table.centers[{"s0", 0}] = {0.0};
  std::vector<EmbeddedSample> samples;
  samples.push_back({"at", "s0", 0, {0.1}});
  samples.push_back({"below", "s0", 0, {0.05}});
  samples.push_back({"orphan", "s0", 5, {0.0}});  // no (s0,5) prototype
  // pin the threshold to the exact computed distance of the first sample
  const double d_at = prototype_distance(exp_map(samples[0].embedding, ball).coords,
                                         table.centers.at({"s0", 0}), PrototypeSpace::hyperbolic,
                                         ball);
  table.thresholds[{"s0", 0}] = d_at;
  const Partition p = split_clean_noisy(samples, table, PrototypeSpace::hyperbolic, ball);
  CHECK(p.noisy.count("at") == 1);  // d == threshold is noisy
  CHECK(p.clean.count("below") == 1);
  CHECK(p.noisy.count("orphan") == 1);
}

TEST_CASE("label correction") {
  const BallConfig ball = unit_ball();
  PrototypeTable table;
  table.centers[{"s0", 1}] = {-0.2};
  table.centers[{"s0", 3}] = {0.5};
  table.centers[{"s0", 4}] = {0.2};
  table.thresholds[{"s0", 1}] = table.thresholds[{"s0", 3}] = table.thresholds[{"s0", 4}] = 1.0;

  SUBCASE("sample coinciding with a center gets its class") {
    // embedding that maps exactly onto the class-3 center
    const double z = std::atanh(0.5);
    std::vector<EmbeddedSample> noisy{{"n", "s0", 0, {z}}};
    const auto corrected = correct_labels(noisy, table, "s0", PrototypeSpace::hyperbolic, ball);
    CHECK(corrected.at("n") == 3);
  }
  SUBCASE("exact equidistance resolves to the lowest class index") {
    std::vector<EmbeddedSample> noisy{{"n", "s0", 0, {0.0}}};  // midway between -0.2 and 0.2
    const auto corrected = correct_labels(noisy, table, "s0", PrototypeSpace::hyperbolic, ball);
    CHECK(corrected.at("n") == 1);
  }
  SUBCASE("domain without prototypes") {
    std::vector<EmbeddedSample> noisy{{"n", "s1", 0, {0.0}}};
    CHECK_THROWS_AS(correct_labels(noisy, table, "s1", PrototypeSpace::hyperbolic, ball),
                    std::runtime_error);
  }
}

TEST_CASE("metric routes agree on nearest-prototype assignments in 1-D") {
  const BallConfig ball = unit_ball();
  // frozen closed forms: d_h(0.1,0)=0.2007 < d_h(0.1,0.9)=2.7438;
  //                      d_h(0.8,0)=2.1972 > d_h(0.8,0.9)=0.7472
  CHECK(prototype_distance({0.1}, {0.0}, PrototypeSpace::hyperbolic, ball) ==
        doctest::Approx(0.20067069546215116).epsilon(1e-12));
  CHECK(prototype_distance({0.1}, {0.9}, PrototypeSpace::hyperbolic, ball) ==
        doctest::Approx(2.743768283704289).epsilon(1e-12));
  CHECK(prototype_distance({0.8}, {0.0}, PrototypeSpace::hyperbolic, ball) ==
        doctest::Approx(2.1972245773362196).epsilon(1e-12));
  CHECK(prototype_distance({0.8}, {0.9}, PrototypeSpace::hyperbolic, ball) ==
        doctest::Approx(0.7472144018302211).epsilon(1e-12));
  for (PrototypeSpace space : {PrototypeSpace::hyperbolic, PrototypeSpace::euclidean}) {
    const double d00 = prototype_distance({0.1}, {0.0}, space, ball);
    const double d09 = prototype_distance({0.1}, {0.9}, space, ball);
    CHECK(d00 < d09);
    const double d80 = prototype_distance({0.8}, {0.0}, space, ball);
    const double d89 = prototype_distance({0.8}, {0.9}, space, ball);
    CHECK(d89 < d80);
  }
}

TEST_CASE("small-norm embeddings give the same partition in both spaces") {
  Plant plant = make_plant(3, 30, 6, 0.0005, 31);
  for (auto& s : plant.samples)
    for (double& v : s.embedding) v *= 0.005;  // norms well below the radius
  const BallConfig ball = unit_ball();
  const PartitionResult hyp =
      compute_partition(plant.samples, {0, 1, 2}, PrototypeSpace::hyperbolic, ball, ModeConfig{32}, 0);
  const PartitionResult euc =
      compute_partition(plant.samples, {0, 1, 2}, PrototypeSpace::euclidean, ball, ModeConfig{32}, 0);
  CHECK(hyp.base.clean == euc.base.clean);
  CHECK(hyp.base.noisy == euc.base.noisy);
  CHECK(hyp.corrected_by_domain == euc.corrected_by_domain);
}

TEST_CASE("partition view and csv dump") {
  const Plant plant = make_plant(3, 10, 2, 0.02, 41);
  const BallConfig ball = unit_ball();
  const PartitionResult result =
      compute_partition(plant.samples, {0, 1, 2}, PrototypeSpace::hyperbolic, ball, ModeConfig{32}, 7);
  CHECK(result.table.computed_at_step == 7);
  const Partition view = result.view("s0");
  CHECK(view.clean == result.base.clean);
  CHECK(view.corrected_labels.size() == result.base.noisy.size());
  for (const auto& [id, _] : view.corrected_labels) CHECK(result.base.noisy.count(id) == 1);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hypm_partition_test";
  fs::create_directories(dir);
  write_partition_csv(plant.samples, result.table, view, PrototypeSpace::hyperbolic, ball,
                      dir / "partition.csv");
  std::ifstream f(dir / "partition.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == plant.samples.size() + 1);
}

TEST_SUITE_END();
