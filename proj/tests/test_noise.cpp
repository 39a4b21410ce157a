#include <doctest.h>

#include <cmath>
#include <map>
#include <filesystem>
#include <fstream>

#include "hypm/dataset.hpp"
#include "hypm/noise.hpp"

using namespace hypm;
namespace fs = std::filesystem;

namespace {

// Label-only dataset; images are 1x1 pixels.
std::vector<DomainDataset> label_data(const std::vector<int>& labels) {
  DomainDataset ds;
  ds.name = "d0";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    LabeledSample s;
    s.id = "s" + std::to_string(i);
    s.domain = ds.name;
    s.label = labels[i];
    s.image = Tensor({1, 1, 3}, 0.0);
    ds.samples.push_back(std::move(s));
  }
  return {ds};
}

SimilarityMatrix banded(const std::vector<std::string>& names,
                        const std::vector<double>& values) {
  return SimilarityMatrix{names, values};
}

}  // namespace

TEST_SUITE_BEGIN("noise");

TEST_CASE("zero ratio leaves everything untouched") {
  auto data = label_data({0, 1, 2, 3, 0, 1});
  NoiseSpec spec;
  spec.ratio = 0.0;
  const NoiseLedger ledger = inject(data, {0, 1, 2, 3}, spec);
  CHECK(ledger.entries.empty());
  CHECK(ledger.achieved_ratio == 0.0);
  for (std::size_t i = 0; i < 6; ++i) CHECK(data[0].samples[i].label == std::vector<int>{0, 1, 2, 3, 0, 1}[i]);
}

TEST_CASE("exact flip count") {
  std::vector<int> labels(1000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
  auto data = label_data(labels);
  NoiseSpec spec;
  spec.ratio = 0.2;
  spec.seed = 7;
  const NoiseLedger ledger = inject(data, {0, 1, 2, 3}, spec);
  CHECK(ledger.entries.size() == 200);
  CHECK(ledger.achieved_ratio == doctest::Approx(0.2));
  for (const auto& e : ledger.entries) {
    CHECK(e.noisy_label != e.clean_label);
    CHECK(e.noisy_label >= 0);
    CHECK(e.noisy_label <= 3);
  }
}

TEST_CASE("injection is a pure function of its inputs") {
  std::vector<int> labels(300);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 5);
  auto a = label_data(labels);
  auto b = label_data(labels);
  NoiseSpec spec;
  spec.ratio = 0.5;
  spec.seed = 99;
  const NoiseLedger la = inject(a, {0, 1, 2, 3, 4}, spec);
  const NoiseLedger lb = inject(b, {0, 1, 2, 3, 4}, spec);
  REQUIRE(la.entries.size() == lb.entries.size());
  for (std::size_t i = 0; i < la.entries.size(); ++i) {
    CHECK(la.entries[i].sample_id == lb.entries[i].sample_id);
    CHECK(la.entries[i].noisy_label == lb.entries[i].noisy_label);
  }
}

TEST_CASE("symmetric replacement is uniform over the alternatives") {
  std::vector<int> labels(100000, 0);
  auto data = label_data(labels);
  NoiseSpec spec;
  spec.ratio = 1.0;
  spec.seed = 3;
  const NoiseLedger ledger = inject(data, {0, 1, 2, 3}, spec);
  REQUIRE(ledger.entries.size() == labels.size());
  std::map<int, double> counts;
  for (const auto& e : ledger.entries) counts[e.noisy_label] += 1.0;
  const double n = static_cast<double>(labels.size());
  const double p = 1.0 / 3.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (int k : {1, 2, 3}) CHECK(std::abs(counts[k] - n * p) <= 3.0 * sigma);
}

TEST_CASE("asymmetric replacement follows the similarity weights") {
  std::vector<int> labels(100000, 0);
  auto data = label_data(labels);
  NoiseSpec spec;
  spec.kind = NoiseKind::asymmetric;
  spec.ratio = 1.0;
  spec.seed = 5;
  spec.similarity = banded({"a", "b", "c"}, {0.0, 0.9, 0.1,  //
                                             0.9, 0.0, 0.5,  //
                                             0.1, 0.5, 0.0});
  const NoiseLedger ledger = inject(data, {0, 1, 2}, spec);
  double to_one = 0.0;
  for (const auto& e : ledger.entries)
    if (e.noisy_label == 1) to_one += 1.0;
  const double n = static_cast<double>(labels.size());
  const double sigma = std::sqrt(n * 0.9 * 0.1);
  CHECK(std::abs(to_one - 0.9 * n) <= 3.0 * sigma);
}

TEST_CASE("spec and matrix contracts") {
  auto data = label_data({0, 1, 0, 1});
  SUBCASE("asymmetric without a similarity matrix") {
    NoiseSpec spec;
    spec.kind = NoiseKind::asymmetric;
    spec.ratio = 0.5;
    CHECK_THROWS_AS(inject(data, {0, 1}, spec), std::invalid_argument);
  }
  SUBCASE("all-zero off-diagonal row") {
    NoiseSpec spec;
    spec.kind = NoiseKind::asymmetric;
    spec.ratio = 1.0;
    spec.similarity = banded({"a", "b"}, {0.0, 0.0, 0.0, 0.0});
    CHECK_THROWS_AS(inject(data, {0, 1}, spec), std::runtime_error);
  }
  SUBCASE("labels outside the known set") {
    auto bad = label_data({0, 5});
    NoiseSpec spec;
    spec.ratio = 0.5;
    CHECK_THROWS_AS(inject(bad, {0, 1}, spec), std::invalid_argument);
  }
}

TEST_CASE("similarity csv loading") {
  const fs::path dir = fs::temp_directory_path() / "hypm_noise_test";
  fs::create_directories(dir);
  SUBCASE("asymmetric input is symmetrized and the diagonal cleared") {
    const fs::path p = dir / "sim.csv";
    std::ofstream f(p, std::ios::trunc);
    f << "a,b,c\n1,0.8,0.2\n0.4,1,0\n0.6,1.0,1\n";
    f.close();
    const SimilarityMatrix m = load_similarity(p, {"a", "b", "c"});
    CHECK(m.at(0, 0) == 0.0);
    CHECK(m.at(1, 1) == 0.0);
    CHECK(m.at(0, 1) == doctest::Approx(0.6));  // (0.8 + 0.4) / 2
    CHECK(m.at(1, 0) == doctest::Approx(0.6));
    CHECK(m.at(0, 2) == doctest::Approx(0.4));
    CHECK(m.at(1, 2) == doctest::Approx(0.5));
  }
  SUBCASE("identity matrix leaves no mass to flip to") {
    const fs::path p = dir / "id.csv";
    std::ofstream f(p, std::ios::trunc);
    f << "a,b\n1,0\n0,1\n";
    f.close();
    NoiseSpec spec;
    spec.kind = NoiseKind::asymmetric;
    spec.ratio = 1.0;
    spec.similarity = load_similarity(p, {"a", "b"});
    auto data = label_data({0, 1});
    CHECK_THROWS_AS(inject(data, {0, 1}, spec), std::runtime_error);
  }
  SUBCASE("name-order mismatch is rejected") {
    const fs::path p = dir / "names.csv";
    std::ofstream f(p, std::ios::trunc);
    f << "b,a\n0,1\n1,0\n";
    f.close();
    CHECK_THROWS_AS(load_similarity(p, {"a", "b"}), std::runtime_error);
  }
  SUBCASE("non-square input is rejected") {
    const fs::path p = dir / "sq.csv";
    std::ofstream f(p, std::ios::trunc);
    f << "a,b\n0,1\n";
    f.close();
    CHECK_THROWS_AS(load_similarity(p, {"a", "b"}), std::runtime_error);
  }
}

TEST_CASE("ledger files") {
  const fs::path dir = fs::temp_directory_path() / "hypm_noise_test";
  fs::create_directories(dir);
  NoiseLedger ledger;
  ledger.entries = {{"s1", 0, 2}, {"s2", 1, 0}};
  ledger.achieved_ratio = 0.5;
  const fs::path p = dir / "labels_noisy.csv";
  write_noise_ledger(ledger, p);
  const NoisyLabelOverride ov = load_noisy_labels(p);
  REQUIRE(ov.noisy_labels.size() == 2);
  CHECK(ov.noisy_labels[0] == std::pair<std::string, int>{"s1", 2});
  CHECK(ov.noisy_labels[1] == std::pair<std::string, int>{"s2", 0});

  auto data = label_data({0, 1, 3});
  data[0].samples[0].id = "s1";
  data[0].samples[1].id = "s2";
  apply_label_override(data, ov);
  CHECK(data[0].samples[0].label == 2);
  CHECK(data[0].samples[1].label == 0);
  CHECK(data[0].samples[2].label == 3);

  NoisyLabelOverride bad;
  bad.noisy_labels = {{"missing", 1}};
  CHECK_THROWS_AS(apply_label_override(data, bad), std::runtime_error);
}

TEST_SUITE_END();
