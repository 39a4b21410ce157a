#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "hypm/metrics.hpp"
#include "hypm/rng.hpp"

using namespace hypm;

namespace {

EvalRecord rec(bool unknown, bool correct, double confidence, int id = 0) {
  EvalRecord r;
  r.sample_id = "r" + std::to_string(id);
  r.unknown = unknown;
  r.true_class = unknown ? -1 : 0;
  r.predicted = unknown ? 1 : (correct ? 0 : 1);
  r.confidence = confidence;
  r.scores = {confidence};
  return r;
}

/// Independent brute-force sweep: recompute CCR/FPR from scratch at every
/// candidate threshold and integrate the sorted polyline.
double oscr_brute(const std::vector<EvalRecord>& records) {
  std::set<double> ts{0.0, 1.0};
  for (const auto& r : records) ts.insert(r.confidence);
  std::size_t nk = 0, nu = 0;
  for (const auto& r : records) (r.unknown ? nu : nk)++;
  std::vector<std::pair<double, double>> pts;  // (fpr, ccr)
  for (double t : ts) {
    std::size_t cc = 0, fp = 0;
    for (const auto& r : records) {
      if (!r.unknown && r.predicted == r.true_class && r.confidence >= t) ++cc;
      if (r.unknown && r.confidence >= t) ++fp;
    }
    pts.emplace_back(static_cast<double>(fp) / nu, static_cast<double>(cc) / nk);
  }
  std::sort(pts.begin(), pts.end());
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
  return area;
}

double h_brute(const std::vector<EvalRecord>& records, double t) {
  std::size_t nk = 0, nu = 0, ak = 0, au = 0;
  for (const auto& r : records) {
    if (r.unknown) {
      ++nu;
      if (r.confidence < t) ++au;
    } else {
      ++nk;
      if (r.predicted == r.true_class && r.confidence >= t) ++ak;
    }
  }
  const double a = static_cast<double>(ak) / nk, b = static_cast<double>(au) / nu;
  return (a == 0.0 && b == 0.0) ? 0.0 : 2 * a * b / (a + b);
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("closed-set accuracy") {
  SUBCASE("all correct") {
    CHECK(closed_set_accuracy({rec(false, true, 0.9), rec(false, true, 0.2)}) == 1.0);
  }
  SUBCASE("two of three") {
    CHECK(closed_set_accuracy({rec(false, true, 0.9), rec(false, true, 0.5),
                               rec(false, false, 0.8)}) == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("unknown records stay out of the denominator") {
    CHECK(closed_set_accuracy({rec(false, true, 0.9), rec(true, false, 0.99)}) == 1.0);
  }
  SUBCASE("no known records") {
    CHECK_THROWS_AS(closed_set_accuracy({rec(true, false, 0.5)}), std::invalid_argument);
  }
}

TEST_CASE("h-score") {
  SUBCASE("harmonic mean arithmetic") {
    // acc_k = 0.5, acc_u = 1.0 -> 2/3
    const std::vector<EvalRecord> rs{rec(false, true, 0.9, 1), rec(false, false, 0.6, 2),
                                     rec(true, false, 0.5, 3)};
    CHECK(h_score(rs, 0.55) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("zero threshold accepts every unknown") {
    const std::vector<EvalRecord> rs{rec(false, true, 0.9), rec(true, false, 0.5)};
    CHECK(h_score(rs, 0.0) == 0.0);
  }
  SUBCASE("missing population") {
    CHECK_THROWS_AS(h_score({rec(false, true, 0.9)}, 0.5), std::invalid_argument);
  }
  SUBCASE("best sweep dominates any fixed threshold") {
    RngStream rng(3, "metrics.h");
    std::vector<EvalRecord> rs;
    for (int i = 0; i < 60; ++i)
      rs.push_back(rec(i % 3 == 0, rng.next_double() < 0.7,
                       std::round(rng.next_double() * 10.0) / 10.0, i));
    const double best = h_score_best(rs);
    for (double t : {0.0, 0.3, 0.5, 0.77, 1.0}) CHECK(best >= h_score(rs, t) - 1e-12);
    CHECK(best >= h_score(rs, 0.5));
  }
}

TEST_CASE("oscr") {
  SUBCASE("perfect separation") {
    const std::vector<EvalRecord> rs{rec(false, true, 1.0, 1), rec(false, true, 1.0, 2),
                                     rec(true, false, 0.0, 3)};
    CHECK(oscr(rs) == doctest::Approx(1.0));
  }
  SUBCASE("hand case") {
    const std::vector<EvalRecord> rs{rec(false, true, 0.9, 1), rec(false, false, 0.6, 2),
                                     rec(true, false, 0.5, 3)};
    CHECK(oscr(rs) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("area never exceeds the closed-set ceiling") {
    RngStream rng(5, "metrics.oscr");
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<EvalRecord> rs;
      for (int i = 0; i < 40; ++i)
        rs.push_back(rec(i % 2 == 0, rng.next_double() < 0.6, rng.next_double(), i));
      CHECK(oscr(rs) <= closed_set_accuracy(rs) + 1e-12);
    }
  }
  SUBCASE("rank statistic: invariant under monotone transforms") {
    RngStream rng(6, "metrics.rank");
    std::vector<EvalRecord> rs;
    for (int i = 0; i < 50; ++i)
      rs.push_back(rec(i % 3 == 0, rng.next_double() < 0.5, rng.next_double(), i));
    const double base = oscr(rs);
    for (auto& r : rs) r.confidence = std::sqrt(r.confidence);  // strictly monotone on [0,1]
    CHECK(oscr(rs) == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("independent confidences integrate to half of the closed-set accuracy") {
    RngStream rng(7, "metrics.mc");
    std::vector<EvalRecord> rs;
    for (int i = 0; i < 10000; ++i)
      rs.push_back(rec(i % 2 == 0, rng.next_double() < 0.65, rng.next_double(), i));
    CHECK(std::abs(oscr(rs) - 0.5 * closed_set_accuracy(rs)) <= 0.02);
  }
  SUBCASE("missing population") {
    CHECK_THROWS_AS(oscr({rec(true, false, 0.4)}), std::invalid_argument);
  }
}

TEST_CASE("brute-force enumeration agrees on all small record sets") {
  RngStream rng(11, "metrics.brute");
  // confidences on a coarse grid so ties are common
  for (std::size_t n = 2; n <= 8; ++n) {
    for (int trial = 0; trial < 400; ++trial) {
      std::vector<EvalRecord> rs;
      bool has_known = false, has_unknown = false;
      for (std::size_t i = 0; i < n; ++i) {
        const bool unknown = rng.next_double() < 0.4;
        has_known |= !unknown;
        has_unknown |= unknown;
        rs.push_back(rec(unknown, rng.next_double() < 0.6,
                         static_cast<double>(rng.uniform_below(11)) / 10.0,
                         static_cast<int>(i)));
      }
      if (!has_known || !has_unknown) continue;
      CHECK(oscr(rs) == doctest::Approx(oscr_brute(rs)).epsilon(1e-12));
      for (double t : {0.0, 0.25, 0.5, 0.9})
        CHECK(h_score(rs, t) == doctest::Approx(h_brute(rs, t)).epsilon(1e-12));
    }
  }
}

TEST_CASE("export and reimport reproduce the metrics") {
  namespace fs = std::filesystem;
  RngStream rng(13, "metrics.export");
  std::vector<EvalRecord> rs;
  for (int i = 0; i < 100; ++i)
    rs.push_back(rec(i % 4 == 0, rng.next_double() < 0.7, rng.next_double(), i));
  const fs::path dir = fs::temp_directory_path() / "hypm_metrics_test";
  fs::create_directories(dir);
  export_confidences(rs, dir / "confidences.csv");
  const auto back = import_confidences(dir / "confidences.csv");
  REQUIRE(back.size() == rs.size());
  const MetricsReport a = compute_metrics(rs);
  const MetricsReport b = compute_metrics(back);
  CHECK(a.acc == doctest::Approx(b.acc).epsilon(1e-12));
  CHECK(a.h_score_at_threshold == doctest::Approx(b.h_score_at_threshold).epsilon(1e-12));
  CHECK(a.h_score_best == doctest::Approx(b.h_score_best).epsilon(1e-12));
  CHECK(a.oscr == doctest::Approx(b.oscr).epsilon(1e-12));
  CHECK(a.n_known == b.n_known);
  CHECK(a.n_unknown == b.n_unknown);

  SUBCASE("metrics json carries the full report") {
    write_metrics_json(a, dir / "metrics.json");
    std::ifstream f(dir / "metrics.json");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    for (const char* key : {"acc", "h_score_at_threshold", "h_score_best", "oscr",
                            "threshold_used", "n_known", "n_unknown"})
      CHECK(text.find(key) != std::string::npos);
  }
  SUBCASE("curve csv has one row per swept threshold") {
    const auto curve = oscr_curve(rs);
    write_oscr_curve_csv(curve, dir / "oscr_curve.csv");
    std::ifstream f(dir / "oscr_curve.csv");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(f, line))
      if (!line.empty()) ++rows;
    CHECK(rows == curve.size() + 1);
  }
}

TEST_CASE("h-score best is an upper envelope of the fixed threshold") {
  RngStream rng(17, "metrics.envelope");
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EvalRecord> rs;
    for (int i = 0; i < 30; ++i)
      rs.push_back(rec(i % 2 == 1, rng.next_double() < 0.5, rng.next_double(), i));
    const MetricsReport m = compute_metrics(rs, 0.5);
    CHECK(m.h_score_best >= m.h_score_at_threshold - 1e-12);
  }
}

TEST_SUITE_END();
