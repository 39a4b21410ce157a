#include "hypm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hypm/autodiff.hpp"

namespace hypm {

std::vector<EvalRecord> score_test_set(const ModelState& state, const DomainDataset& test_data,
                                       const SplitSpec& split) {
  if (test_data.name != split.test_domain)
    throw std::invalid_argument("score_test_set: dataset is not the held-out test domain");
  const std::size_t c = state.arch.num_known_classes;
  std::vector<EvalRecord> records;
  records.reserve(test_data.samples.size());
  const std::size_t chunk = 64;
  for (std::size_t begin = 0; begin < test_data.samples.size(); begin += chunk) {
    const std::size_t end = std::min(test_data.samples.size(), begin + chunk);
    SamplePool batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&test_data.samples[i]);
    const Tensor logits = head_forward(state, backbone_forward(state, stack_images(batch)));
    const Tensor probs = ad::kernels::softmax(logits);
    const std::size_t k_total = logits.shape[1];
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const LabeledSample& s = *batch[i];
      EvalRecord r;
      r.sample_id = s.id;
      r.unknown = !split.is_known(s.label);
      r.true_class = r.unknown ? -1 : s.label;
      r.scores.assign(probs.data.begin() + static_cast<std::ptrdiff_t>(i * k_total),
                      probs.data.begin() + static_cast<std::ptrdiff_t>(i * k_total + c));
      r.predicted = 0;
      r.confidence = r.scores[0];
      for (std::size_t j = 1; j < c; ++j)
        if (r.scores[j] > r.confidence) {
          r.confidence = r.scores[j];
          r.predicted = static_cast<int>(j);
        }
      records.push_back(std::move(r));
    }
  }
  return records;
}

namespace {

void split_populations(const std::vector<EvalRecord>& records, std::vector<const EvalRecord*>& known,
                       std::vector<const EvalRecord*>& unknown) {
  for (const EvalRecord& r : records)
    (r.unknown ? unknown : known).push_back(&r);
}

void require_both(const std::vector<const EvalRecord*>& known,
                  const std::vector<const EvalRecord*>& unknown, const char* who) {
  if (known.empty() || unknown.empty())
    throw std::invalid_argument(std::string(who) + ": need at least one known and one unknown record");
}

}  // namespace

double closed_set_accuracy(const std::vector<EvalRecord>& records) {
  std::size_t n = 0, correct = 0;
  for (const EvalRecord& r : records) {
    if (r.unknown) continue;
    ++n;
    if (r.predicted == r.true_class) ++correct;
  }
  if (n == 0) throw std::invalid_argument("closed_set_accuracy: no known-class records");
  return static_cast<double>(correct) / static_cast<double>(n);
}

double h_score(const std::vector<EvalRecord>& records, double threshold) {
  std::vector<const EvalRecord*> known, unknown;
  split_populations(records, known, unknown);
  require_both(known, unknown, "h_score");
  std::size_t k_ok = 0, u_ok = 0;
  for (const EvalRecord* r : known)
    if (r->predicted == r->true_class && r->confidence >= threshold) ++k_ok;
  for (const EvalRecord* r : unknown)
    if (r->confidence < threshold) ++u_ok;
  const double a = static_cast<double>(k_ok) / static_cast<double>(known.size());
  const double b = static_cast<double>(u_ok) / static_cast<double>(unknown.size());
  if (a == 0.0 && b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

double h_score_best(const std::vector<EvalRecord>& records) {
  std::set<double> candidates{0.0, 0.5, 1.0};
  for (const EvalRecord& r : records) candidates.insert(r.confidence);
  double best = 0.0;
  for (double t : candidates) best = std::max(best, h_score(records, t));
  return best;
}

std::vector<OscrPoint> oscr_curve(const std::vector<EvalRecord>& records) {
  std::vector<const EvalRecord*> known, unknown;
  split_populations(records, known, unknown);
  require_both(known, unknown, "oscr");
  std::set<double, std::greater<double>> thresholds{0.0, 1.0};
  for (const EvalRecord& r : records) thresholds.insert(r.confidence);
  std::vector<OscrPoint> curve;
  curve.reserve(thresholds.size());
  for (double t : thresholds) {
    OscrPoint p;
    p.threshold = t;
    std::size_t cc = 0, fp = 0;
    for (const EvalRecord* r : known)
      if (r->predicted == r->true_class && r->confidence >= t) ++cc;
    for (const EvalRecord* r : unknown)
      if (r->confidence >= t) ++fp;
    p.ccr = static_cast<double>(cc) / static_cast<double>(known.size());
    p.fpr = static_cast<double>(fp) / static_cast<double>(unknown.size());
    curve.push_back(p);
  }
  return curve;
}

double oscr(const std::vector<EvalRecord>& records) {
  std::vector<OscrPoint> curve = oscr_curve(records);
  std::stable_sort(curve.begin(), curve.end(), [](const OscrPoint& a, const OscrPoint& b) {
    return a.fpr < b.fpr;
  });
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].ccr + curve[i - 1].ccr) / 2.0;
  return area;
}

MetricsReport compute_metrics(const std::vector<EvalRecord>& records, double threshold) {
  MetricsReport m;
  m.threshold_used = threshold;
  m.acc = closed_set_accuracy(records);
  m.h_score_at_threshold = h_score(records, threshold);
  m.h_score_best = h_score_best(records);
  m.oscr = oscr(records);
  for (const EvalRecord& r : records) (r.unknown ? m.n_unknown : m.n_known)++;
  return m;
}

void export_confidences(const std::vector<EvalRecord>& records,
                        const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("export_confidences: cannot open " + path.string());
  f << "sample_id,population,confidence,predicted,true\n";
  f.precision(17);
  for (const EvalRecord& r : records)
    f << r.sample_id << "," << (r.unknown ? "unknown" : "known") << "," << r.confidence << ","
      << r.predicted << "," << (r.unknown ? std::string("unknown") : std::to_string(r.true_class))
      << "\n";
}

std::vector<EvalRecord> import_confidences(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("import_confidences: cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("import_confidences: empty file");
  std::vector<EvalRecord> records;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, population, confidence, predicted, true_class;
    if (!std::getline(ss, id, ',') || !std::getline(ss, population, ',') ||
        !std::getline(ss, confidence, ',') || !std::getline(ss, predicted, ',') ||
        !std::getline(ss, true_class, ','))
      throw std::runtime_error("import_confidences: malformed row '" + line + "'");
    EvalRecord r;
    r.sample_id = id;
    r.unknown = population == "unknown";
    r.confidence = std::stod(confidence);
    r.predicted = std::stoi(predicted);
    r.true_class = r.unknown ? -1 : std::stoi(true_class);
    r.scores = {r.confidence};
    records.push_back(std::move(r));
  }
  return records;
}

void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path) {
  nlohmann::json j;
  j["acc"] = report.acc;
  j["h_score_at_threshold"] = report.h_score_at_threshold;
  j["h_score_best"] = report.h_score_best;
  j["oscr"] = report.oscr;
  j["threshold_used"] = report.threshold_used;
  j["n_known"] = report.n_known;
  j["n_unknown"] = report.n_unknown;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_metrics_json: cannot open " + path.string());
  f << j.dump(2) << "\n";
}

void write_oscr_curve_csv(const std::vector<OscrPoint>& curve,
                          const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_oscr_curve_csv: cannot open " + path.string());
  f << "threshold,ccr,fpr\n";
  f.precision(17);
  for (const OscrPoint& p : curve) f << p.threshold << "," << p.ccr << "," << p.fpr << "\n";
}

}  // namespace hypm
