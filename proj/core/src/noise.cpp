#include "hypm/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hypm/rng.hpp"

namespace hypm {

void NoiseSpec::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw std::invalid_argument("NoiseSpec: ratio must be in [0,1]");
  if (kind == NoiseKind::asymmetric && !similarity.has_value())
    throw std::invalid_argument("NoiseSpec: asymmetric noise requires a similarity matrix");
}

namespace {

int draw_symmetric(int clean, const std::vector<int>& known, RngStream& rng) {
  // uniform over the C-1 alternatives
  const std::size_t j = rng.uniform_below(known.size() - 1);
  std::size_t seen = 0;
  for (int k : known) {
    if (k == clean) continue;
    if (seen == j) return k;
    ++seen;
  }
  throw std::logic_error("draw_symmetric: unreachable");
}

int draw_asymmetric(int clean, const std::vector<int>& known, const SimilarityMatrix& sim,
                    RngStream& rng) {
  double total = 0.0;
  for (int k : known) {
    if (k == clean) continue;
    total += sim.at(static_cast<std::size_t>(clean), static_cast<std::size_t>(k));
  }
  if (total <= 0.0)
    throw std::runtime_error("inject: similarity row for class " + std::to_string(clean) +
                             " has no off-diagonal mass");
  const double u = rng.next_double() * total;
  double acc = 0.0;
  int last = -1;
  for (int k : known) {
    if (k == clean) continue;
    acc += sim.at(static_cast<std::size_t>(clean), static_cast<std::size_t>(k));
    last = k;
    if (u < acc) return k;
  }
  return last;  // u == total after rounding
}

}  // namespace

NoiseLedger inject(std::vector<DomainDataset>& datasets, const std::vector<int>& known_classes,
                   const NoiseSpec& spec) {
  spec.validate();
  if (known_classes.size() < 2)
    throw std::invalid_argument("inject: need >= 2 known classes to flip labels");
  if (spec.kind == NoiseKind::asymmetric) {
    const std::size_t c = spec.similarity->size();
    for (int k : known_classes)
      if (k < 0 || static_cast<std::size_t>(k) >= c)
        throw std::invalid_argument("inject: similarity matrix smaller than class index range");
  }

  std::vector<LabeledSample*> all;
  for (auto& ds : datasets)
    for (auto& s : ds.samples) {
      if (!std::binary_search(known_classes.begin(), known_classes.end(), s.label))
        throw std::invalid_argument("inject: sample '" + s.id + "' has a non-known-class label");
      all.push_back(&s);
    }

  NoiseLedger ledger;
  const std::size_t n = all.size();
  const std::size_t flips = static_cast<std::size_t>(std::llround(spec.ratio * static_cast<double>(n)));
  ledger.achieved_ratio = n == 0 ? 0.0 : static_cast<double>(flips) / static_cast<double>(n);
  if (flips == 0) return ledger;

  RngStream pick(spec.seed, "noise.select");
  RngStream repl(spec.seed, "noise.replace");
  std::vector<std::size_t> chosen = pick.sample_without_replacement(n, flips);
  std::sort(chosen.begin(), chosen.end());  // replacement draws in dataset order
  for (std::size_t idx : chosen) {
    LabeledSample& s = *all[idx];
    const int clean = s.label;
    const int noisy = spec.kind == NoiseKind::symmetric
                          ? draw_symmetric(clean, known_classes, repl)
                          : draw_asymmetric(clean, known_classes, *spec.similarity, repl);
    s.label = noisy;
    ledger.entries.push_back({s.id, clean, noisy});
  }
  return ledger;
}

SimilarityMatrix load_similarity(const std::filesystem::path& path,
                                 const std::vector<std::string>& expected_class_names) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_similarity: cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("load_similarity: empty file");
  SimilarityMatrix m;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) m.class_names.push_back(tok);
  }
  if (!expected_class_names.empty() && m.class_names != expected_class_names)
    throw std::runtime_error("load_similarity: class-name header does not match the manifest");
  const std::size_t c = m.class_names.size();
  m.values.assign(c * c, 0.0);
  for (std::size_t row = 0; row < c; ++row) {
    if (!std::getline(f, line))
      throw std::runtime_error("load_similarity: expected " + std::to_string(c) + " rows");
    std::stringstream ss(line);
    std::string tok;
    std::size_t col = 0;
    while (std::getline(ss, tok, ',')) {
      if (col >= c) throw std::runtime_error("load_similarity: row wider than header");
      const double v = std::stod(tok);
      if (std::isnan(v)) throw std::runtime_error("load_similarity: NaN entry");
      m.values[row * c + col] = std::max(v, 0.0);
      ++col;
    }
    if (col != c) throw std::runtime_error("load_similarity: non-square matrix");
  }
  // zero diagonal, then symmetrize
  for (std::size_t i = 0; i < c; ++i) m.values[i * c + i] = 0.0;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = i + 1; j < c; ++j) {
      const double avg = (m.values[i * c + j] + m.values[j * c + i]) / 2.0;
      m.values[i * c + j] = avg;
      m.values[j * c + i] = avg;
    }
  return m;
}

void write_noise_ledger(const NoiseLedger& ledger, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_noise_ledger: cannot open " + path.string());
  f << "sample_id,clean_label,noisy_label\n";
  for (const auto& e : ledger.entries)
    f << e.sample_id << "," << e.clean_label << "," << e.noisy_label << "\n";
}

NoisyLabelOverride load_noisy_labels(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_noisy_labels: cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line))
    throw std::runtime_error("load_noisy_labels: empty file " + path.string());
  // Header: sample_id,clean_label,noisy_label. Only columns 0 and 2 are read.
  NoisyLabelOverride ov;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, clean, noisy;
    if (!std::getline(ss, id, ',') || !std::getline(ss, clean, ',') ||
        !std::getline(ss, noisy, ','))
      throw std::runtime_error("load_noisy_labels: malformed row '" + line + "'");
    ov.noisy_labels.emplace_back(id, std::stoi(noisy));
  }
  return ov;
}

void apply_label_override(std::vector<DomainDataset>& datasets, const NoisyLabelOverride& ov) {
  std::map<std::string, LabeledSample*> by_id;
  for (auto& ds : datasets)
    for (auto& s : ds.samples) by_id[s.id] = &s;
  for (const auto& [id, label] : ov.noisy_labels) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw std::runtime_error("apply_label_override: unknown sample id '" + id + "'");
    it->second->label = label;
  }
}

}  // namespace hypm
