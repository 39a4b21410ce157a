#include "hypm/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <thread>

namespace hypm {

void ModeConfig::validate() const {
  if (num_bins < 2) throw std::invalid_argument("ModeConfig: num_bins must be >= 2");
}

std::vector<EmbeddedSample> extract_embeddings(const ModelState& state, const SamplePool& pool,
                                               unsigned num_threads) {
  SamplePool sorted = pool;
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledSample* a, const LabeledSample* b) { return a->id < b->id; });
  std::vector<EmbeddedSample> out(sorted.size());
  const unsigned workers =
      std::max(1u, std::min<unsigned>(num_threads, static_cast<unsigned>(sorted.size())));
  auto embed_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const LabeledSample* s = sorted[i];
      Tensor batch({1, s->image.shape[0], s->image.shape[1], s->image.shape[2]}, s->image.data);
      Tensor z = backbone_forward(state, batch);
      out[i] = {s->id, s->domain, s->label, std::move(z.data)};
    }
  };
  if (workers == 1) {
    embed_range(0, sorted.size());
  } else {
    std::vector<std::thread> threads;
    const std::size_t chunk = (sorted.size() + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(sorted.size(), begin + chunk);
      if (begin < end) threads.emplace_back(embed_range, begin, end);
    }
    for (auto& t : threads) t.join();
  }
  return out;
}

double mode_threshold(const std::vector<double>& distances, const ModeConfig& cfg) {
  cfg.validate();
  if (distances.empty()) throw std::invalid_argument("mode_threshold: empty distance list");
  const auto [mn_it, mx_it] = std::minmax_element(distances.begin(), distances.end());
  const double mn = *mn_it, mx = *mx_it;
  if (mn == mx) return mx + 1.0;  // all equal: everything counts as clean
  const double width = (mx - mn) / static_cast<double>(cfg.num_bins);
  std::vector<std::size_t> counts(cfg.num_bins, 0);
  for (double d : distances) {
    auto bin = static_cast<std::size_t>((d - mn) / width);
    ++counts[std::min(bin, cfg.num_bins - 1)];
  }
  std::size_t modal = 0;
  for (std::size_t b = 1; b < cfg.num_bins; ++b)
    if (counts[b] > counts[modal]) modal = b;  // ties keep the lowest bin
  return mn + width * static_cast<double>(modal + 1);
}

namespace {

std::vector<double> map_embedding(const std::vector<double>& z, PrototypeSpace space,
                                  const BallConfig& ball) {
  if (space == PrototypeSpace::euclidean) return z;
  return exp_map(z, ball).coords;
}

double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

double prototype_distance(const std::vector<double>& embedding, const std::vector<double>& center,
                          PrototypeSpace space, const BallConfig& ball) {
  if (embedding.size() != center.size())
    throw std::invalid_argument("prototype_distance: dimension mismatch");
  if (space == PrototypeSpace::euclidean) return euclidean_distance(embedding, center);
  return hyperbolic_distance(BallPoint{embedding}, BallPoint{center}, ball);
}

PrototypeTable compute_prototypes(const std::vector<EmbeddedSample>& samples,
                                  const std::vector<int>& known_classes, PrototypeSpace space,
                                  const BallConfig& ball, const ModeConfig& mode, long step) {
  if (samples.empty()) throw std::invalid_argument("compute_prototypes: no samples");
  ball.validate();
  mode.validate();

  std::map<DomainClass, std::vector<std::vector<double>>> mapped_by_group;
  std::set<std::string> domains;
  for (const EmbeddedSample& s : samples) {
    mapped_by_group[{s.domain, s.label}].push_back(map_embedding(s.embedding, space, ball));
    domains.insert(s.domain);
  }
  for (const std::string& d : domains)
    for (int k : known_classes)
      if (!mapped_by_group.count({d, k}))
        std::cerr << "compute_prototypes: no samples for class " << k << " in domain " << d
                  << "; prototype omitted\n";

  PrototypeTable table;
  table.computed_at_step = step;
  for (const auto& [key, points] : mapped_by_group) {
    std::vector<double> center;
    if (space == PrototypeSpace::euclidean) {
      center.assign(points.front().size(), 0.0);
      for (const auto& p : points)
        for (std::size_t i = 0; i < center.size(); ++i) center[i] += p[i];
      for (double& v : center) v /= static_cast<double>(points.size());
    } else {
      std::vector<BallPoint> ball_points;
      ball_points.reserve(points.size());
      for (const auto& p : points) ball_points.push_back(BallPoint{p});
      center = hyperbolic_mean(ball_points, ball).coords;
    }
    std::vector<double> distances;
    distances.reserve(points.size());
    for (const auto& p : points) distances.push_back(prototype_distance(p, center, space, ball));
    table.thresholds[key] = mode_threshold(distances, mode);
    table.centers[key] = std::move(center);
  }
  return table;
}

Partition split_clean_noisy(const std::vector<EmbeddedSample>& samples,
                            const PrototypeTable& table, PrototypeSpace space,
                            const BallConfig& ball) {
  Partition p;
  for (const EmbeddedSample& s : samples) {
    const auto center = table.centers.find({s.domain, s.label});
    if (center == table.centers.end()) {
      p.noisy.insert(s.id);  // no own-prototype distance exists
      continue;
    }
    const double d =
        prototype_distance(map_embedding(s.embedding, space, ball), center->second, space, ball);
    const double threshold = table.thresholds.at({s.domain, s.label});
    if (d < threshold)
      p.clean.insert(s.id);
    else
      p.noisy.insert(s.id);
  }
  return p;
}

std::map<std::string, int> correct_labels(const std::vector<EmbeddedSample>& noisy_samples,
                                          const PrototypeTable& table, const std::string& domain,
                                          PrototypeSpace space, const BallConfig& ball) {
  std::vector<std::pair<int, const std::vector<double>*>> candidates;
  for (const auto& [key, center] : table.centers)
    if (key.first == domain) candidates.emplace_back(key.second, &center);
  if (candidates.empty())
    throw std::runtime_error("correct_labels: no prototypes for domain '" + domain + "'");
  // map iteration order already gives ascending class index; ties keep the
  // first (lowest) class because of the strict < below
  std::map<std::string, int> corrected;
  for (const EmbeddedSample& s : noisy_samples) {
    const std::vector<double> mapped = map_embedding(s.embedding, space, ball);
    int best_label = candidates.front().first;
    double best = prototype_distance(mapped, *candidates.front().second, space, ball);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
      const double d = prototype_distance(mapped, *candidates[i].second, space, ball);
      if (d < best) {
        best = d;
        best_label = candidates[i].first;
      }
    }
    corrected[s.id] = best_label;
  }
  return corrected;
}

Partition PartitionResult::view(const std::string& correcting_domain) const {
  Partition p;
  p.clean = base.clean;
  p.noisy = base.noisy;
  const auto it = corrected_by_domain.find(correcting_domain);
  if (it != corrected_by_domain.end()) p.corrected_labels = it->second;
  return p;
}

PartitionResult compute_partition(const std::vector<EmbeddedSample>& samples,
                                  const std::vector<int>& known_classes, PrototypeSpace space,
                                  const BallConfig& ball, const ModeConfig& mode, long step) {
  PartitionResult result;
  result.table = compute_prototypes(samples, known_classes, space, ball, mode, step);
  result.base = split_clean_noisy(samples, result.table, space, ball);
  std::vector<EmbeddedSample> noisy;
  for (const EmbeddedSample& s : samples)
    if (result.base.noisy.count(s.id)) noisy.push_back(s);
  std::set<std::string> domains;
  for (const EmbeddedSample& s : samples) domains.insert(s.domain);
  for (const std::string& d : domains)
    result.corrected_by_domain[d] = correct_labels(noisy, result.table, d, space, ball);
  return result;
}

void write_partition_csv(const std::vector<EmbeddedSample>& samples, const PrototypeTable& table,
                         const Partition& partition, PrototypeSpace space, const BallConfig& ball,
                         const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_partition_csv: cannot open " + path.string());
  f << "sample_id,domain,given_label,distance,threshold,assignment,corrected_label\n";
  for (const EmbeddedSample& s : samples) {
    double distance = std::nan("");
    double threshold = std::nan("");
    const auto center = table.centers.find({s.domain, s.label});
    if (center != table.centers.end()) {
      distance =
          prototype_distance(map_embedding(s.embedding, space, ball), center->second, space, ball);
      threshold = table.thresholds.at({s.domain, s.label});
    }
    const bool clean = partition.clean.count(s.id) > 0;
    const auto corrected = partition.corrected_labels.find(s.id);
    f << s.id << "," << s.domain << "," << s.label << "," << distance << "," << threshold << ","
      << (clean ? "clean" : "noisy") << ","
      << (corrected == partition.corrected_labels.end() ? -1 : corrected->second) << "\n";
  }
}

}  // namespace hypm
