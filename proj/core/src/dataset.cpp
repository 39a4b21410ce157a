#include "hypm/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "hypm/ppm.hpp"

namespace hypm {

namespace fs = std::filesystem;

namespace {

Tensor read_ppm_checked(const fs::path& f, std::vector<std::size_t>& dims) {
  Tensor img = read_ppm(f);
  if (dims.empty()) {
    dims = {img.shape[0], img.shape[1]};
  } else if (dims[0] != img.shape[0] || dims[1] != img.shape[1]) {
    throw std::runtime_error("load_ppm_tree: mixed image dimensions at " + f.string());
  }
  return img;
}

}  // namespace

bool SplitSpec::is_known(int label) const {
  return std::binary_search(known_classes.begin(), known_classes.end(), label);
}

std::string synthetic_domain_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "domain_%02zu", index);
  return buf;
}

std::string synthetic_class_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "class_%03zu", index);
  return buf;
}

namespace {

// Domain style tables; cycled by domain index.
constexpr int kChannelPerms[6][3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1},
                                     {0, 2, 1}, {2, 1, 0}, {1, 0, 2}};
constexpr double kBrightness[6] = {0.0, 0.08, -0.08, 0.15, -0.12, 0.04};
constexpr double kNoiseSigma[6] = {0.02, 0.05, 0.08, 0.03, 0.06, 0.04};

// Bar-code colors for set/clear bits, per channel before the style transform.
constexpr double kHiColor[3] = {0.90, 0.55, 0.25};
constexpr double kLoColor[3] = {0.15, 0.35, 0.60};

}  // namespace

std::vector<DomainDataset> generate_synthetic(std::size_t num_domains, std::size_t num_classes,
                                              std::size_t per_class, std::uint64_t seed,
                                              std::size_t height, std::size_t width) {
  if (num_domains < 3) throw std::invalid_argument("generate_synthetic: need >= 3 domains");
  if (num_classes < 4) throw std::invalid_argument("generate_synthetic: need >= 4 classes");
  if (per_class < 1) throw std::invalid_argument("generate_synthetic: need >= 1 sample per class");
  if (height < 4 || width < 4) throw std::invalid_argument("generate_synthetic: image too small");

  const std::size_t bands =
      std::max<std::size_t>(4, std::bit_width(num_classes - 1));
  const std::size_t band_rows = std::max<std::size_t>(1, height / bands);

  std::vector<DomainDataset> out;
  for (std::size_t d = 0; d < num_domains; ++d) {
    DomainDataset ds;
    ds.name = synthetic_domain_name(d);
    const int* perm = kChannelPerms[d % 6];
    const double brightness = kBrightness[d % 6];
    const double sigma = kNoiseSigma[d % 6];
    for (std::size_t k = 0; k < num_classes; ++k) {
      for (std::size_t i = 0; i < per_class; ++i) {
        const std::uint64_t sample_index = (d * num_classes + k) * per_class + i;
        RngStream noise(seed, "data.pixel", sample_index);
        LabeledSample s;
        char idbuf[96];
        std::snprintf(idbuf, sizeof(idbuf), "%s_%s_%04zu", ds.name.c_str(),
                      synthetic_class_name(k).c_str(), i);
        s.id = idbuf;
        s.domain = ds.name;
        s.label = static_cast<int>(k);
        s.image = Tensor({height, width, 3});
        for (std::size_t y = 0; y < height; ++y) {
          const std::size_t band = std::min(y / band_rows, bands - 1);
          const bool bit = (k >> band) & 1u;
          const double* base = bit ? kHiColor : kLoColor;
          for (std::size_t x = 0; x < width; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
              const double v = base[perm[c]] + brightness + sigma * noise.normal();
              s.image.data[(y * width + x) * 3 + c] = std::clamp(v, 0.0, 1.0);
            }
        }
        ds.samples.push_back(std::move(s));
      }
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<DomainDataset> load_ppm_tree(const fs::path& root) {
  if (!fs::is_directory(root))
    throw std::runtime_error("load_ppm_tree: not a directory: " + root.string());
  std::vector<std::string> domain_names;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) domain_names.push_back(e.path().filename().string());
  std::sort(domain_names.begin(), domain_names.end());
  if (domain_names.empty())
    throw std::runtime_error("load_ppm_tree: no domain directories under " + root.string());

  // Class indices come from the lexicographic order of the union of class
  // directory names across all domains.
  std::set<std::string> class_set;
  for (const auto& d : domain_names)
    for (const auto& e : fs::directory_iterator(root / d))
      if (e.is_directory()) class_set.insert(e.path().filename().string());
  std::vector<std::string> class_names(class_set.begin(), class_set.end());
  std::map<std::string, int> class_index;
  for (std::size_t i = 0; i < class_names.size(); ++i)
    class_index[class_names[i]] = static_cast<int>(i);

  std::vector<DomainDataset> datasets;
  std::set<std::string> seen_ids;
  std::vector<std::size_t> dims;  // {H, W} of the first image
  for (const auto& d : domain_names) {
    DomainDataset ds;
    ds.name = d;
    for (const auto& cls : class_names) {
      const fs::path cdir = root / d / cls;
      if (!fs::is_directory(cdir)) continue;  // class absent in this domain
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(cdir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      if (files.empty())
        throw std::runtime_error("load_ppm_tree: empty class directory " + cdir.string());
      for (const auto& f : files) {
        LabeledSample s;
        s.id = f.stem().string();
        if (!seen_ids.insert(s.id).second)
          throw std::runtime_error("load_ppm_tree: duplicate sample id '" + s.id + "' at " +
                                   f.string());
        s.domain = d;
        s.label = class_index.at(cls);
        s.image = read_ppm_checked(f, dims);
        ds.samples.push_back(std::move(s));
      }
    }
    if (ds.samples.empty())
      throw std::runtime_error("load_ppm_tree: domain has no classes: " + (root / d).string());
    datasets.push_back(std::move(ds));
  }
  return datasets;
}

void write_ppm_tree(const std::vector<DomainDataset>& datasets,
                    const std::vector<std::string>& class_names, const fs::path& root) {
  fs::create_directories(root);
  for (const auto& ds : datasets)
    for (const auto& s : ds.samples) {
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= class_names.size())
        throw std::invalid_argument("write_ppm_tree: label outside class-name list");
      const fs::path dir = root / ds.name / class_names[s.label];
      fs::create_directories(dir);
      write_ppm(s.image, dir / (s.id + ".ppm"));
    }
  DatasetManifest m;
  for (const auto& ds : datasets) m.domains.push_back(ds.name);
  m.classes = class_names;
  if (!datasets.empty() && !datasets.front().samples.empty()) {
    const Tensor& img = datasets.front().samples.front().image;
    m.height = img.shape[0];
    m.width = img.shape[1];
  }
  nlohmann::json j;
  j["domains"] = m.domains;
  j["classes"] = m.classes;
  j["image_shape"] = {m.height, m.width, 3};
  std::ofstream f(root / "manifest.json", std::ios::trunc);
  if (!f) throw std::runtime_error("write_ppm_tree: cannot write manifest.json");
  f << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const fs::path& root) {
  std::ifstream f(root / "manifest.json");
  if (!f) throw std::runtime_error("read_manifest: missing " + (root / "manifest.json").string());
  nlohmann::json j = nlohmann::json::parse(f);
  DatasetManifest m;
  m.domains = j.at("domains").get<std::vector<std::string>>();
  m.classes = j.at("classes").get<std::vector<std::string>>();
  const auto shape = j.at("image_shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3 || shape[2] != 3)
    throw std::runtime_error("read_manifest: image_shape must be [H,W,3]");
  m.height = shape[0];
  m.width = shape[1];
  return m;
}

SplitSpec make_split(const std::vector<DomainDataset>& datasets, const std::string& test_domain,
                     std::size_t num_unknown) {
  const bool found = std::any_of(datasets.begin(), datasets.end(),
                                 [&](const DomainDataset& d) { return d.name == test_domain; });
  if (!found) throw std::invalid_argument("make_split: unknown domain '" + test_domain + "'");
  int max_label = -1;
  for (const auto& ds : datasets)
    for (const auto& s : ds.samples) max_label = std::max(max_label, s.label);
  const std::size_t num_classes = static_cast<std::size_t>(max_label + 1);
  if (num_unknown < 1 || num_unknown >= num_classes)
    throw std::invalid_argument("make_split: num_unknown must be in [1, num_classes)");
  SplitSpec spec;
  spec.test_domain = test_domain;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (k < num_classes - num_unknown)
      spec.known_classes.push_back(static_cast<int>(k));
    else
      spec.unknown_classes.push_back(static_cast<int>(k));
  }
  return spec;
}

SamplePool sample_batch(const SamplePool& pool, std::size_t size, RngStream& rng) {
  if (pool.empty()) throw std::invalid_argument("sample_batch: empty pool");
  SamplePool out;
  out.reserve(size);
  if (size <= pool.size()) {
    for (std::size_t idx : rng.sample_without_replacement(pool.size(), size))
      out.push_back(pool[idx]);
  } else {
    for (std::size_t i = 0; i < size; ++i)
      out.push_back(pool[rng.uniform_below(pool.size())]);
  }
  return out;
}

SamplePool sample_batch_different_classes(const SamplePool& pool, const SamplePool& reference,
                                          RngStream& rng) {
  if (pool.empty()) throw std::invalid_argument("sample_batch_different_classes: empty pool");
  std::map<int, std::size_t> label_counts;
  for (const LabeledSample* s : pool) ++label_counts[s->label];
  SamplePool out;
  out.reserve(reference.size());
  for (const LabeledSample* ref : reference) {
    const std::size_t same = label_counts.count(ref->label) ? label_counts[ref->label] : 0;
    const std::size_t valid = pool.size() - same;
    if (valid == 0)
      throw std::invalid_argument(
          "sample_batch_different_classes: no sample with a class different from " +
          std::to_string(ref->label));
    std::size_t j = static_cast<std::size_t>(rng.uniform_below(valid));
    for (const LabeledSample* cand : pool) {
      if (cand->label == ref->label) continue;
      if (j == 0) {
        out.push_back(cand);
        break;
      }
      --j;
    }
  }
  return out;
}

Tensor stack_images(const SamplePool& batch) {
  if (batch.empty()) throw std::invalid_argument("stack_images: empty batch");
  const Tensor& first = batch.front()->image;
  Tensor out({batch.size(), first.shape[0], first.shape[1], first.shape[2]});
  const std::size_t stride = first.numel();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i]->image.same_shape(first))
      throw std::invalid_argument("stack_images: mixed image shapes");
    std::copy(batch[i]->image.data.begin(), batch[i]->image.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

std::vector<int> batch_labels(const SamplePool& batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const LabeledSample* s : batch) out.push_back(s->label);
  return out;
}

}  // namespace hypm
