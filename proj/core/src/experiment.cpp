#include "hypm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace hypm {

namespace fs = std::filesystem;
using nlohmann::json;

void DataSource::validate() const {
  if (root.has_value() == synthetic.has_value())
    throw std::invalid_argument("DataSource: exactly one of root/synthetic must be set");
}

void ExperimentConfig::validate() const {
  data.validate();
  train.validate();
  if (test_domain.empty()) throw std::invalid_argument("ExperimentConfig: test_domain required");
  if (num_unknown < 1) throw std::invalid_argument("ExperimentConfig: num_unknown must be >= 1");
  if (checkpoint_every < 0)
    throw std::invalid_argument("ExperimentConfig: checkpoint_every must be >= 0");
  if (!(eval_threshold >= 0.0 && eval_threshold <= 1.0))
    throw std::invalid_argument("ExperimentConfig: eval_threshold must be in [0,1]");
}

// ------------------------------------------------------------------- json

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw std::invalid_argument(std::string("config: unknown key '") + key + "' in " + where);
  }
}

std::string to_string(PromptMode m) {
  switch (m) {
    case PromptMode::synchronous: return "synchronous";
    case PromptMode::asynchronous: return "asynchronous";
    case PromptMode::adversarial: return "adversarial";
    case PromptMode::fixed_crop: return "fixed_crop";
  }
  throw std::logic_error("bad PromptMode");
}

PromptMode prompt_mode_from(const std::string& s) {
  if (s == "synchronous") return PromptMode::synchronous;
  if (s == "asynchronous") return PromptMode::asynchronous;
  if (s == "adversarial") return PromptMode::adversarial;
  if (s == "fixed_crop") return PromptMode::fixed_crop;
  throw std::invalid_argument("config: bad prompt mode '" + s + "'");
}

std::string to_string(PrototypeSpace s) {
  return s == PrototypeSpace::hyperbolic ? "hyperbolic" : "euclidean";
}

PrototypeSpace prototype_space_from(const std::string& s) {
  if (s == "hyperbolic") return PrototypeSpace::hyperbolic;
  if (s == "euclidean") return PrototypeSpace::euclidean;
  throw std::invalid_argument("config: bad prototype space '" + s + "'");
}

std::string to_string(ExpMapVariant v) {
  return v == ExpMapVariant::paper ? "paper" : "standard";
}

ExpMapVariant exp_map_variant_from(const std::string& s) {
  if (s == "paper") return ExpMapVariant::paper;
  if (s == "standard") return ExpMapVariant::standard;
  throw std::invalid_argument("config: bad exp_map_variant '" + s + "'");
}

json to_json(const ExperimentConfig& c) {
  json j;
  if (c.data.root) {
    j["data"]["root"] = *c.data.root;
  } else {
    const SyntheticSpec& s = *c.data.synthetic;
    j["data"]["synthetic"] = {{"domains", s.domains},   {"classes", s.classes},
                              {"per_class", s.per_class}, {"seed", s.seed},
                              {"height", s.height},     {"width", s.width}};
  }
  j["output_dir"] = c.output_dir;
  j["test_domain"] = c.test_domain;
  j["num_unknown"] = c.num_unknown;
  j["noisy_labels"] = c.noisy_labels;
  j["checkpoint_every"] = c.checkpoint_every;
  j["eval_threshold"] = c.eval_threshold;
  j["model"] = {{"conv1_channels", c.model.conv1_channels},
                {"conv2_channels", c.model.conv2_channels},
                {"embed_dim", c.model.embed_dim}};
  j["train"] = {{"seed", c.train.seed},
                {"max_steps", c.train.sgd.max_steps},
                {"batch_size", c.train.sgd.batch_size},
                {"lr", c.train.sgd.lr},
                {"decay_factor", c.train.sgd.decay_factor},
                {"decay_at_step", c.train.sgd.decay_at_step},
                {"inner_lr", c.train.inner_lr},
                {"n_epoch_refresh", c.train.n_epoch_refresh},
                {"committed_inner_step", c.train.committed_inner_step},
                {"num_bins", c.train.mode.num_bins}};
  j["ball"] = {{"gamma", c.train.ball.gamma},
               {"eps_scale", c.train.ball.eps_scale},
               {"lambda_scale", c.train.ball.lambda_scale},
               {"exp_map_variant", to_string(c.train.ball.exp_map_variant)}};
  j["augment"] = {{"crop_fraction", c.train.augment.crop_fraction},
                  {"mode", to_string(c.train.augment.mode)},
                  {"mix_cross_domain", c.train.augment.mix_cross_domain}};
  j["ablations"] = {{"use_hyb_meta", c.train.ablations.use_hyb_meta},
                    {"use_nca_prompt", c.train.ablations.use_nca_prompt},
                    {"use_label_correction", c.train.ablations.use_label_correction},
                    {"cross_domain_meta_test", c.train.ablations.cross_domain_meta_test},
                    {"prototype_space", to_string(c.train.ablations.prototype_space)}};
  return j;
}

ExperimentConfig from_json(const json& j) {
  check_keys(j,
             {"data", "output_dir", "test_domain", "num_unknown", "noisy_labels",
              "checkpoint_every", "eval_threshold", "model", "train", "ball", "augment",
              "ablations"},
             "top level");
  ExperimentConfig c;
  const json& d = j.at("data");
  check_keys(d, {"root", "synthetic"}, "data");
  if (d.contains("root")) c.data.root = d.at("root").get<std::string>();
  if (d.contains("synthetic")) {
    const json& s = d.at("synthetic");
    check_keys(s, {"domains", "classes", "per_class", "seed", "height", "width"},
               "data.synthetic");
    SyntheticSpec spec;
    spec.domains = s.at("domains").get<std::size_t>();
    spec.classes = s.at("classes").get<std::size_t>();
    spec.per_class = s.at("per_class").get<std::size_t>();
    spec.seed = s.at("seed").get<std::uint64_t>();
    spec.height = s.at("height").get<std::size_t>();
    spec.width = s.at("width").get<std::size_t>();
    c.data.synthetic = spec;
  }
  c.output_dir = j.at("output_dir").get<std::string>();
  c.test_domain = j.at("test_domain").get<std::string>();
  c.num_unknown = j.at("num_unknown").get<std::size_t>();
  if (j.contains("noisy_labels")) c.noisy_labels = j.at("noisy_labels").get<std::string>();
  if (j.contains("checkpoint_every")) c.checkpoint_every = j.at("checkpoint_every").get<long>();
  if (j.contains("eval_threshold")) c.eval_threshold = j.at("eval_threshold").get<double>();
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, {"conv1_channels", "conv2_channels", "embed_dim"}, "model");
    if (m.contains("conv1_channels")) c.model.conv1_channels = m.at("conv1_channels").get<std::size_t>();
    if (m.contains("conv2_channels")) c.model.conv2_channels = m.at("conv2_channels").get<std::size_t>();
    if (m.contains("embed_dim")) c.model.embed_dim = m.at("embed_dim").get<std::size_t>();
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t,
               {"seed", "max_steps", "batch_size", "lr", "decay_factor", "decay_at_step",
                "inner_lr", "n_epoch_refresh", "committed_inner_step", "num_bins"},
               "train");
    if (t.contains("seed")) c.train.seed = t.at("seed").get<std::uint64_t>();
    if (t.contains("max_steps")) c.train.sgd.max_steps = t.at("max_steps").get<long>();
    if (t.contains("batch_size")) c.train.sgd.batch_size = t.at("batch_size").get<std::size_t>();
    if (t.contains("lr")) c.train.sgd.lr = t.at("lr").get<double>();
    if (t.contains("decay_factor")) c.train.sgd.decay_factor = t.at("decay_factor").get<double>();
    if (t.contains("decay_at_step")) c.train.sgd.decay_at_step = t.at("decay_at_step").get<long>();
    if (t.contains("inner_lr")) c.train.inner_lr = t.at("inner_lr").get<double>();
    if (t.contains("n_epoch_refresh")) c.train.n_epoch_refresh = t.at("n_epoch_refresh").get<long>();
    if (t.contains("committed_inner_step"))
      c.train.committed_inner_step = t.at("committed_inner_step").get<bool>();
    if (t.contains("num_bins")) c.train.mode.num_bins = t.at("num_bins").get<std::size_t>();
  }
  if (j.contains("ball")) {
    const json& b = j.at("ball");
    check_keys(b, {"gamma", "eps_scale", "lambda_scale", "exp_map_variant"}, "ball");
    if (b.contains("gamma")) c.train.ball.gamma = b.at("gamma").get<double>();
    if (b.contains("eps_scale")) c.train.ball.eps_scale = b.at("eps_scale").get<double>();
    if (b.contains("lambda_scale")) c.train.ball.lambda_scale = b.at("lambda_scale").get<double>();
    if (b.contains("exp_map_variant"))
      c.train.ball.exp_map_variant = exp_map_variant_from(b.at("exp_map_variant").get<std::string>());
  }
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    check_keys(a, {"crop_fraction", "mode", "mix_cross_domain"}, "augment");
    if (a.contains("crop_fraction")) c.train.augment.crop_fraction = a.at("crop_fraction").get<double>();
    if (a.contains("mode")) c.train.augment.mode = prompt_mode_from(a.at("mode").get<std::string>());
    if (a.contains("mix_cross_domain"))
      c.train.augment.mix_cross_domain = a.at("mix_cross_domain").get<bool>();
  }
  if (j.contains("ablations")) {
    const json& a = j.at("ablations");
    check_keys(a,
               {"use_hyb_meta", "use_nca_prompt", "use_label_correction", "cross_domain_meta_test",
                "prototype_space"},
               "ablations");
    if (a.contains("use_hyb_meta")) c.train.ablations.use_hyb_meta = a.at("use_hyb_meta").get<bool>();
    if (a.contains("use_nca_prompt"))
      c.train.ablations.use_nca_prompt = a.at("use_nca_prompt").get<bool>();
    if (a.contains("use_label_correction"))
      c.train.ablations.use_label_correction = a.at("use_label_correction").get<bool>();
    if (a.contains("cross_domain_meta_test"))
      c.train.ablations.cross_domain_meta_test = a.at("cross_domain_meta_test").get<bool>();
    if (a.contains("prototype_space"))
      c.train.ablations.prototype_space =
          prototype_space_from(a.at("prototype_space").get<std::string>());
  }
  return c;
}

}  // namespace

ExperimentConfig config_from_json_string(const std::string& text) {
  return from_json(json::parse(text));
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_config: cannot open " + path.string());
  return from_json(json::parse(f));
}

std::string canonical_json(const ExperimentConfig& config) { return to_json(config).dump(2); }

std::string config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_json(config))));
  return buf;
}

// ------------------------------------------------------------------- data

std::vector<DomainDataset> load_datasets(const DataSource& source) {
  source.validate();
  if (source.root) return load_ppm_tree(*source.root);
  const SyntheticSpec& s = *source.synthetic;
  return generate_synthetic(s.domains, s.classes, s.per_class, s.seed, s.height, s.width);
}

std::vector<DomainDataset> training_view(const std::vector<DomainDataset>& all,
                                         const SplitSpec& split) {
  std::vector<DomainDataset> out;
  for (const DomainDataset& ds : all) {
    if (ds.name == split.test_domain) continue;
    DomainDataset filtered;
    filtered.name = ds.name;
    for (const LabeledSample& s : ds.samples)
      if (split.is_known(s.label)) filtered.samples.push_back(s);
    out.push_back(std::move(filtered));
  }
  for (const DomainDataset& ds : out)
    for (const LabeledSample& s : ds.samples)
      if (!split.is_known(s.label) || ds.name == split.test_domain)
        throw std::logic_error("training_view: unknown-class or test-domain sample leaked");
  return out;
}

unsigned resolve_worker_threads() {
  unsigned n = 4;
  if (const char* env = std::getenv("HYPM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<unsigned>(v);
  }
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  return std::min(n, hw);
}

// --------------------------------------------------------------- commands

void cmd_gen_data(const GenDataArgs& args) {
  const fs::path out = args.out_dir;
  if (fs::exists(out) && !fs::is_empty(out) && !args.force)
    throw std::runtime_error("gen-data: output directory " + out.string() +
                             " is not empty (use --force to overwrite)");
  auto datasets = generate_synthetic(args.spec.domains, args.spec.classes, args.spec.per_class,
                                     args.spec.seed, args.spec.height, args.spec.width);
  std::vector<std::string> class_names;
  for (std::size_t k = 0; k < args.spec.classes; ++k)
    class_names.push_back(synthetic_class_name(k));
  write_ppm_tree(datasets, class_names, out);
}

NoiseLedger cmd_inject_noise(const InjectNoiseArgs& args) {
  auto datasets = load_ppm_tree(args.data_root);
  const SplitSpec split = make_split(datasets, args.test_domain, args.num_unknown);
  auto training = training_view(datasets, split);
  NoiseSpec spec;
  spec.kind = args.kind;
  spec.ratio = args.ratio;
  spec.seed = args.seed;
  if (args.kind == NoiseKind::asymmetric) {
    if (args.similarity_csv.empty())
      throw std::invalid_argument("inject-noise: asymmetric noise requires --similarity");
    const DatasetManifest manifest = read_manifest(args.data_root);
    spec.similarity = load_similarity(args.similarity_csv, manifest.classes);
  }
  NoiseLedger ledger = inject(training, split.known_classes, spec);
  write_noise_ledger(ledger, args.out_csv);
  return ledger;
}

TrainResult cmd_train(const ExperimentConfig& config) {
  config.validate();
  auto datasets = load_datasets(config.data);
  if (!config.noisy_labels.empty())
    apply_label_override(datasets, load_noisy_labels(config.noisy_labels));
  const SplitSpec split = make_split(datasets, config.test_domain, config.num_unknown);
  auto training = training_view(datasets, split);
  if (training.empty() || training.front().samples.empty())
    throw std::runtime_error("cmd_train: no training data after the split");

  ConvNetConfig arch;
  const Tensor& probe = training.front().samples.front().image;
  arch.in_h = probe.shape[0];
  arch.in_w = probe.shape[1];
  arch.conv1_channels = config.model.conv1_channels;
  arch.conv2_channels = config.model.conv2_channels;
  arch.embed_dim = config.model.embed_dim;
  arch.num_known_classes = split.num_known();

  TrainConfig tc = config.train;
  tc.num_threads = resolve_worker_threads();

  RngStream init_stream(tc.seed, "init");
  TrainResult result{ModelState::init(arch, init_stream), {}, {}};

  const fs::path out(config.output_dir);
  fs::create_directories(out);
  {
    std::ofstream f(out / "config.json", std::ios::trunc);
    if (!f) throw std::runtime_error("cmd_train: cannot write config.json");
    f << canonical_json(config) << "\n";
  }

  StepCallback on_step;
  if (config.checkpoint_every > 0) {
    on_step = [&](const ModelState& state, const StepReport& r) {
      if ((r.step + 1) % config.checkpoint_every == 0)
        save_checkpoint(state, out / ("checkpoint_" + std::to_string(r.step + 1) + ".hypm"));
    };
  }
  result.reports = run_training(training, split, tc, result.state, on_step);
  for (const StepReport& r : result.reports)
    if (!std::isfinite(r.loss_meta_train) || !std::isfinite(r.loss_meta_test))
      throw std::runtime_error("cmd_train: non-finite loss at step " + std::to_string(r.step));

  write_training_log(result.reports, out / "training_log.csv");
  result.checkpoint_path = out / "checkpoint.hypm";
  save_checkpoint(result.state, result.checkpoint_path);
  return result;
}

MetricsReport cmd_evaluate(const ExperimentConfig& config, const fs::path& checkpoint,
                           const fs::path& out_dir) {
  if (!fs::exists(checkpoint))
    throw std::runtime_error("evaluate: missing checkpoint " + checkpoint.string());
  const ModelState state = load_checkpoint(checkpoint);
  auto datasets = load_datasets(config.data);
  const SplitSpec split = make_split(datasets, config.test_domain, config.num_unknown);
  const DomainDataset* test_data = nullptr;
  for (const DomainDataset& ds : datasets)
    if (ds.name == split.test_domain) test_data = &ds;
  if (!test_data) throw std::runtime_error("evaluate: test domain not found");
  if (state.arch.num_known_classes != split.num_known())
    throw std::runtime_error("evaluate: checkpoint head size does not match the split");

  const std::vector<EvalRecord> records = score_test_set(state, *test_data, split);
  const MetricsReport report = compute_metrics(records, config.eval_threshold);
  fs::create_directories(out_dir);
  write_metrics_json(report, out_dir / "metrics.json");
  export_confidences(records, out_dir / "confidences.csv");
  write_oscr_curve_csv(oscr_curve(records), out_dir / "oscr_curve.csv");
  return report;
}

std::vector<AblateRow> cmd_ablate(const ExperimentConfig& base, AblateGrid grid,
                                  const std::vector<long>& n_epoch_values) {
  std::vector<std::pair<std::string, ExperimentConfig>> variants;
  switch (grid) {
    case AblateGrid::n_epoch:
      for (long n : n_epoch_values) {
        ExperimentConfig c = base;
        c.train.n_epoch_refresh = n;
        variants.emplace_back("n_epoch_" + std::to_string(n), std::move(c));
      }
      break;
    case AblateGrid::components: {
      variants.emplace_back("full", base);
      ExperimentConfig no_hyb = base;
      no_hyb.train.ablations.use_hyb_meta = false;
      variants.emplace_back("no_hyb_meta", std::move(no_hyb));
      ExperimentConfig no_nca = base;
      no_nca.train.ablations.use_nca_prompt = false;
      variants.emplace_back("no_nca_prompt", std::move(no_nca));
      break;
    }
    case AblateGrid::prototype_space: {
      ExperimentConfig hyp = base;
      hyp.train.ablations.prototype_space = PrototypeSpace::hyperbolic;
      variants.emplace_back("hyperbolic", std::move(hyp));
      ExperimentConfig euc = base;
      euc.train.ablations.prototype_space = PrototypeSpace::euclidean;
      variants.emplace_back("euclidean", std::move(euc));
      break;
    }
  }

  const fs::path out(base.output_dir);
  fs::create_directories(out);
  std::vector<AblateRow> rows;
  for (auto& [name, config] : variants) {
    config.output_dir = (out / name).string();
    const TrainResult trained = cmd_train(config);
    const MetricsReport metrics =
        cmd_evaluate(config, trained.checkpoint_path, fs::path(config.output_dir) / "eval");
    rows.push_back({name, config_hash(config), metrics});
  }
  std::ofstream f(out / "ablation.csv", std::ios::trunc);
  if (!f) throw std::runtime_error("ablate: cannot write ablation.csv");
  f << "variant,config_hash,acc,h_score,oscr\n";
  f.precision(17);
  for (const AblateRow& r : rows)
    f << r.variant << "," << r.hash << "," << r.metrics.acc << "," << r.metrics.h_score_at_threshold
      << "," << r.metrics.oscr << "\n";
  return rows;
}

}  // namespace hypm
