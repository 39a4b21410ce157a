#include <exception>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hypm/experiment.hpp"

namespace {

using hypm::ExperimentConfig;

/// Options are recorded as deferred setters so a --config file can be loaded
/// first and explicit flags applied on top of it (flags win).
struct TrainCli {
  std::string config_path;
  std::vector<std::function<void(ExperimentConfig&)>> overrides;
};

void add_train_options(CLI::App* cmd, TrainCli& cli) {
  auto opt = [cmd, &cli](const char* name, const char* desc,
                         std::function<void(ExperimentConfig&, const std::string&)> setter) {
    cmd->add_option(name,
                    [&cli, setter](const std::vector<std::string>& values) {
                      for (const std::string& v : values)
                        cli.overrides.push_back(
                            [setter, v](ExperimentConfig& c) { setter(c, v); });
                      return true;
                    },
                    desc);
  };
  opt("--data", "Dataset tree root (PPM + manifest.json)",
      [](ExperimentConfig& c, const std::string& v) {
        c.data.root = v;
        c.data.synthetic.reset();
      });
  opt("--out", "Output directory",
      [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; });
  opt("--test-domain", "Held-out test domain",
      [](ExperimentConfig& c, const std::string& v) { c.test_domain = v; });
  opt("--num-unknown", "Number of unknown (held-out) classes",
      [](ExperimentConfig& c, const std::string& v) { c.num_unknown = std::stoul(v); });
  opt("--noisy-labels", "labels_noisy.csv applied before training",
      [](ExperimentConfig& c, const std::string& v) { c.noisy_labels = v; });
  opt("--seed", "Root seed",
      [](ExperimentConfig& c, const std::string& v) { c.train.seed = std::stoull(v); });
  opt("--steps", "Training step cap",
      [](ExperimentConfig& c, const std::string& v) { c.train.sgd.max_steps = std::stol(v); });
  opt("--batch", "Batch size",
      [](ExperimentConfig& c, const std::string& v) { c.train.sgd.batch_size = std::stoul(v); });
  opt("--lr", "Learning rate",
      [](ExperimentConfig& c, const std::string& v) { c.train.sgd.lr = std::stod(v); });
  opt("--inner-lr", "Meta-train rate (negative tracks the outer rate)",
      [](ExperimentConfig& c, const std::string& v) { c.train.inner_lr = std::stod(v); });
  opt("--decay-at-step", "Learning-rate decay step",
      [](ExperimentConfig& c, const std::string& v) { c.train.sgd.decay_at_step = std::stol(v); });
  opt("--gamma", "Ball curvature magnitude",
      [](ExperimentConfig& c, const std::string& v) { c.train.ball.gamma = std::stod(v); });
  opt("--n-epoch", "Prototype refresh period",
      [](ExperimentConfig& c, const std::string& v) { c.train.n_epoch_refresh = std::stol(v); });
  opt("--crop-fraction", "Prompt crop fraction",
      [](ExperimentConfig& c, const std::string& v) {
        c.train.augment.crop_fraction = std::stod(v);
      });
  opt("--checkpoint-every", "Periodic checkpoint interval",
      [](ExperimentConfig& c, const std::string& v) { c.checkpoint_every = std::stol(v); });
  opt("--prompt-mode", "synchronous | asynchronous | adversarial | fixed-crop",
      [](ExperimentConfig& c, const std::string& v) {
        if (v == "synchronous") c.train.augment.mode = hypm::PromptMode::synchronous;
        else if (v == "asynchronous") c.train.augment.mode = hypm::PromptMode::asynchronous;
        else if (v == "adversarial") c.train.augment.mode = hypm::PromptMode::adversarial;
        else if (v == "fixed-crop" || v == "fixed_crop")
          c.train.augment.mode = hypm::PromptMode::fixed_crop;
        else throw std::invalid_argument("unknown prompt mode '" + v + "'");
      });
  opt("--prototype-space", "hyperbolic | euclidean",
      [](ExperimentConfig& c, const std::string& v) {
        if (v == "hyperbolic") c.train.ablations.prototype_space = hypm::PrototypeSpace::hyperbolic;
        else if (v == "euclidean")
          c.train.ablations.prototype_space = hypm::PrototypeSpace::euclidean;
        else throw std::invalid_argument("unknown prototype space '" + v + "'");
      });
  opt("--exp-map-variant", "paper | standard",
      [](ExperimentConfig& c, const std::string& v) {
        if (v == "paper") c.train.ball.exp_map_variant = hypm::ExpMapVariant::paper;
        else if (v == "standard") c.train.ball.exp_map_variant = hypm::ExpMapVariant::standard;
        else throw std::invalid_argument("unknown exp-map variant '" + v + "'");
      });
  opt("--mix-cross-domain", "true | false: partner domain for mixing",
      [](ExperimentConfig& c, const std::string& v) {
        c.train.augment.mix_cross_domain = v == "true" || v == "1";
      });
  cmd->add_option("--ablation",
                  [&cli](const std::vector<std::string>& values) {
                    for (const std::string& a : values)
                      cli.overrides.push_back([a](ExperimentConfig& c) {
                        if (a == "no-hyb-meta") c.train.ablations.use_hyb_meta = false;
                        else if (a == "no-nca-prompt") c.train.ablations.use_nca_prompt = false;
                        else if (a == "no-label-correction")
                          c.train.ablations.use_label_correction = false;
                        else if (a == "no-cross-domain")
                          c.train.ablations.cross_domain_meta_test = false;
                        else throw std::invalid_argument("unknown ablation '" + a + "'");
                      });
                    return true;
                  },
                  "no-hyb-meta | no-nca-prompt | no-label-correction | no-cross-domain")
      ->take_all();
}

ExperimentConfig resolve_config(const TrainCli& cli) {
  ExperimentConfig config;
  if (!cli.config_path.empty()) config = hypm::load_config(cli.config_path);
  for (const auto& apply : cli.overrides) apply(config);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperbolic-prototype meta-learning for open-set domain generalization "
               "under noisy labels"};
  app.require_subcommand(1);

  hypm::GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic multi-domain dataset tree");
  gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--domains", gen.spec.domains, "Number of domains (>= 3)");
  gen_cmd->add_option("--classes", gen.spec.classes, "Number of classes (>= 4)");
  gen_cmd->add_option("--per-class", gen.spec.per_class, "Samples per (domain, class)");
  gen_cmd->add_option("--seed", gen.spec.seed, "Generator seed");
  gen_cmd->add_option("--height", gen.spec.height, "Image height");
  gen_cmd->add_option("--width", gen.spec.width, "Image width");
  gen_cmd->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  hypm::InjectNoiseArgs noise;
  std::string noise_kind = "symmetric";
  auto* noise_cmd = app.add_subcommand("inject-noise", "Inject label noise into training labels");
  noise_cmd->add_option("--data", noise.data_root, "Dataset tree root")->required();
  noise_cmd->add_option("--test-domain", noise.test_domain, "Held-out test domain")->required();
  noise_cmd->add_option("--num-unknown", noise.num_unknown, "Number of unknown classes");
  noise_cmd->add_option("--kind", noise_kind, "symmetric | asymmetric");
  noise_cmd->add_option("--ratio", noise.ratio, "Noise ratio in [0,1]");
  noise_cmd->add_option("--seed", noise.seed, "Noise seed");
  noise_cmd->add_option("--similarity", noise.similarity_csv, "similarity.csv (asymmetric only)");
  noise_cmd->add_option("--out", noise.out_csv, "Output labels_noisy.csv")->required();

  TrainCli train_cli;
  auto* train_cmd = app.add_subcommand("train", "Run a training experiment");
  train_cmd->add_option("--config", train_cli.config_path, "Experiment config JSON");
  add_train_options(train_cmd, train_cli);

  TrainCli eval_cli;
  std::string eval_checkpoint, eval_out, eval_threshold;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on the held-out domain");
  eval_cmd->add_option("--config", eval_cli.config_path, "Experiment config JSON");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--out", eval_out, "Output directory")->required();
  eval_cmd->add_option("--threshold", eval_threshold, "H-score threshold");
  add_train_options(eval_cmd, eval_cli);

  TrainCli ablate_cli;
  std::string ablate_grid = "n-epoch";
  std::vector<long> ablate_n_epoch = {500, 1000, 1500, 2000, 2500};
  auto* ablate_cmd = app.add_subcommand("ablate", "Run a variant grid and emit a comparison table");
  ablate_cmd->add_option("--config", ablate_cli.config_path, "Base experiment config JSON")
      ->required();
  ablate_cmd->add_option("--grid", ablate_grid, "n-epoch | components | prototype-space");
  ablate_cmd->add_option("--n-epoch-values", ablate_n_epoch, "Refresh periods for the n-epoch grid");
  add_train_options(ablate_cmd, ablate_cli);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) {
      hypm::cmd_gen_data(gen);
      std::cout << "wrote dataset tree to " << gen.out_dir << "\n";
    } else if (noise_cmd->parsed()) {
      if (noise_kind == "symmetric") noise.kind = hypm::NoiseKind::symmetric;
      else if (noise_kind == "asymmetric") noise.kind = hypm::NoiseKind::asymmetric;
      else throw std::invalid_argument("inject-noise: unknown kind '" + noise_kind + "'");
      const hypm::NoiseLedger ledger = hypm::cmd_inject_noise(noise);
      std::cout << "flipped " << ledger.entries.size() << " labels (achieved ratio "
                << ledger.achieved_ratio << "), ledger at " << noise.out_csv << "\n";
    } else if (train_cmd->parsed()) {
      const hypm::TrainResult result = hypm::cmd_train(resolve_config(train_cli));
      std::cout << "trained " << result.reports.size() << " steps, checkpoint at "
                << result.checkpoint_path.string() << "\n";
    } else if (eval_cmd->parsed()) {
      ExperimentConfig config = resolve_config(eval_cli);
      if (!eval_threshold.empty()) config.eval_threshold = std::stod(eval_threshold);
      const hypm::MetricsReport m = hypm::cmd_evaluate(config, eval_checkpoint, eval_out);
      std::cout << "acc " << m.acc << "  h-score " << m.h_score_at_threshold << "  oscr " << m.oscr
                << "\n";
    } else if (ablate_cmd->parsed()) {
      ExperimentConfig config = resolve_config(ablate_cli);
      hypm::AblateGrid grid;
      if (ablate_grid == "n-epoch") grid = hypm::AblateGrid::n_epoch;
      else if (ablate_grid == "components") grid = hypm::AblateGrid::components;
      else if (ablate_grid == "prototype-space") grid = hypm::AblateGrid::prototype_space;
      else throw std::invalid_argument("ablate: unknown grid '" + ablate_grid + "'");
      const auto rows = hypm::cmd_ablate(config, grid, ablate_n_epoch);
      std::cout << "wrote " << rows.size() << " variant rows to "
                << (std::filesystem::path(config.output_dir) / "ablation.csv").string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
