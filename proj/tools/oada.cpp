// Command-line front end: dataset generation, training variants, evaluation
// and analysis tools.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oada/harness.hpp"

namespace {

namespace fs = std::filesystem;
using namespace oada;
using harness::ExperimentConfig;

enum Exit { kOk = 0, kUsage = 1, kRuntime = 2, kDiverged = 3 };

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Flags that mirror ExperimentConfig fields. Optional members stay unset when
// the flag is absent so only given flags touch the config.
struct ConfigFlags {
  std::optional<std::string> variant, shift, strategy, config_file, out;
  std::optional<int> iters, n_bin, blend_iters, batch, n_source, n_target, n_eval, log_every, cond_delay, disc_hidden,
      warmup;
  std::optional<double> lambda_g, lambda_c, grl_g, grl_c, rho, alpha0, lr, beta, momentum, weight_decay;
  std::optional<std::uint64_t> seed, data_seed;
  std::optional<std::vector<double>> milestones;
  bool grad_to_q = false;

  void add(CLI::App* app, bool seed_required) {
    auto* s = app->add_option("--seed", seed, "global seed (fans out to data/init/batch/disc/augment)");
    if (seed_required) s->required();
    app->add_option("--config", config_file, "JSON file; its values override flags");
    app->add_option("--out", out, "output directory");
    app->add_option("--variant", variant, "source_only|ga|oada_left|oada_top|oada_left_top|self_train");
    app->add_option("--iters", iters, "training iterations");
    app->add_option("--lr", lr, "base learning rate");
    app->add_option("--warmup", warmup, "linear lr warm-up iterations");
    app->add_option("--milestones", milestones, "lr decay points as fractions of iters")->delimiter(',');
    app->add_option("--momentum", momentum);
    app->add_option("--weight-decay", weight_decay);
    app->add_option("--batch", batch, "images per domain per iteration");
    app->add_option("--lambda-g", lambda_g);
    app->add_option("--lambda-c", lambda_c);
    app->add_option("--grl-g", grl_g);
    app->add_option("--grl-c", grl_c);
    app->add_option("--rho", rho, "target objectness threshold");
    app->add_option("--blend-iters", blend_iters, "alpha-blending warm-up I");
    app->add_option("--alpha0", alpha0);
    app->add_option("--n-bin", n_bin);
    app->add_option("--strategy", strategy, "outer|concatenate|multiply|multiply_stack");
    app->add_flag("--grad-to-q", grad_to_q, "let adversarial gradients reach the offset probabilities");
    app->add_option("--cond-delay", cond_delay, "iterations before the conditional loss is weighted");
    app->add_option("--disc-hidden", disc_hidden);
    app->add_option("--log-every", log_every);
    app->add_option("--data-seed", data_seed, "dataset seed shared across runs");
    app->add_option("--n-source", n_source);
    app->add_option("--n-target", n_target);
    app->add_option("--n-eval", n_eval);
    app->add_option("--shift", shift, "fog|style");
    app->add_option("--beta", beta, "fog intensity");
  }

  ExperimentConfig build(ExperimentConfig c) const {
    try {
      if (variant) c.variant = harness::parse_variant(*variant);
      if (iters) c.iters = *iters;
      if (lr) c.schedule.base_lr = *lr;
      if (warmup) c.schedule.warmup_iters = *warmup;
      if (milestones) c.schedule.milestones = *milestones;
      if (momentum) c.sgd.momentum = *momentum;
      if (weight_decay) c.sgd.weight_decay = *weight_decay;
      if (batch) c.batch = *batch;
      if (lambda_g) c.weights.lambda_g = *lambda_g;
      if (lambda_c) c.weights.lambda_c = *lambda_c;
      if (grl_g) c.weights.grl_g = *grl_g;
      if (grl_c) c.weights.grl_c = *grl_c;
      if (rho) c.rho = *rho;
      if (blend_iters) c.blend.warmup_iters = *blend_iters;
      if (alpha0) c.blend.alpha0 = *alpha0;
      if (n_bin) c.n_bin = *n_bin;
      if (strategy) c.strategy = align::parse_strategy(*strategy);
      if (grad_to_q) c.grad_to_q = true;
      if (cond_delay) c.cond_delay = *cond_delay;
      if (disc_hidden) c.disc_hidden = *disc_hidden;
      if (log_every) c.log_every = *log_every;
      if (seed) c.seed = *seed;
      if (data_seed) c.data_seed = *data_seed;
      if (n_source) c.data.n_source = *n_source;
      if (n_target) c.data.n_target = *n_target;
      if (n_eval) c.data.n_eval = *n_eval;
      if (shift) c.data.shift.kind = scene::parse_shift_kind(*shift);
      if (beta) c.data.shift.beta = *beta;
      if (out) c.output_dir = *out;
      if (config_file) {
        std::ifstream in(*config_file);
        if (!in) throw UsageError("cannot open config file " + *config_file);
        c = harness::apply_json(c, nlohmann::json::parse(in));
      }
      c.validate();
    } catch (const UsageError&) {
      throw;
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("bad config file: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

void log_line(const std::string& s) { std::cerr << s << '\n'; }

// Scenes of one split from an exported dataset directory.
std::vector<scene::Scene> load_split(const std::string& dir, const std::string& split) {
  return scene::import_split(dir, split);
}

void print_map(const fcos::MapReport& r) {
  for (std::size_t c = 0; c < r.per_class_ap.size(); ++c) {
    std::cout << "AP[" << scene::silhouette_name(static_cast<int>(c)) << "] ";
    if (r.per_class_ap[c]) {
      std::cout << *r.per_class_ap[c] << '\n';
    } else {
      std::cout << "absent\n";
    }
  }
  std::cout << "mAP@0.5 " << r.map << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offset-aware adversarial domain adaptation for a small anchor-free detector"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "build and export a source/target/eval dataset");
  ConfigFlags gen_flags;
  gen_flags.add(gen, true);

  // train
  auto* train = app.add_subcommand("train", "train one variant");
  ConfigFlags train_flags;
  train_flags.add(train, true);
  bool no_cache = false;
  train->add_flag("--no-cache", no_cache, "retrain even when a finished run with the same config exists");

  // self-train
  auto* self = app.add_subcommand("self-train", "EMA-teacher self-training from an adaptation checkpoint");
  ConfigFlags self_flags;
  self_flags.add(self, true);
  std::string init_ckpt;
  std::optional<double> ema_rate, delta, lambda_self;
  self->add_option("--init", init_ckpt, "adaptation checkpoint")->required();
  self->add_option("--ema-rate", ema_rate);
  self->add_option("--delta", delta, "pseudo-label threshold");
  self->add_option("--lambda-self", lambda_self);

  // eval
  auto* eval = app.add_subcommand("eval", "mAP of a checkpoint on a dataset split");
  std::string ckpt, data_dir, split = "eval", report;
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--data", data_dir, "directory written by generate")->required();
  eval->add_option("--split", split, "source|target|eval");
  eval->add_option("--report", report, "JSON report path");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "sweep one ablation axis");
  ConfigFlags ablate_flags;
  ablate_flags.add(ablate, false);
  std::string axis;
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds{0};
  ablate->add_option("--axis", axis, "alpha0|n_bin|strategy|rho")->required();
  ablate->add_option("--values", values, "axis values (default: the standard grid)")->delimiter(',');
  ablate->add_option("--seeds", seeds, "seeds per value")->delimiter(',');

  // analyze-svd
  auto* svd_cmd = app.add_subcommand("analyze-svd", "singular spectrum and corresponding angles of features");
  std::string svd_out, mask = "gt";
  int k = 20;
  double svd_rho = 0.5;
  std::string source_split = "source", target_split = "eval";
  svd_cmd->add_option("--checkpoint", ckpt)->required();
  svd_cmd->add_option("--data", data_dir)->required();
  svd_cmd->add_option("--out", svd_out)->required();
  svd_cmd->add_option("--k", k);
  svd_cmd->add_option("--mask", mask, "gt|confidence");
  svd_cmd->add_option("--rho", svd_rho, "threshold for confidence masks");
  svd_cmd->add_option("--source-split", source_split);
  svd_cmd->add_option("--target-split", target_split);

  // diagnose-confidence
  auto* diag = app.add_subcommand("diagnose-confidence", "precision and offset error per confidence threshold");
  std::string diag_out;
  std::vector<double> thresholds = align::default_confidence_thresholds();
  diag->add_option("--checkpoint", ckpt)->required();
  diag->add_option("--data", data_dir)->required();
  diag->add_option("--split", split);
  diag->add_option("--out", diag_out, "CSV path")->required();
  diag->add_option("--thresholds", thresholds)->delimiter(',');

  // dump-detections
  auto* dump = app.add_subcommand("dump-detections", "write box overlays");
  std::string dump_out;
  int limit = 16;
  double score = 0.3;
  dump->add_option("--checkpoint", ckpt)->required();
  dump->add_option("--data", data_dir)->required();
  dump->add_option("--split", split);
  dump->add_option("--out", dump_out)->required();
  dump->add_option("--limit", limit, "number of scenes");
  dump->add_option("--score", score, "minimum detection score drawn");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig c = gen_flags.build({});
      const auto s = harness::sub_seeds(c);
      const scene::Dataset ds = scene::build_dataset(c.data.spec, c.data.shift, static_cast<std::size_t>(c.data.n_source),
                                                     static_cast<std::size_t>(c.data.n_target), s.data);
      const fs::path dir = c.output_dir;
      scene::export_dataset(dir, ds);
      scene::export_split(dir, "eval", harness::build_eval_split(c.data, s.data));
      std::cout << "wrote " << dir.string() << '\n';
    } else if (train->parsed()) {
      ExperimentConfig c = train_flags.build({});
      if (c.variant == harness::Variant::self_train) throw UsageError("use the self-train subcommand");
      harness::RunOptions o;
      o.use_cache = !no_cache;
      o.log = log_line;
      const auto r = harness::train_run(c, o);
      print_map(r.target);
      std::cout << "checkpoint " << r.final_checkpoint.string() << '\n';
    } else if (self->parsed()) {
      ExperimentConfig base;
      base.variant = harness::Variant::self_train;
      base.init_checkpoint = init_ckpt;
      base.iters = 1000;
      base.schedule.base_lr = 0.001;
      base.schedule.warmup_iters = 0;
      base.schedule.milestones = {};
      if (ema_rate) base.self.ema_rate = *ema_rate;
      if (delta) base.self.delta = *delta;
      if (lambda_self) base.self.lambda_self = *lambda_self;
      ExperimentConfig c = self_flags.build(base);
      if (c.variant != harness::Variant::self_train) throw UsageError("self-train requires variant self_train");
      harness::RunOptions o;
      o.log = log_line;
      const auto r = harness::train_run(c, o);
      print_map(r.target);
      std::cout << "student mAP@0.5 " << r.extra.value("student_map", 0.0) << '\n';
    } else if (eval->parsed()) {
      const auto scenes = load_split(data_dir, split);
      print_map(harness::evaluate_checkpoint(ckpt, scenes, report));
    } else if (ablate->parsed()) {
      ExperimentConfig base = ablate_flags.build({});
      harness::Axis a;
      try {
        a = harness::parse_axis(axis);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      if (values.empty()) values = harness::default_axis_values(a);
      harness::RunOptions o;
      o.log = log_line;
      harness::AblationResult r;
      try {
        r = harness::ablation_sweep(base, a, values, seeds, o);
      } catch (const harness::DivergenceError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      for (const auto& v : values) std::cout << harness::to_string(a) << '=' << v << " median mAP " << r.median_map(v) << '\n';
    } else if (svd_cmd->parsed()) {
      svd::CollectOptions o;
      o.mask_source = svd::parse_mask_source(mask);
      o.rho = svd_rho;
      const auto src = load_split(data_dir, source_split);
      const auto tgt = load_split(data_dir, target_split);
      const auto a = harness::analyze_svd(ckpt, src, tgt, svd_out, k, o);
      std::cout << "spectrum sum (target) " << a.pooled.spectrum_sum_t() << "\nmean angle " << a.pooled.mean_angle()
                << '\n';
    } else if (diag->parsed()) {
      const auto scenes = load_split(data_dir, split);
      for (const auto& r : harness::diagnose_confidence(ckpt, scenes, thresholds, diag_out)) {
        std::cout << "rho " << r.threshold << " selected " << r.selected << " precision "
                  << (r.precision ? std::to_string(*r.precision) : "absent") << '\n';
      }
    } else if (dump->parsed()) {
      auto scenes = load_split(data_dir, split);
      if (limit > 0 && static_cast<std::size_t>(limit) < scenes.size()) scenes.resize(static_cast<std::size_t>(limit));
      harness::dump_detections(ckpt, scenes, dump_out, score);
      std::cout << "wrote " << dump_out << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const harness::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
