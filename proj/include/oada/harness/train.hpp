#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oada/align.hpp"
#include "oada/fcoslite.hpp"
#include "oada/harness/config.hpp"
#include "oada/harness/data.hpp"
#include "oada/harness/metrics.hpp"

namespace oada::harness {

namespace fs = std::filesystem;
using diff::Tensor;

struct DivergenceError : std::runtime_error {
  DivergenceError(int it, const std::string& what)
      : std::runtime_error("diverged at iteration " + std::to_string(it) + ": " + what), iteration(it) {}
  int iteration;
};

struct RunResult {
  fs::path dir;
  fs::path final_checkpoint;
  std::vector<fs::path> decay_checkpoints;
  MetricsTable metrics;
  fcos::MapReport target;  // held-out target split
  nlohmann::json extra = nlohmann::json::object();
  std::string config_hash;
  double seconds = 0.0;
  bool cached = false;
};

struct RunOptions {
  bool use_cache = true;
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

inline std::string checkpoint_name(int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_iter%05d.ckpt", iteration);
  return buf;
}

inline void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

// Resolved config as written to config.json; loading it back reproduces the run.
inline json resolved_config_json(const ExperimentConfig& c) {
  json j = to_json(c);
  j["output_dir"] = c.output_dir;
  j["config_hash"] = config_hash(c);
  return j;
}

// A finished run in `dir` whose result.json carries the same config hash.
inline std::optional<RunResult> load_cached_run(const fs::path& dir, const std::string& hash) {
  const fs::path result = dir / "result.json";
  if (!fs::exists(result)) return std::nullopt;
  const json r = read_json(result);
  if (r.value("config_hash", "") != hash) return std::nullopt;
  RunResult out;
  out.dir = dir;
  out.final_checkpoint = dir / r.at("final_checkpoint").get<std::string>();
  if (!fs::exists(out.final_checkpoint) || !fs::exists(dir / "metrics.csv")) return std::nullopt;
  for (const auto& c : r.value("decay_checkpoints", json::array())) out.decay_checkpoints.push_back(dir / c.get<std::string>());
  out.metrics = MetricsTable::read_csv(dir / "metrics.csv");
  out.target = map_report_from_json(r.at("target"));
  out.extra = r.value("extra", json::object());
  out.config_hash = hash;
  out.seconds = r.value("seconds", 0.0);
  out.cached = true;
  return out;
}

inline void write_result(const RunResult& r) {
  json decays = json::array();
  for (const auto& p : r.decay_checkpoints) decays.push_back(p.filename().string());
  write_json(r.dir / "result.json", {{"config_hash", r.config_hash},
                                     {"final_checkpoint", r.final_checkpoint.filename().string()},
                                     {"decay_checkpoints", decays},
                                     {"target", to_json(r.target)},
                                     {"extra", r.extra},
                                     {"seconds", r.seconds}});
}

inline std::string occupancy_column(int lv, int bin) {
  return "lv" + std::to_string(lv) + "_bin" + std::to_string(bin + 1);
}

inline std::vector<std::string> metrics_columns(const ExperimentConfig& c) {
  std::vector<std::string> cols{"iter", "loss_det"};
  if (uses_global(c.variant)) cols.push_back("loss_g");
  if (uses_left(c.variant)) cols.push_back("loss_c_left");
  if (uses_top(c.variant)) cols.push_back("loss_c_top");
  if (uses_conditional(c.variant)) {
    cols.push_back("alpha");
    for (const auto& l : c.detector.levels) {
      for (int i = 0; i < c.n_bin; ++i) cols.push_back(occupancy_column(l.lv, i));
    }
  }
  cols.push_back("lr");
  return cols;
}

// Detector, per-level discriminators and their shared optimizer.
class AdaptationTrainer {
 public:
  struct StepLosses {
    double det = 0.0, g = 0.0, c_left = 0.0, c_top = 0.0, total = 0.0;
  };

  AdaptationTrainer(const ExperimentConfig& cfg, const RunData& data)
      : cfg_(cfg), data_(data), seeds_(sub_seeds(cfg)), det_(cfg.detector, seeds_.init),
        occupancy_(static_cast<int>(cfg.detector.levels.size()), cfg.n_bin) {
    const int d = cfg.detector.feature_channels;
    const int dc_in = align::conditioned_channels(cfg.strategy, d, cfg.n_bin);
    for (const auto& l : cfg.detector.levels) {
      const std::string lv = std::to_string(l.lv);
      if (uses_global(cfg.variant)) dg_.emplace_back("disc_g.lv" + lv, d, cfg.disc_hidden, derive_seed(seeds_.disc, "g", l.lv));
      if (uses_left(cfg.variant)) {
        dc_left_.emplace_back("disc_c_left.lv" + lv, dc_in, cfg.disc_hidden, derive_seed(seeds_.disc, "c_left", l.lv));
      }
      if (uses_top(cfg.variant)) {
        dc_top_.emplace_back("disc_c_top.lv" + lv, dc_in, cfg.disc_hidden, derive_seed(seeds_.disc, "c_top", l.lv));
      }
    }
    std::vector<diff::Tensor*> params;
    for (auto& p : det_.parameters()) params.push_back(p.tensor);
    for (auto& p : disc_parameters()) params.push_back(p.tensor);
    opt_ = fcos::Sgd(std::move(params), cfg.sgd);
  }

  fcos::Detector& detector() { return det_; }
  align::BinOccupancy& occupancy() { return occupancy_; }

  std::vector<fcos::NamedParam> disc_parameters() {
    std::vector<fcos::NamedParam> out;
    for (auto* group : {&dg_, &dc_left_, &dc_top_}) {
      for (auto& d : *group) {
        for (auto& p : d.parameters()) out.push_back(p);
      }
    }
    return out;
  }

  fcos::Checkpoint checkpoint(int iteration) {
    fcos::Checkpoint ck = fcos::make_checkpoint(det_, iteration);
    for (auto& p : disc_parameters()) ck.tensors.push_back({p.name, *p.tensor});
    ck.extra = {{"variant", to_string(cfg_.variant)}, {"experiment_hash", config_hash(cfg_)}};
    return ck;
  }

  StepLosses step(int iter, std::span<const std::size_t> src_idx, std::span<const std::size_t> tgt_idx, double lr) {
    diff::Tape tape;
    std::vector<std::vector<fcos::LevelOutput>> so, to;
    std::vector<fcos::AssignedTargets> st;
    for (std::size_t k : src_idx) {
      so.push_back(det_.forward(tape, tape.constant(data_.train.source[k].image, "source")));
      st.push_back(data_.source_targets[k]);
    }
    if (cfg_.variant != Variant::source_only) {
      for (std::size_t k : tgt_idx) to.push_back(det_.forward(tape, tape.constant(data_.train.target.image(k), "target")));
    }

    const fcos::DetectionLoss det = fcos::detection_loss(tape, so, st);
    std::vector<diff::Var> lg, lcl, lct;
    const std::size_t n_levels = cfg_.detector.levels.size();
    for (std::size_t l = 0; l < n_levels && uses_global(cfg_.variant); ++l) {
      std::vector<diff::Var> fs_, ft_;
      for (const auto& o : so) fs_.push_back(o[l].feature);
      for (const auto& o : to) ft_.push_back(o[l].feature);
      lg.push_back(align::global_adv_loss(tape, dg_[l], fs_, ft_, cfg_.weights.grl_g));
    }
    if (uses_conditional(cfg_.variant)) {
      const double alpha = cfg_.blend.alpha(iter);
      const double rho = cfg_.effective_rho();
      for (std::size_t l = 0; l < n_levels; ++l) {
        const int lv = cfg_.detector.levels[l].lv;
        const align::ConditionParams cp{align::default_bin_spec(cfg_.n_bin, lv), alpha, lv, cfg_.strategy,
                                        cfg_.grad_to_q};
        std::vector<Tensor> ms, mt;
        std::vector<diff::Var> off_s, off_t;
        for (std::size_t k = 0; k < so.size(); ++k) {
          ms.push_back(align::objectness_mask_source(st[k][l]));
          off_s.push_back(tape.constant(st[k][l].offsets, "gt-offsets"));
        }
        for (const auto& o : to) {
          mt.push_back(align::objectness_mask_target(o[l].cls_logits.value(), rho));
          off_t.push_back(o[l].reg);
        }
        auto branch_loss = [&](align::Branch b, const align::Discriminator& disc) {
          std::vector<diff::Var> gs, gt;
          for (std::size_t k = 0; k < so.size(); ++k) {
            auto m = align::build_conditioned_map(so[k][l].feature, off_s[k], ms[k], b, cp);
            occupancy_.add(static_cast<int>(l), m.q_tilde, ms[k]);
            gs.push_back(m.map);
          }
          for (std::size_t k = 0; k < to.size(); ++k) {
            auto m = align::build_conditioned_map(to[k][l].feature, off_t[k], mt[k], b, cp);
            occupancy_.add(static_cast<int>(l), m.q_tilde, mt[k]);
            gt.push_back(m.map);
          }
          return align::conditional_adv_loss(tape, disc, gs, ms, gt, mt, cfg_.weights.grl_c);
        };
        if (uses_left(cfg_.variant)) lcl.push_back(branch_loss(align::Branch::left, dc_left_[l]));
        if (uses_top(cfg_.variant)) lct.push_back(branch_loss(align::Branch::top, dc_top_[l]));
      }
    }
    const double lambda_c = iter < cfg_.cond_delay ? 0.0 : cfg_.weights.lambda_c;
    const diff::Var total = align::total_loss(det.total, lg, lcl, lct, cfg_.weights.lambda_g, lambda_c);
    StepLosses out;
    out.det = det.total.value()[0];
    auto mean_value = [](const std::vector<diff::Var>& xs) {
      double s = 0.0;
      for (const auto& x : xs) s += x.value()[0];
      return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
    };
    out.g = mean_value(lg);
    out.c_left = mean_value(lcl);
    out.c_top = mean_value(lct);
    out.total = total.value()[0];
    if (!std::isfinite(out.total)) throw diff::NonFiniteError("non-finite total loss");
    tape.backward(total);
    opt_.step(lr);
    return out;
  }

 private:
  const ExperimentConfig& cfg_;
  const RunData& data_;
  SubSeeds seeds_;
  fcos::Detector det_;
  std::vector<align::Discriminator> dg_, dc_left_, dc_top_;
  fcos::Sgd opt_;
  align::BinOccupancy occupancy_;
};

inline RunResult self_train_run(const ExperimentConfig& cfg, const RunOptions& opt);

// Trains one variant from scratch. Writes config.json, metrics.csv,
// checkpoints at the lr decay points and final.ckpt into cfg.output_dir, then
// evaluates on the held-out target split.
inline RunResult train_run(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  if (cfg.variant == Variant::self_train) return self_train_run(cfg, opt);
  const fs::path dir = cfg.output_dir;
  const std::string hash = config_hash(cfg);
  if (opt.use_cache) {
    if (auto cached = load_cached_run(dir, hash)) {
      if (opt.log) opt.log("cached run " + dir.string());
      return *cached;
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(dir);
  fs::remove(dir / "result.json");
  write_json(dir / "config.json", resolved_config_json(cfg));

  const RunData data = build_run_data(cfg);
  AdaptationTrainer trainer(cfg, data);
  const SubSeeds seeds = sub_seeds(cfg);
  EpochSampler src_sampler(data.train.source.size(), derive_seed(seeds.batch, "source"));
  EpochSampler tgt_sampler(data.train.target.size(), derive_seed(seeds.batch, "target"));

  RunResult res;
  res.dir = dir;
  res.config_hash = hash;
  res.metrics = MetricsTable(metrics_columns(cfg));
  const auto decays = cfg.schedule.milestone_iters(cfg.iters);

  AdaptationTrainer::StepLosses window;
  int window_n = 0;
  std::vector<std::size_t> si(static_cast<std::size_t>(cfg.batch)), ti(static_cast<std::size_t>(cfg.batch));
  for (int iter = 0; iter < cfg.iters; ++iter) {
    for (auto& i : si) i = src_sampler.next();
    for (auto& i : ti) i = tgt_sampler.next();
    const double lr = cfg.schedule.lr_at(iter, cfg.iters);
    AdaptationTrainer::StepLosses s;
    try {
      s = trainer.step(iter, si, ti, lr);
    } catch (const diff::NonFiniteError& e) {
      res.metrics.write_csv(dir / "metrics.csv");
      throw DivergenceError(iter, e.what());
    }
    window.det += s.det;
    window.g += s.g;
    window.c_left += s.c_left;
    window.c_top += s.c_top;
    ++window_n;

    if (iter % cfg.log_every == 0 || iter == cfg.iters - 1) {
      MetricsTable::Row row{{"iter", iter}, {"loss_det", window.det / window_n}, {"lr", lr}};
      if (uses_global(cfg.variant)) row["loss_g"] = window.g / window_n;
      if (uses_left(cfg.variant)) row["loss_c_left"] = window.c_left / window_n;
      if (uses_top(cfg.variant)) row["loss_c_top"] = window.c_top / window_n;
      if (uses_conditional(cfg.variant)) {
        row["alpha"] = cfg.blend.alpha(iter);
        align::BinOccupancy& occ = trainer.occupancy();
        for (std::size_t l = 0; l < cfg.detector.levels.size(); ++l) {
          const auto mean = occ.mean(static_cast<int>(l));
          if (!mean) continue;
          for (int i = 0; i < cfg.n_bin; ++i) {
            row[occupancy_column(cfg.detector.levels[l].lv, i)] = (*mean)[static_cast<std::size_t>(i)];
          }
        }
        occ.reset();
      }
      res.metrics.add(std::move(row));
      if (opt.log) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "[%s] iter %d loss_det %.4f loss_g %.4f loss_c %.4f/%.4f lr %.5f",
                      to_string(cfg.variant), iter, window.det / window_n, window.g / window_n,
                      window.c_left / window_n, window.c_top / window_n, lr);
        opt.log(buf);
      }
      window = {};
      window_n = 0;
    }
    if (std::find(decays.begin(), decays.end(), iter + 1) != decays.end() && iter + 1 < cfg.iters) {
      const fs::path p = dir / checkpoint_name(iter + 1);
      fcos::save_checkpoint(p, trainer.checkpoint(iter + 1));
      res.decay_checkpoints.push_back(p);
    }
  }
  res.final_checkpoint = dir / "final.ckpt";
  fcos::save_checkpoint(res.final_checkpoint, trainer.checkpoint(cfg.iters));
  res.metrics.write_csv(dir / "metrics.csv");
  res.target = evaluate_detector(trainer.detector(), data.eval);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_result(res);
  if (opt.log) opt.log("target mAP " + std::to_string(res.target.map) + " in " + std::to_string(res.seconds) + " s");
  return res;
}

}  // namespace oada::harness

#include "oada/harness/self_train.hpp"
