#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oada/align.hpp"
#include "oada/fcoslite.hpp"
#include "oada/scenegen.hpp"
#include "oada/selftrain.hpp"
#include "oada/util/seed.hpp"

namespace oada::harness {

using nlohmann::json;

enum class Variant { source_only, ga, oada_left, oada_top, oada_left_top, self_train };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::source_only: return "source_only";
    case Variant::ga: return "ga";
    case Variant::oada_left: return "oada_left";
    case Variant::oada_top: return "oada_top";
    case Variant::oada_left_top: return "oada_left_top";
    case Variant::self_train: return "self_train";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::source_only, Variant::ga, Variant::oada_left, Variant::oada_top, Variant::oada_left_top,
                    Variant::self_train}) {
    if (s == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown variant '" + s + "'");
}

inline bool uses_global(Variant v) { return v != Variant::source_only && v != Variant::self_train; }
inline bool uses_left(Variant v) { return v == Variant::oada_left || v == Variant::oada_left_top; }
inline bool uses_top(Variant v) { return v == Variant::oada_top || v == Variant::oada_left_top; }
inline bool uses_conditional(Variant v) { return uses_left(v) || uses_top(v); }

struct DataConfig {
  scene::SceneSpec spec;
  scene::DomainShift shift;
  int n_source = 500;
  int n_target = 500;
  int n_eval = 200;  // held-out target scenes for mAP
};

struct ExperimentConfig {
  DataConfig data;
  fcos::DetectorConfig detector;
  Variant variant = Variant::oada_left_top;

  align::LossWeights weights;
  std::optional<double> rho;  // default follows the shift kind
  align::BlendSchedule blend;
  int n_bin = 3;
  align::Strategy strategy = align::Strategy::outer;
  bool grad_to_q = false;
  int cond_delay = 100;  // L_c zero-weighted before this iteration
  int disc_hidden = 32;

  int iters = 2000;
  fcos::StepSchedule schedule;
  fcos::SgdParams sgd;
  int batch = 2;  // per domain
  int log_every = 100;

  std::uint64_t seed = 0;
  std::optional<std::uint64_t> data_seed;  // shared datasets across seeds

  // self_train only
  std::string init_checkpoint;
  selftrain::SelfTrainParams self;
  selftrain::AugmentParams augment;

  std::string output_dir = "runs/default";

  double effective_rho() const {
    if (rho) return *rho;
    return data.shift.kind == scene::ShiftKind::fog ? 0.3 : 0.5;
  }

  void validate() const {
    data.spec.validate();
    data.shift.validate();
    detector.validate();
    if (data.spec.image_size != detector.image_size || data.spec.num_classes != detector.num_classes) {
      throw std::invalid_argument("config: scene spec and detector disagree on image size or classes");
    }
    if (data.n_source < 1 || data.n_target < 1 || data.n_eval < 1) {
      throw std::invalid_argument("config: every split needs at least one scene");
    }
    if (iters < 1) throw std::invalid_argument("config: iters must be >= 1");
    if (batch < 1) throw std::invalid_argument("config: batch must be >= 1");
    if (log_every < 1) throw std::invalid_argument("config: log_every must be >= 1");
    if (!(schedule.base_lr > 0.0)) throw std::invalid_argument("config: base_lr must be positive");
    if (sgd.momentum < 0.0 || sgd.momentum >= 1.0) throw std::invalid_argument("config: momentum outside [0, 1)");
    blend.validate();
    const double r = effective_rho();
    if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("config: rho outside [0, 1)");
    if (uses_conditional(variant)) {
      for (const auto& l : detector.levels) (void)align::default_m_values(n_bin, l.lv);
      const auto decays = schedule.milestone_iters(iters);
      if (!decays.empty() && blend.warmup_iters > decays.front()) {
        throw std::invalid_argument("config: blend warm-up I=" + std::to_string(blend.warmup_iters) +
                                    " exceeds the first lr decay at " + std::to_string(decays.front()));
      }
    }
    if (variant == Variant::self_train) {
      self.validate();
      if (init_checkpoint.empty()) throw std::invalid_argument("config: self_train needs init_checkpoint");
    }
    if (disc_hidden < 1) throw std::invalid_argument("config: disc_hidden must be >= 1");
  }
};

// Named sub-seeds of the global seed. Each stream depends on its own name
// only, so overriding one leaves the others unchanged.
struct SubSeeds {
  std::uint64_t data, init, batch, disc, augment;
};

inline SubSeeds sub_seeds(const ExperimentConfig& c) {
  return {c.data_seed ? *c.data_seed : derive_seed(c.seed, "data"), derive_seed(c.seed, "init"),
          derive_seed(c.seed, "batch"), derive_seed(c.seed, "disc"), derive_seed(c.seed, "augment")};
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const scene::DomainShift& s) {
  return {{"kind", scene::to_string(s.kind)}, {"beta", s.beta},   {"blur_radius", s.blur_radius},
          {"gain", s.gain},                   {"bias", s.bias}, {"noise_sigma", s.noise_sigma}};
}

inline scene::DomainShift shift_from_json(const json& j, scene::DomainShift s = {}) {
  if (j.contains("kind")) s.kind = scene::parse_shift_kind(j.at("kind").get<std::string>());
  s.beta = j.value("beta", s.beta);
  s.blur_radius = j.value("blur_radius", s.blur_radius);
  s.gain = j.value("gain", s.gain);
  s.bias = j.value("bias", s.bias);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  return s;
}

inline json to_json(const scene::SceneSpec& s) {
  return {{"image_size", s.image_size},   {"channels", s.channels},       {"num_classes", s.num_classes},
          {"min_objects", s.min_objects}, {"max_objects", s.max_objects}, {"min_side", s.min_side},
          {"max_side", s.max_side},       {"texture_seed", s.texture_seed}};
}

inline scene::SceneSpec scene_spec_from_json(const json& j, scene::SceneSpec s = {}) {
  s.image_size = j.value("image_size", s.image_size);
  s.channels = j.value("channels", s.channels);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.min_objects = j.value("min_objects", s.min_objects);
  s.max_objects = j.value("max_objects", s.max_objects);
  s.min_side = j.value("min_side", s.min_side);
  s.max_side = j.value("max_side", s.max_side);
  s.texture_seed = j.value("texture_seed", s.texture_seed);
  return s;
}

// Everything that determines the run's numbers; output_dir is kept out of
// the hash so relocated runs still hit the cache.
inline json to_json(const ExperimentConfig& c) {
  json j;
  j["data"] = {{"spec", to_json(c.data.spec)},
               {"shift", to_json(c.data.shift)},
               {"n_source", c.data.n_source},
               {"n_target", c.data.n_target},
               {"n_eval", c.data.n_eval}};
  j["detector"] = fcos::to_json(c.detector);
  j["variant"] = to_string(c.variant);
  j["lambda_g"] = c.weights.lambda_g;
  j["lambda_c"] = c.weights.lambda_c;
  j["grl_g"] = c.weights.grl_g;
  j["grl_c"] = c.weights.grl_c;
  j["rho"] = c.effective_rho();
  j["blend_iters"] = c.blend.warmup_iters;
  j["alpha0"] = c.blend.alpha0;
  j["n_bin"] = c.n_bin;
  j["strategy"] = align::to_string(c.strategy);
  j["grad_to_q"] = c.grad_to_q;
  j["cond_delay"] = c.cond_delay;
  j["disc_hidden"] = c.disc_hidden;
  j["iters"] = c.iters;
  j["lr"] = {{"base", c.schedule.base_lr},
             {"factor", c.schedule.factor},
             {"milestones", c.schedule.milestones},
             {"warmup_iters", c.schedule.warmup_iters}};
  j["sgd"] = {{"momentum", c.sgd.momentum}, {"weight_decay", c.sgd.weight_decay}, {"clip_norm", c.sgd.clip_norm}};
  j["batch"] = c.batch;
  j["log_every"] = c.log_every;
  j["seed"] = c.seed;
  j["data_seed"] = c.data_seed ? json(*c.data_seed) : json(nullptr);
  if (c.variant == Variant::self_train) {
    j["init_checkpoint"] = c.init_checkpoint;
    j["self"] = {{"ema_rate", c.self.ema_rate},
                 {"ema_interval", c.self.ema_interval},
                 {"delta", c.self.delta},
                 {"lambda_self", c.self.lambda_self}};
    j["augment"] = {{"brightness", c.augment.brightness},
                    {"contrast", c.augment.contrast},
                    {"color", c.augment.color},
                    {"noise_sigma", c.augment.noise_sigma},
                    {"max_erase_patches", c.augment.max_erase_patches},
                    {"max_erase_side", c.augment.max_erase_side}};
  }
  return j;
}

// Fields missing from `j` keep the values already in `c`, so a partial file
// can override a base configuration.
inline ExperimentConfig apply_json(ExperimentConfig c, const json& j) {
  if (j.contains("data")) {
    const json& d = j.at("data");
    if (d.contains("spec")) c.data.spec = scene_spec_from_json(d.at("spec"), c.data.spec);
    if (d.contains("shift")) c.data.shift = shift_from_json(d.at("shift"), c.data.shift);
    c.data.n_source = d.value("n_source", c.data.n_source);
    c.data.n_target = d.value("n_target", c.data.n_target);
    c.data.n_eval = d.value("n_eval", c.data.n_eval);
  }
  if (j.contains("detector")) c.detector = fcos::detector_config_from_json(j.at("detector"));
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  c.weights.lambda_g = j.value("lambda_g", c.weights.lambda_g);
  c.weights.lambda_c = j.value("lambda_c", c.weights.lambda_c);
  c.weights.grl_g = j.value("grl_g", c.weights.grl_g);
  c.weights.grl_c = j.value("grl_c", c.weights.grl_c);
  if (j.contains("rho") && !j.at("rho").is_null()) c.rho = j.at("rho").get<double>();
  c.blend.warmup_iters = j.value("blend_iters", c.blend.warmup_iters);
  c.blend.alpha0 = j.value("alpha0", c.blend.alpha0);
  c.n_bin = j.value("n_bin", c.n_bin);
  if (j.contains("strategy")) c.strategy = align::parse_strategy(j.at("strategy").get<std::string>());
  c.grad_to_q = j.value("grad_to_q", c.grad_to_q);
  c.cond_delay = j.value("cond_delay", c.cond_delay);
  c.disc_hidden = j.value("disc_hidden", c.disc_hidden);
  c.iters = j.value("iters", c.iters);
  if (j.contains("lr")) {
    const json& l = j.at("lr");
    c.schedule.base_lr = l.value("base", c.schedule.base_lr);
    c.schedule.factor = l.value("factor", c.schedule.factor);
    c.schedule.milestones = l.value("milestones", c.schedule.milestones);
    c.schedule.warmup_iters = l.value("warmup_iters", c.schedule.warmup_iters);
  }
  if (j.contains("sgd")) {
    const json& s = j.at("sgd");
    c.sgd.momentum = s.value("momentum", c.sgd.momentum);
    c.sgd.weight_decay = s.value("weight_decay", c.sgd.weight_decay);
    c.sgd.clip_norm = s.value("clip_norm", c.sgd.clip_norm);
  }
  c.batch = j.value("batch", c.batch);
  c.log_every = j.value("log_every", c.log_every);
  c.seed = j.value("seed", c.seed);
  if (j.contains("data_seed")) {
    c.data_seed = j.at("data_seed").is_null() ? std::nullopt : std::optional(j.at("data_seed").get<std::uint64_t>());
  }
  c.init_checkpoint = j.value("init_checkpoint", c.init_checkpoint);
  if (j.contains("self")) {
    const json& s = j.at("self");
    c.self.ema_rate = s.value("ema_rate", c.self.ema_rate);
    c.self.ema_interval = s.value("ema_interval", c.self.ema_interval);
    c.self.delta = s.value("delta", c.self.delta);
    c.self.lambda_self = s.value("lambda_self", c.self.lambda_self);
  }
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    c.augment.brightness = a.value("brightness", c.augment.brightness);
    c.augment.contrast = a.value("contrast", c.augment.contrast);
    c.augment.color = a.value("color", c.augment.color);
    c.augment.noise_sigma = a.value("noise_sigma", c.augment.noise_sigma);
    c.augment.max_erase_patches = a.value("max_erase_patches", c.augment.max_erase_patches);
    c.augment.max_erase_side = a.value("max_erase_side", c.augment.max_erase_side);
  }
  c.output_dir = j.value("output_dir", c.output_dir);
  return c;
}

inline ExperimentConfig config_from_json(const json& j) { return apply_json(ExperimentConfig{}, j); }

inline std::string hash_hex(const json& j) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) { return hash_hex(to_json(c)); }

}  // namespace oada::harness
