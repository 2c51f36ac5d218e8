#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oada/scenegen/generator.hpp"
#include "oada/scenegen/png_io.hpp"
#include "oada/scenegen/scene.hpp"
#include "oada/scenegen/shift.hpp"
#include "oada/util/seed.hpp"

namespace oada::scene {

// Unlabeled-for-training target domain. Images are freely readable; the
// ground truth is only reachable through eval_ground_truth(), which the
// training loops never call.
class TargetDomain {
 public:
  TargetDomain() = default;
  explicit TargetDomain(std::vector<Scene> scenes) : scenes_(std::move(scenes)) {}

  std::size_t size() const { return scenes_.size(); }
  bool empty() const { return scenes_.empty(); }
  const Tensor& image(std::size_t i) const { return scenes_.at(i).image; }
  std::span<const Scene> eval_ground_truth() const { return scenes_; }

 private:
  std::vector<Scene> scenes_;
};

struct Dataset {
  SceneSpec spec;
  DomainShift shift;
  std::uint64_t seed = 0;
  std::vector<Scene> source;
  TargetDomain target;
};

// Source scenes and target scenes come from disjoint seed streams; target
// scenes are then passed through the domain shift.
inline Dataset build_dataset(const SceneSpec& spec, const DomainShift& shift, std::size_t n_source,
                             std::size_t n_target, std::uint64_t seed) {
  spec.validate();
  shift.validate();
  Dataset ds;
  ds.spec = spec;
  ds.shift = shift;
  ds.seed = seed;
  ds.source.reserve(n_source);
  for (std::size_t i = 0; i < n_source; ++i) {
    ds.source.push_back(generate_scene(derive_seed(seed, "source", i), spec));
  }
  std::vector<Scene> target;
  target.reserve(n_target);
  for (std::size_t i = 0; i < n_target; ++i) {
    Scene clean = generate_scene(derive_seed(seed, "target", i), spec);
    target.push_back(apply_shift(clean, shift, derive_seed(seed, "target-shift", i)));
  }
  ds.target = TargetDomain(std::move(target));
  return ds;
}

// ---------------------------------------------------------------------------
// Export / import: <dir>/<split>/NNNNN.png plus <dir>/<split>.json holding an
// array of {file, boxes: [[x1, y1, x2, y2], ...], labels: [...]}.

inline nlohmann::json annotations_to_json(std::span<const Scene> scenes, const std::string& split) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.png", i);
    nlohmann::json boxes = nlohmann::json::array();
    for (const Box& b : scenes[i].boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
    arr.push_back({{"file", split + "/" + name}, {"boxes", boxes}, {"labels", scenes[i].labels}});
  }
  return arr;
}

inline void export_split(const std::filesystem::path& dir, const std::string& split,
                         std::span<const Scene> scenes) {
  std::filesystem::create_directories(dir / split);
  const nlohmann::json ann = annotations_to_json(scenes, split);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    write_png((dir / ann[i]["file"].get<std::string>()).string(), scenes[i].image);
  }
  std::ofstream(dir / (split + ".json")) << ann.dump(1) << '\n';
}

inline std::vector<Scene> import_split(const std::filesystem::path& dir, const std::string& split) {
  std::ifstream in(dir / (split + ".json"));
  if (!in) throw std::runtime_error("import: missing annotation file " + (dir / (split + ".json")).string());
  const nlohmann::json ann = nlohmann::json::parse(in);
  std::vector<Scene> scenes;
  for (const auto& e : ann) {
    Scene s;
    s.image = read_png((dir / e.at("file").get<std::string>()).string());
    for (const auto& b : e.at("boxes")) {
      s.boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()});
    }
    s.labels = e.at("labels").get<std::vector<int>>();
    if (s.labels.size() != s.boxes.size()) throw std::runtime_error("import: boxes/labels length differ");
    scenes.push_back(std::move(s));
  }
  return scenes;
}

inline void export_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  export_split(dir, "source", ds.source);
  export_split(dir, "target", ds.target.eval_ground_truth());
  nlohmann::json meta{{"seed", ds.seed},
                      {"n_source", ds.source.size()},
                      {"n_target", ds.target.size()},
                      {"image_size", ds.spec.image_size},
                      {"num_classes", ds.spec.num_classes},
                      {"shift", to_string(ds.shift.kind)},
                      {"target_labels", "evaluation-only"}};
  std::ofstream(dir / "dataset.json") << meta.dump(1) << '\n';
}

}  // namespace oada::scene
