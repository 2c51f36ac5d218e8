#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oada/util/seed.hpp"

namespace oada::fcos {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

// One feature level: index lv, stride 2^lv, and the upper end of the
// max-offset band it is responsible for.
struct LevelSpec {
  int lv = 3;
  double max_offset = kUnbounded;

  int stride() const { return 1 << lv; }
};

struct DetectorConfig {
  int image_size = 128;
  int num_classes = 3;
  int feature_channels = 32;  // D
  int stem_channels = 16;
  std::vector<LevelSpec> levels{{3, 32.0}, {4, 64.0}, {5, kUnbounded}};

  void validate() const {
    if (levels.empty()) throw std::invalid_argument("detector config: no levels");
    if (num_classes < 1) throw std::invalid_argument("detector config: num_classes must be >= 1");
    if (feature_channels < 1 || stem_channels < 1) throw std::invalid_argument("detector config: bad channels");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (levels[i].lv < 1 || levels[i].lv > 10) throw std::invalid_argument("detector config: level out of range");
      if (i > 0) {
        if (levels[i].lv != levels[i - 1].lv + 1) {
          throw std::invalid_argument("detector config: levels must be consecutive with increasing stride");
        }
        if (!(levels[i].max_offset > levels[i - 1].max_offset)) {
          throw std::invalid_argument("detector config: max_offset must be strictly increasing");
        }
      }
      if (image_size % levels[i].stride() != 0) {
        throw std::invalid_argument("detector config: image size not divisible by stride");
      }
    }
    if (levels.front().lv != 3) throw std::invalid_argument("detector config: first level must be lv=3");
    if (levels.back().max_offset != kUnbounded) {
      throw std::invalid_argument("detector config: last level must have an unbounded max_offset");
    }
  }

  int feature_size(std::size_t level) const { return image_size / levels.at(level).stride(); }
};

inline nlohmann::json to_json(const DetectorConfig& c) {
  nlohmann::json lv = nlohmann::json::array();
  for (const auto& l : c.levels) {
    lv.push_back({{"lv", l.lv}, {"max_offset", l.max_offset == kUnbounded ? nlohmann::json("inf") : nlohmann::json(l.max_offset)}});
  }
  return {{"image_size", c.image_size},
          {"num_classes", c.num_classes},
          {"feature_channels", c.feature_channels},
          {"stem_channels", c.stem_channels},
          {"levels", lv}};
}

inline DetectorConfig detector_config_from_json(const nlohmann::json& j) {
  DetectorConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.feature_channels = j.value("feature_channels", c.feature_channels);
  c.stem_channels = j.value("stem_channels", c.stem_channels);
  if (j.contains("levels")) {
    c.levels.clear();
    for (const auto& l : j.at("levels")) {
      LevelSpec s;
      s.lv = l.at("lv").get<int>();
      const auto& m = l.at("max_offset");
      s.max_offset = m.is_string() ? kUnbounded : m.get<double>();
      c.levels.push_back(s);
    }
  }
  c.validate();
  return c;
}

inline std::string config_hash(const DetectorConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

}  // namespace oada::fcos
