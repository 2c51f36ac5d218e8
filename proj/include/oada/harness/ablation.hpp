#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "oada/harness/train.hpp"

namespace oada::harness {

enum class Axis { alpha0, n_bin, strategy, rho };

inline const char* to_string(Axis a) {
  switch (a) {
    case Axis::alpha0: return "alpha0";
    case Axis::n_bin: return "n_bin";
    case Axis::strategy: return "strategy";
    case Axis::rho: return "rho";
  }
  return "?";
}

inline Axis parse_axis(const std::string& s) {
  for (Axis a : {Axis::alpha0, Axis::n_bin, Axis::strategy, Axis::rho}) {
    if (s == to_string(a)) return a;
  }
  throw std::invalid_argument("unknown ablation axis '" + s + "'");
}

// Axis values swept by default.
inline std::vector<std::string> default_axis_values(Axis a) {
  switch (a) {
    case Axis::alpha0: return {"0", "0.1", "0.2", "0.5", "1.0"};
    case Axis::n_bin: return {"1", "2", "3", "4", "5"};
    case Axis::strategy: return {"concatenate", "multiply", "multiply_stack", "outer"};
    case Axis::rho: return {"0.0", "0.3", "0.5", "0.7"};
  }
  return {};
}

inline ExperimentConfig with_axis_value(ExperimentConfig c, Axis a, const std::string& v) {
  std::size_t used = 0;
  auto number = [&] {
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("ablation: bad numeric value '" + v + "'");
    return x;
  };
  try {
    switch (a) {
      case Axis::alpha0: c.blend.alpha0 = number(); break;
      case Axis::n_bin: {
        const double n = number();
        if (n != static_cast<int>(n)) throw std::invalid_argument("ablation: n_bin must be an integer");
        c.n_bin = static_cast<int>(n);
        break;
      }
      case Axis::strategy: c.strategy = align::parse_strategy(v); break;
      case Axis::rho: c.rho = number(); break;
    }
  } catch (const std::logic_error& e) {  // stod failures and parse errors
    throw std::invalid_argument("ablation: invalid value '" + v + "' for axis " + to_string(a) + ": " + e.what());
  }
  return c;
}

// Runs live under <root>/runs/<config hash>, so identical configurations
// from different sweeps or benchmarks share one cached run.
inline std::filesystem::path run_dir_for(const std::filesystem::path& root, const ExperimentConfig& c) {
  return root / "runs" / config_hash(c);
}

struct AblationRow {
  std::string value;
  std::uint64_t seed = 0;
  double map = 0.0;
  std::filesystem::path dir;
  bool cached = false;
};

struct AblationResult {
  Axis axis = Axis::alpha0;
  std::vector<AblationRow> rows;

  // Median target mAP across seeds for one axis value.
  double median_map(const std::string& value) const {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.value == value) v.push_back(r.map);
    }
    if (v.empty()) throw std::invalid_argument("ablation: no rows for value '" + value + "'");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
};

inline void write_ablation_csv(const std::filesystem::path& path, const ExperimentConfig& base, const AblationResult& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ablation: cannot open " + path.string());
  out << "axis,value,variant,seed,target_map,run\n";
  char buf[64];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", row.map);
    out << to_string(r.axis) << ',' << row.value << ',' << to_string(base.variant) << ',' << row.seed << ',' << buf
        << ',' << row.dir.filename().string() << '\n';
  }
}

// Every value is validated before the first run starts. Results go to
// <root>/ablation_<axis>.csv with root = base.output_dir.
inline AblationResult ablation_sweep(const ExperimentConfig& base, Axis axis, const std::vector<std::string>& values,
                                     const std::vector<std::uint64_t>& seeds, const RunOptions& opt = {}) {
  if (values.empty() || seeds.empty()) throw std::invalid_argument("ablation: need at least one value and one seed");
  const std::filesystem::path root = base.output_dir;
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) {
    for (std::uint64_t s : seeds) {
      ExperimentConfig c = with_axis_value(base, axis, v);
      c.seed = s;
      c.validate();
      c.output_dir = run_dir_for(root, c).string();
      configs.push_back(std::move(c));
    }
  }
  AblationResult res;
  res.axis = axis;
  std::size_t k = 0;
  for (const auto& v : values) {
    for (std::uint64_t s : seeds) {
      const ExperimentConfig& c = configs[k++];
      if (opt.log) opt.log(std::string("ablation ") + to_string(axis) + "=" + v + " seed " + std::to_string(s));
      const RunResult r = train_run(c, opt);
      res.rows.push_back({v, s, r.target.map, r.dir, r.cached});
    }
  }
  write_ablation_csv(root / (std::string("ablation_") + to_string(axis) + ".csv"), base, res);
  return res;
}

}  // namespace oada::harness
