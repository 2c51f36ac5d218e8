#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oada/fcoslite/model.hpp"
#include "oada/util/le_io.hpp"

namespace oada::fcos {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Header: one JSON line with {format, config_hash, iteration, config,
// params: [{name, shape}], extra}; then raw little-endian float64 buffers in
// header order.
struct Checkpoint {
  std::string config_hash;
  int iteration = 0;
  nlohmann::json config;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t.value;
    }
    return nullptr;
  }
};

inline constexpr const char* kCheckpointFormat = "oada-fcoslite-ckpt-v1";

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json header{{"format", kCheckpointFormat},
                        {"config_hash", ck.config_hash},
                        {"iteration", ck.iteration},
                        {"config", ck.config},
                        {"extra", ck.extra}};
  nlohmann::json params = nlohmann::json::array();
  for (const auto& t : ck.tensors) params.push_back({{"name", t.name}, {"shape", t.value.shape()}});
  header["params"] = params;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot open " + tmp.string());
    out << header.dump() << '\n';
    for (const auto& t : ck.tensors) {
      for (double v : t.value.data()) write_f64(out, v);
    }
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError("empty checkpoint: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad checkpoint header: " + std::string(e.what()));
  }
  if (header.value("format", "") != kCheckpointFormat) throw CheckpointError("unknown checkpoint format");
  Checkpoint ck;
  ck.config_hash = header.at("config_hash").get<std::string>();
  ck.iteration = header.at("iteration").get<int>();
  ck.config = header.at("config");
  ck.extra = header.value("extra", nlohmann::json::object());
  for (const auto& p : header.at("params")) {
    Tensor t(p.at("shape").get<Shape>());
    for (double& v : t.data()) {
      if (!read_f64(in, v)) throw CheckpointError("truncated checkpoint");
    }
    ck.tensors.push_back({p.at("name").get<std::string>(), std::move(t)});
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes in checkpoint");
  return ck;
}

inline Checkpoint make_checkpoint(Detector& det, int iteration) {
  Checkpoint ck;
  ck.config_hash = config_hash(det.config());
  ck.iteration = iteration;
  ck.config = to_json(det.config());
  for (const NamedParam& p : det.parameters()) ck.tensors.push_back({p.name, Tensor(p.tensor->shape(), p.tensor->storage())});
  return ck;
}

// Copies matching parameters into the detector; every detector parameter
// must be present with the same shape.
inline void load_into(Detector& det, const Checkpoint& ck) {
  if (ck.config_hash != config_hash(det.config())) throw CheckpointError("checkpoint config hash mismatch");
  for (NamedParam& p : det.parameters()) {
    const Tensor* src = ck.find(p.name);
    if (src == nullptr) throw CheckpointError("checkpoint missing parameter " + p.name);
    if (src->shape() != p.tensor->shape()) throw CheckpointError("shape mismatch for " + p.name);
    std::copy(src->data().begin(), src->data().end(), p.tensor->data().begin());
  }
}

inline Detector detector_from_checkpoint(const Checkpoint& ck) {
  Detector det(detector_config_from_json(ck.config), 0);
  load_into(det, ck);
  return det;
}

}  // namespace oada::fcos
