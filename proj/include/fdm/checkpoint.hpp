// SPDX-License-Identifier: Apache-2.0
#pragma once

// Checkpoint container: one JSON document
//
//   {"format": "fdm-checkpoint", "version": 1,
//    "payload": {config, outer_iter, rng, f, g?, f_ema?},
//    "checksum": "fnv1a64:<16 hex digits of payload.dump()>"}
//
// Every real is written in shortest round-trip decimal form, so
// save -> load -> save is byte-identical and loading reproduces the state
// bit for bit. A network block stores its parameters as
// [{"name", "shape", "data"}] plus its Adam state.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>

#include "fdm/trainer.hpp"

namespace fdm {

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::string& path, std::string_view bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move '" + tmp + "' to '" + path + "'");
}

namespace detail {

inline Json tensor_json(const Tensor& t) { return Json{{"shape", t.shape()}, {"data", t.raw()}}; }

inline Tensor tensor_from(const Json& j) {
  Shape shape = j.at("shape").get<Shape>();
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  return Tensor(std::move(shape), std::move(data));
}

inline Json params_json(const ParamStore& ps) {
  Json arr = Json::array();
  for (const auto& e : ps.entries()) {
    Json p = tensor_json(e.value);
    arr.push_back(Json{{"name", e.name}, {"shape", p["shape"]}, {"data", p["data"]}});
  }
  return arr;
}

inline void params_into(const Json& j, ParamStore& ps, const std::string& what) {
  auto& entries = ps.entries();
  if (!j.is_array() || j.size() != entries.size())
    throw CheckpointError("checkpoint: parameter count mismatch for " + what);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (j[i].at("name").get<std::string>() != entries[i].name)
      throw CheckpointError("checkpoint: expected parameter '" + entries[i].name + "' in " + what);
    Tensor t = tensor_from(j[i]);
    if (t.shape() != entries[i].value.shape())
      throw CheckpointError("checkpoint: shape mismatch for '" + entries[i].name + "' in " + what);
    entries[i].value = std::move(t);
  }
}

inline Json adam_state_json(const AdamState& s) {
  Json m = Json::array(), v = Json::array();
  for (const auto& t : s.m) m.push_back(tensor_json(t));
  for (const auto& t : s.v) v.push_back(tensor_json(t));
  return Json{{"config", adam_json(s.config)}, {"step", s.step}, {"m", m}, {"v", v}};
}

inline AdamState adam_state_from(const Json& j, const ParamStore& ps) {
  AdamState s = make_adam_state(ps);
  const Json& cfg = j.at("config");
  s.config = AdamConfig{cfg.at("lr").get<double>(), cfg.at("beta1").get<double>(), cfg.at("beta2").get<double>(),
                        cfg.at("eps").get<double>()};
  s.step = j.at("step").get<std::uint64_t>();
  const Json& m = j.at("m");
  const Json& v = j.at("v");
  if (m.size() != s.m.size() || v.size() != s.v.size()) throw CheckpointError("checkpoint: optimizer moment count mismatch");
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    Tensor mt = tensor_from(m[i]), vt = tensor_from(v[i]);
    if (mt.shape() != s.m[i].shape() || vt.shape() != s.v[i].shape())
      throw CheckpointError("checkpoint: optimizer moment shape mismatch");
    s.m[i] = std::move(mt);
    s.v[i] = std::move(vt);
  }
  return s;
}

inline Json generator_json(const Generator& g) {
  Json j{{"params", params_json(g.params())}};
  if (g.paired_set()) j["pairs"] = Json{{"z", tensor_json(g.paired_set()->z)}, {"x", tensor_json(g.paired_set()->x)}};
  return j;
}

inline Generator generator_from(const Json& j, const TrainConfig& c) {
  std::optional<PairedSet> pairs;
  if (j.contains("pairs")) pairs = PairedSet{tensor_from(j["pairs"].at("z")), tensor_from(j["pairs"].at("x"))};
  Rng unused(0);
  Generator g(c.generator, unused, std::move(pairs));
  params_into(j.at("params"), g.params(), "generator");
  return g;
}

inline ConsistencyNet consistency_from(const Json& j, const TrainConfig& c, std::size_t dim) {
  Rng unused(0);
  ConsistencyNet f(consistency_spec(c, dim), unused);
  params_into(j.at("params"), f.params(), "consistency net");
  return f;
}

inline Json checkpoint_payload(const Checkpoint& ck) {
  Json p;
  p["config"] = config_to_json(ck.config);
  p["outer_iter"] = ck.outer_iter;
  p["rng"] = Json{{"seed", ck.rng.seed()}, {"counter", ck.rng.counter()}};
  p["dim"] = ck.f.dim();
  p["f"] = Json{{"params", params_json(ck.f.params())}, {"adam", adam_state_json(ck.adam_f)}};
  if (ck.g) {
    Json g = generator_json(*ck.g);
    g["adam"] = adam_state_json(ck.adam_g);
    p["g"] = g;
  }
  if (ck.f_ema) p["f_ema"] = Json{{"params", params_json(ck.f_ema->params())}};
  return p;
}

}  // namespace detail

inline std::string checkpoint_to_string(const Checkpoint& ck) {
  const Json payload = detail::checkpoint_payload(ck);
  Json doc;
  doc["format"] = "fdm-checkpoint";
  doc["version"] = Checkpoint::kFormatVersion;
  doc["payload"] = payload;
  doc["checksum"] = "fnv1a64:" + hex64(fnv1a64(payload.dump()));
  return doc.dump() + "\n";
}

inline Checkpoint checkpoint_from_string(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint is corrupt or truncated: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", "") != "fdm-checkpoint")
      throw CheckpointError("not an fdm checkpoint");
    const int version = doc.at("version").get<int>();
    if (version != Checkpoint::kFormatVersion)
      throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                            std::to_string(Checkpoint::kFormatVersion) + ")");
    const Json& p = doc.at("payload");
    if (doc.at("checksum").get<std::string>() != "fnv1a64:" + hex64(fnv1a64(p.dump())))
      throw CheckpointError("checkpoint checksum mismatch (file corrupted)");

    Checkpoint ck;
    ck.config = config_from_json(p.at("config"));
    ck.outer_iter = p.at("outer_iter").get<std::uint64_t>();
    ck.rng = Rng(p.at("rng").at("seed").get<std::uint64_t>(), p.at("rng").at("counter").get<std::uint64_t>());
    const std::size_t dim = p.at("dim").get<std::size_t>();
    ck.f = detail::consistency_from(p.at("f"), ck.config, dim);
    ck.adam_f = detail::adam_state_from(p.at("f").at("adam"), ck.f.params());
    if (p.contains("g")) {
      ck.g = detail::generator_from(p["g"], ck.config);
      ck.adam_g = detail::adam_state_from(p["g"].at("adam"), ck.g->params());
    }
    if (p.contains("f_ema")) ck.f_ema = detail::consistency_from(p["f_ema"], ck.config, dim);
    return ck;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint is malformed: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  write_file_bytes(path, checkpoint_to_string(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::string text;
  try {
    text = read_file_bytes(path);
  } catch (const IoError& e) {
    throw CheckpointError(e.what());
  }
  return checkpoint_from_string(text);
}

}  // namespace fdm
