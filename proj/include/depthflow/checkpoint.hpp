#pragma once

// Surrogate checkpoints: one line of JSON header, a newline, then every
// parameter as little-endian f64 (blocks in order; within a block w1, b1,
// w2, b2, depth_scale, each row-major).

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthflow/error.hpp"
#include "depthflow/model.hpp"
#include "depthflow/partition.hpp"
#include "depthflow/trajectory.hpp"

namespace depthflow {

inline constexpr const char* kCheckpointFormat = "depthflow-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline std::vector<unsigned char> encode_checkpoint(const SurrogateModel& m, std::uint64_t seed,
                                                    const nlohmann::json& extra = {}) {
  m.validate();
  nlohmann::json blocks = nlohmann::json::array();
  std::size_t count = 0;
  for (const auto& b : m.blocks) {
    blocks.push_back({{"family", family_name(b.family)},
                      {"hidden", b.hidden()},
                      {"depth_scale", b.has_depth_scale()},
                      {"parameters", b.parameter_count()}});
    count += b.parameter_count();
  }
  nlohmann::json header = {{"format", kCheckpointFormat},
                           {"version", kCheckpointVersion},
                           {"dim", m.dim},
                           {"n_tokens", m.n_tokens},
                           {"depth", m.depth()},
                           {"schedule", m.schedule},
                           {"seed", seed},
                           {"blocks", blocks},
                           {"parameter_count", count}};
  if (!extra.is_null()) header["extra"] = extra;
  const std::string text = header.dump() + "\n";
  std::vector<unsigned char> out(text.begin(), text.end());
  for (const auto& b : m.blocks)
    b.for_each_array([&](std::span<const double> s) {
      for (double x : s) detail::put_u64(out, std::bit_cast<std::uint64_t>(x));
    });
  return out;
}

struct Checkpoint {
  SurrogateModel model;
  std::uint64_t seed = 0;
  nlohmann::json header;
};

inline Checkpoint decode_checkpoint(std::span<const unsigned char> bytes, const std::string& path = "<memory>") {
  const auto nl = std::find(bytes.begin(), bytes.end(), static_cast<unsigned char>('\n'));
  if (nl == bytes.end()) throw DataError(path + ": checkpoint header is not terminated");
  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(bytes.begin(), nl);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": checkpoint header is not valid JSON: " + e.what());
  }
  const auto& h = ck.header;
  if (h.value("format", std::string()) != kCheckpointFormat || h.value("version", 0) != kCheckpointVersion)
    throw DataError(path + ": not a version 1 depthflow checkpoint");
  try {
    ck.seed = h.at("seed").get<std::uint64_t>();
    auto& m = ck.model;
    m.dim = h.at("dim").get<std::size_t>();
    m.n_tokens = h.at("n_tokens").get<std::size_t>();
    m.schedule = h.at("schedule").get<Partition>();
    const std::size_t depth = h.at("depth").get<std::size_t>();
    for (const auto& bj : h.at("blocks")) {
      BlockParams b;
      b.family = parse_family(bj.at("family").get<std::string>());
      const std::size_t hidden = bj.at("hidden").get<std::size_t>();
      if (b.family == BlockFamily::affine) {
        b.w1 = la::Matrix(m.dim, m.dim);
        b.b1.assign(m.dim, 0.0);
      } else {
        b.w1 = la::Matrix(hidden, m.dim);
        b.b1.assign(hidden, 0.0);
        b.w2 = la::Matrix(m.dim, hidden);
        b.b2.assign(m.dim, 0.0);
      }
      if (bj.at("depth_scale").get<bool>()) b.depth_scale = la::Matrix(depth, m.dim);
      m.blocks.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed checkpoint header: " + e.what());
  }
  std::size_t pos = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  for (auto& b : ck.model.blocks)
    b.for_each_array([&](std::span<double> s) {
      if (bytes.size() - pos < 8 * s.size()) throw DataError(path + ": checkpoint payload truncated");
      for (double& x : s) {
        x = std::bit_cast<double>(detail::get_u64(bytes.data() + pos));
        pos += 8;
      }
    });
  if (pos != bytes.size()) throw DataError(path + ": trailing bytes after checkpoint payload");
  try {
    ck.model.validate();
  } catch (const UsageError& e) {
    throw DataError(path + ": " + e.what());
  }
  return ck;
}

inline void write_checkpoint(const SurrogateModel& m, std::uint64_t seed, const std::string& path,
                             const nlohmann::json& extra = {}) {
  write_bytes(path, encode_checkpoint(m, seed, extra));
}

inline Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_bytes(path), path); }

}  // namespace depthflow
