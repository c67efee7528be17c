#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthflow/error.hpp"

namespace depthflow {

/// Inclusive 1-based layer range [begin, end].
struct Segment {
  std::size_t begin = 1;
  std::size_t end = 1;

  std::size_t length() const noexcept { return end - begin + 1; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// k contiguous depth segments covering layers 1..n. Random "shuffled"
/// baselines additionally carry `assignment`, the group of each layer
/// (index layer - 1); the segments then only record the group sizes.
struct Partition {
  std::vector<Segment> segments;
  double score = 0.0;
  std::vector<std::size_t> assignment;

  std::size_t k() const noexcept { return segments.size(); }
  std::size_t n() const noexcept { return segments.empty() ? 0 : segments.back().end; }
  bool contiguous() const noexcept { return assignment.empty(); }

  /// Repetition counts n_1..n_k.
  std::vector<std::size_t> schedule() const {
    std::vector<std::size_t> s;
    for (const auto& seg : segments) s.push_back(seg.length());
    return s;
  }

  /// Group index of a 1-based layer.
  std::size_t group_of(std::size_t layer) const {
    if (!assignment.empty()) return assignment.at(layer - 1);
    for (std::size_t j = 0; j < segments.size(); ++j)
      if (layer >= segments[j].begin && layer <= segments[j].end) return j;
    throw UsageError("layer " + std::to_string(layer) + " outside partition");
  }

  /// Group of every layer 1..n, as a vector indexed by layer - 1.
  std::vector<std::size_t> groups() const {
    if (!assignment.empty()) return assignment;
    std::vector<std::size_t> g;
    for (std::size_t j = 0; j < segments.size(); ++j) g.insert(g.end(), segments[j].length(), j);
    return g;
  }

  static Partition from_schedule(std::span<const std::size_t> counts) {
    Partition p;
    std::size_t start = 1;
    for (std::size_t c : counts) {
      if (c == 0) throw UsageError("schedule entries must be >= 1");
      p.segments.push_back({start, start + c - 1});
      start += c;
    }
    return p;
  }
  static Partition from_schedule(std::initializer_list<std::size_t> counts) {
    std::vector<std::size_t> v(counts);
    return from_schedule(std::span<const std::size_t>(v));
  }

  /// Checks contiguity and coverage of layers 1..n.
  void validate(std::size_t n) const {
    if (segments.empty()) throw DataError("partition: no segments");
    if (segments.front().begin != 1) throw DataError("partition: first segment must start at 1");
    for (std::size_t j = 0; j < segments.size(); ++j) {
      if (segments[j].end < segments[j].begin) throw DataError("partition: empty segment");
      if (j + 1 < segments.size() && segments[j].end + 1 != segments[j + 1].begin)
        throw DataError("partition: segments are not contiguous");
    }
    if (segments.back().end != n)
      throw DataError("partition covers " + std::to_string(segments.back().end) +
                      " layers, expected " + std::to_string(n));
    if (!assignment.empty()) {
      if (assignment.size() != n) throw DataError("partition: assignment length mismatch");
      std::vector<std::size_t> sizes(segments.size(), 0);
      for (std::size_t g : assignment) {
        if (g >= sizes.size()) throw DataError("partition: assignment group out of range");
        ++sizes[g];
      }
      if (sizes != schedule()) throw DataError("partition: assignment sizes disagree with segments");
    }
  }

  /// Structural equality; the score is ignored.
  bool same_layout(const Partition& o) const {
    return segments == o.segments && groups() == o.groups();
  }

  friend bool operator==(const Partition&, const Partition&) = default;
};

inline void to_json(nlohmann::json& j, const Partition& p) {
  j = nlohmann::json::object();
  j["k"] = p.k();
  auto segs = nlohmann::json::array();
  for (const auto& s : p.segments) segs.push_back({s.begin, s.end});
  j["segments"] = segs;
  j["score"] = p.score;
  if (!p.assignment.empty()) {
    auto a = nlohmann::json::array();
    for (std::size_t g : p.assignment) a.push_back(g);
    j["assignment"] = a;
  }
}

inline void from_json(const nlohmann::json& j, Partition& p) {
  p = Partition{};
  for (const auto& s : j.at("segments")) {
    p.segments.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
  }
  if (j.contains("k") && j.at("k").get<std::size_t>() != p.segments.size())
    throw DataError("partition JSON: k disagrees with segment count");
  p.score = j.value("score", 0.0);
  if (j.contains("assignment")) p.assignment = j.at("assignment").get<std::vector<std::size_t>>();
  p.validate(p.n());
}

}  // namespace depthflow
