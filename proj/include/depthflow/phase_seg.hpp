#pragma once

// Layer-layer cosine similarity and contiguous phase discovery.
//
// Phases are found by maximising sum_t g(b_t, e_t) over contiguous
// k-partitions of the layers, where g is the mean similarity of the segment's
// diagonal block. Block sums come from a 2-D summed-area table so each g is
// O(1) and the dynamic program is O(k n^2).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "depthflow/error.hpp"
#include "depthflow/linalg.hpp"
#include "depthflow/partition.hpp"
#include "depthflow/rng.hpp"
#include "depthflow/trajectory.hpp"

namespace depthflow {

using SimilarityMatrix = la::Matrix;

/// Mean cosine between each token's states at every pair of layers,
/// averaged over samples and the selected tokens, then symmetrised.
/// The result covers all stored layers 0..L.
inline SimilarityMatrix similarity_matrix(const Trajectory& t,
                                          const std::optional<RoleSet>& token_filter = {}) {
  const auto tokens = token_filter ? t.tokens_with(*token_filter) : t.tokens_with(t.present_roles());
  if (tokens.empty()) throw UsageError("similarity_matrix: token filter selects no tokens");
  const std::size_t n = t.n_layers();
  const std::size_t d = t.dim();
  SimilarityMatrix s(n, n);
  std::vector<double> unit(n * d);
  for (std::size_t smp = 0; smp < t.n_samples(); ++smp) {
    for (std::size_t tok : tokens) {
      for (std::size_t l = 0; l < n; ++l) {
        const auto x = t.state(smp, l, tok);
        const double nx = la::norm2(x);
        if (nx == 0.0) {
          throw DataError("similarity_matrix: zero-norm state at sample " + std::to_string(smp) +
                          ", layer " + std::to_string(l) + ", token " + std::to_string(tok));
        }
        for (std::size_t i = 0; i < d; ++i) unit[l * d + i] = x[i] / nx;
      }
      for (std::size_t l = 0; l < n; ++l) {
        for (std::size_t m = l; m < n; ++m) {
          double c = 0.0;
          for (std::size_t i = 0; i < d; ++i) c += unit[l * d + i] * unit[m * d + i];
          s(l, m) += c;
        }
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(t.n_samples() * tokens.size());
  for (std::size_t l = 0; l < n; ++l) {
    for (std::size_t m = l; m < n; ++m) {
      const double v = s(l, m) * inv;
      s(l, m) = v;
      s(m, l) = v;
    }
  }
  return s;
}

/// Drops the first `count` layers (by default the embedding layer) so that
/// the remaining rows are layers count..L, indexed 1.. by the segmenter.
inline SimilarityMatrix drop_leading_layers(const SimilarityMatrix& s, std::size_t count = 1) {
  if (count > s.rows()) throw UsageError("drop_leading_layers: count exceeds size");
  const std::size_t n = s.rows() - count;
  SimilarityMatrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = s(i + count, j + count);
  return out;
}

/// Summed-area table of a square matrix plus a 1-D prefix of its diagonal.
class PrefixTable {
 public:
  explicit PrefixTable(const la::Matrix& s) : n_(s.rows()), table_(n_ + 1, n_ + 1), diag_(n_ + 1, 0.0) {
    if (s.rows() != s.cols()) throw UsageError("PrefixTable: matrix must be square");
    for (std::size_t r = 0; r < n_; ++r) {
      for (std::size_t c = 0; c < n_; ++c) {
        table_(r + 1, c + 1) = s(r, c) + table_(r, c + 1) + table_(r + 1, c) - table_(r, c);
      }
      diag_[r + 1] = diag_[r] + s(r, r);
    }
  }

  std::size_t n() const noexcept { return n_; }
  const la::Matrix& table() const noexcept { return table_; }
  const std::vector<double>& diag_prefix() const noexcept { return diag_; }

  /// Sum of the block rows/cols i..j, 1-based inclusive.
  double sum(std::size_t i, std::size_t j) const {
    check(i, j);
    return table_(j, j) - table_(i - 1, j) - table_(j, i - 1) + table_(i - 1, i - 1);
  }
  double diag_sum(std::size_t i, std::size_t j) const {
    check(i, j);
    return diag_[j] - diag_[i - 1];
  }
  double offdiag(std::size_t i, std::size_t j) const { return sum(i, j) - diag_sum(i, j); }

 private:
  void check(std::size_t i, std::size_t j) const {
    if (i < 1 || i > j || j > n_) {
      throw UsageError("PrefixTable: invalid range [" + std::to_string(i) + ", " +
                       std::to_string(j) + "] for n = " + std::to_string(n_));
    }
  }

  std::size_t n_;
  la::Matrix table_;
  std::vector<double> diag_;
};

inline PrefixTable build_prefix(const la::Matrix& s) { return PrefixTable(s); }

enum class SegmentScore {
  mean,          ///< sum(i,j) / n^2
  offdiag_mean,  ///< offdiag(i,j) / (n (n - 1)); 0 for singletons
};

inline double segment_score(const PrefixTable& p, std::size_t i, std::size_t j,
                            SegmentScore kind = SegmentScore::mean) {
  const double len = static_cast<double>(j - i + 1);
  if (kind == SegmentScore::mean) return p.sum(i, j) / (len * len);
  if (j == i) {
    p.sum(i, j);  // range check
    return 0.0;
  }
  return p.offdiag(i, j) / (len * (len - 1.0));
}

inline void check_symmetric(const la::Matrix& s) {
  if (s.rows() != s.cols()) throw UsageError("similarity matrix must be square");
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = i + 1; j < s.cols(); ++j) {
      if (std::abs(s(i, j) - s(j, i)) > 1e-12)
        throw DataError("similarity matrix is not symmetric");
    }
  }
  if (!s.all_finite()) throw DataError("similarity matrix has non-finite entries");
}

/// Optimal contiguous k-partition with segment lengths >= min_len. Ties are
/// broken towards the lexicographically smallest vector of segment ends.
inline Partition maxcut_segment(const la::Matrix& s, std::size_t k, std::size_t min_len = 1,
                                SegmentScore kind = SegmentScore::mean) {
  check_symmetric(s);
  const std::size_t n = s.rows();
  if (k < 1) throw UsageError("maxcut_segment: k must be >= 1");
  if (min_len < 1) throw UsageError("maxcut_segment: min_len must be >= 1");
  if (k * min_len > n) {
    throw UsageError("maxcut_segment: infeasible, k * min_len = " + std::to_string(k * min_len) +
                     " exceeds n = " + std::to_string(n));
  }
  const PrefixTable prefix(s);
  constexpr double kNeg = -std::numeric_limits<double>::infinity();

  // best[t][i]: best score for layers i..n split into t segments. Solving on
  // suffixes lets the forward reconstruction pick the smallest end first.
  std::vector<std::vector<double>> best(k + 1, std::vector<double>(n + 2, kNeg));
  best[0][n + 1] = 0.0;
  for (std::size_t t = 1; t <= k; ++t) {
    for (std::size_t i = n + 1; i-- > 1;) {
      const std::size_t remaining = n - i + 1;
      if (remaining < t * min_len) continue;
      const std::size_t last_end = n - (t - 1) * min_len;
      double v = kNeg;
      for (std::size_t e = i + min_len - 1; e <= last_end; ++e) {
        const double rest = best[t - 1][e + 1];
        if (rest == kNeg) continue;
        v = std::max(v, segment_score(prefix, i, e, kind) + rest);
      }
      best[t][i] = v;
    }
  }

  Partition out;
  std::size_t start = 1;
  for (std::size_t t = k; t >= 1; --t) {
    const std::size_t last_end = n - (t - 1) * min_len;
    std::size_t chosen = 0;
    for (std::size_t e = start + min_len - 1; e <= last_end; ++e) {
      const double rest = best[t - 1][e + 1];
      if (rest == kNeg) continue;
      if (segment_score(prefix, start, e, kind) + rest == best[t][start]) {
        chosen = e;
        break;
      }
    }
    if (chosen == 0) throw NumericalError("maxcut_segment: backtracking failed");
    out.segments.push_back({start, chosen});
    start = chosen + 1;
  }
  out.score = best[k][1];
  return out;
}

/// Objective of an arbitrary (possibly non-contiguous) partition: sum over
/// groups of the chosen score on each group's index set.
inline double partition_score(const la::Matrix& s, const Partition& p,
                              SegmentScore kind = SegmentScore::mean) {
  const auto groups = p.groups();
  if (groups.size() != s.rows()) throw UsageError("partition_score: size mismatch");
  std::vector<double> sums(p.k(), 0.0), diag(p.k(), 0.0);
  std::vector<double> counts(p.k(), 0.0);
  for (std::size_t a = 0; a < groups.size(); ++a) {
    counts[groups[a]] += 1.0;
    diag[groups[a]] += s(a, a);
    for (std::size_t b = 0; b < groups.size(); ++b)
      if (groups[a] == groups[b]) sums[groups[a]] += s(a, b);
  }
  double total = 0.0;
  for (std::size_t g = 0; g < p.k(); ++g) {
    const double c = counts[g];
    if (kind == SegmentScore::mean) {
      total += sums[g] / (c * c);
    } else if (c > 1) {
      total += (sums[g] - diag[g]) / (c * (c - 1.0));
    }
  }
  return total;
}

namespace detail {

// k - 1 distinct sorted cut positions from {1, .., n - 1}, uniformly.
inline std::vector<std::size_t> random_cuts(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n - 1);
  std::iota(pool.begin(), pool.end(), 1);
  for (std::size_t i = 0; i + 1 < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k - 1);
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline std::vector<std::size_t> cuts_to_sizes(const std::vector<std::size_t>& cuts, std::size_t n) {
  std::vector<std::size_t> sizes;
  std::size_t prev = 0;
  for (std::size_t c : cuts) {
    sizes.push_back(c - prev);
    prev = c;
  }
  sizes.push_back(n - prev);
  return sizes;
}

}  // namespace detail

/// Random baseline partitions of n layers into k groups.
///
/// Contiguous mode samples uniformly among the C(n-1, k-1) contiguous
/// partitions. Shuffled mode permutes the layers, cuts the permutation into
/// k non-empty ordered groups and records the assignment. Draws equal to
/// `exclude` are rejected; if no other partition exists fewer than `count`
/// partitions are returned.
inline std::vector<Partition> random_partitions(std::size_t n, std::size_t k, bool contiguous,
                                                std::size_t count, std::uint64_t seed,
                                                const Partition* exclude = nullptr) {
  if (k < 1 || k > n) throw UsageError("random_partitions: need 1 <= k <= n");
  Rng rng(seed);
  std::vector<Partition> out;
  const std::size_t max_attempts = 1000 * (count + 1);
  for (std::size_t attempt = 0; attempt < max_attempts && out.size() < count; ++attempt) {
    const auto sizes = detail::cuts_to_sizes(detail::random_cuts(n, k, rng), n);
    Partition p = Partition::from_schedule(std::span<const std::size_t>(sizes));
    if (!contiguous) {
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      p.assignment.assign(n, 0);
      std::size_t pos = 0;
      for (std::size_t g = 0; g < k; ++g)
        for (std::size_t c = 0; c < sizes[g]; ++c) p.assignment[perm[pos++]] = g;
    }
    if (exclude != nullptr && p.same_layout(*exclude)) continue;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace depthflow
