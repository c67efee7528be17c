#pragma once

// Activation trajectories and the ATRJ v1 binary file format.
//
// ATRJ v1 layout (all integers and floats little-endian):
//   offset 0   4 bytes  magic "ATRJ"
//   offset 4   u32      version (1)
//   offset 8   u32      n_samples
//   offset 12  u32      n_layers   (L + 1; layer 0 is the embedding)
//   offset 16  u32      n_tokens
//   offset 20  u32      dim
//   offset 24  u8       dtype (0 = f32, 1 = f64)
//   offset 25  u8[n_tokens] role table (0 cls, 1 register, 2 patch)
//   then       payload, index order [sample][layer][token][dim]

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "depthflow/error.hpp"

namespace depthflow {

enum class TokenRole : std::uint8_t { cls = 0, reg = 1, patch = 2 };

inline constexpr std::array<TokenRole, 3> kAllRoles = {TokenRole::cls, TokenRole::reg,
                                                       TokenRole::patch};

inline std::string_view role_name(TokenRole r) {
  switch (r) {
    case TokenRole::cls: return "cls";
    case TokenRole::reg: return "register";
    case TokenRole::patch: return "patch";
  }
  return "?";
}

inline TokenRole parse_role(std::string_view s) {
  if (s == "cls") return TokenRole::cls;
  if (s == "register" || s == "reg") return TokenRole::reg;
  if (s == "patch") return TokenRole::patch;
  throw UsageError("unknown token role '" + std::string(s) + "'");
}

using RoleSet = std::set<TokenRole>;

/// Per-sample activation states for layers 0..L.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::size_t n_samples, std::size_t n_layers, std::vector<TokenRole> roles,
             std::size_t dim)
      : n_samples_(n_samples),
        n_layers_(n_layers),
        dim_(dim),
        roles_(std::move(roles)),
        data_(n_samples * n_layers * roles_.size() * dim, 0.0) {}

  std::size_t n_samples() const noexcept { return n_samples_; }
  std::size_t n_layers() const noexcept { return n_layers_; }
  /// Index of the final layer, L.
  std::size_t depth() const noexcept { return n_layers_ - 1; }
  std::size_t n_tokens() const noexcept { return roles_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<TokenRole>& roles() const noexcept { return roles_; }
  TokenRole role(std::size_t token) const { return roles_[token]; }

  std::span<double> state(std::size_t sample, std::size_t layer, std::size_t token) {
    return {data_.data() + offset(sample, layer, token), dim_};
  }
  std::span<const double> state(std::size_t sample, std::size_t layer,
                                std::size_t token) const {
    return {data_.data() + offset(sample, layer, token), dim_};
  }

  /// All tokens of one layer for one sample, token-major.
  std::span<double> layer(std::size_t sample, std::size_t layer) {
    return {data_.data() + offset(sample, layer, 0), n_tokens() * dim_};
  }
  std::span<const double> layer(std::size_t sample, std::size_t layer) const {
    return {data_.data() + offset(sample, layer, 0), n_tokens() * dim_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::vector<std::size_t> tokens_with(const RoleSet& roles) const {
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < roles_.size(); ++t)
      if (roles.contains(roles_[t])) out.push_back(t);
    return out;
  }
  std::vector<std::size_t> tokens_with(TokenRole role) const {
    return tokens_with(RoleSet{role});
  }
  RoleSet present_roles() const { return RoleSet(roles_.begin(), roles_.end()); }

  /// Throws DataError when an invariant does not hold.
  void validate() const {
    if (n_samples_ < 1) throw DataError("trajectory: n_samples must be >= 1");
    if (n_layers_ < 2) throw DataError("trajectory: n_layers must be >= 2");
    if (dim_ < 1) throw DataError("trajectory: dim must be >= 1");
    if (std::count(roles_.begin(), roles_.end(), TokenRole::cls) != 1)
      throw DataError("trajectory: exactly one cls token is required");
    if (data_.size() != n_samples_ * n_layers_ * roles_.size() * dim_)
      throw DataError("trajectory: payload size mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i]))
        throw DataError("trajectory: non-finite value at flat index " + std::to_string(i));
    }
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

 private:
  std::size_t offset(std::size_t s, std::size_t l, std::size_t t) const {
    return ((s * n_layers_ + l) * roles_.size() + t) * dim_;
  }

  std::size_t n_samples_ = 0;
  std::size_t n_layers_ = 0;
  std::size_t dim_ = 0;
  std::vector<TokenRole> roles_;
  std::vector<double> data_;
};

/// Roles for one cls token followed by `registers` and `patches` tokens.
inline std::vector<TokenRole> make_roles(std::size_t registers, std::size_t patches) {
  std::vector<TokenRole> r{TokenRole::cls};
  r.insert(r.end(), registers, TokenRole::reg);
  r.insert(r.end(), patches, TokenRole::patch);
  return r;
}

// ---------------------------------------------------------------------------
// ATRJ I/O

enum class AtrjErrc {
  open_failed,
  write_failed,
  bad_magic,
  bad_version,
  bad_header,
  truncated,
  non_finite,
};

inline std::string_view atrj_errc_name(AtrjErrc e) {
  switch (e) {
    case AtrjErrc::open_failed: return "open_failed";
    case AtrjErrc::write_failed: return "write_failed";
    case AtrjErrc::bad_magic: return "bad_magic";
    case AtrjErrc::bad_version: return "bad_version";
    case AtrjErrc::bad_header: return "bad_header";
    case AtrjErrc::truncated: return "truncated";
    case AtrjErrc::non_finite: return "non_finite";
  }
  return "?";
}

class AtrjError : public DataError {
 public:
  AtrjError(AtrjErrc code, const std::string& path, const std::string& detail)
      : DataError(path + ": " + std::string(atrj_errc_name(code)) + ": " + detail),
        code_(code) {}
  AtrjErrc code() const noexcept { return code_; }

 private:
  AtrjErrc code_;
};

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

inline constexpr std::uint32_t kAtrjVersion = 1;
inline constexpr std::size_t kAtrjFixedHeader = 25;

namespace detail {

template <class U>
void put_le(std::vector<unsigned char>& out, U v) {
  const std::size_t at = out.size();
  out.resize(at + sizeof(U));
  for (std::size_t i = 0; i < sizeof(U); ++i) out[at + i] = static_cast<unsigned char>(v >> (8 * i));
}
inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) { put_le(out, v); }
inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) { put_le(out, v); }
inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}
inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::vector<unsigned char> encode_atrj(const Trajectory& t, Dtype dtype = Dtype::f64) {
  if (t.n_samples() < 1) throw UsageError("write_trajectory: n_samples must be >= 1");
  t.validate();
  std::vector<unsigned char> out;
  const std::size_t width = dtype == Dtype::f64 ? 8 : 4;
  out.reserve(kAtrjFixedHeader + t.n_tokens() + t.data().size() * width);
  for (char c : {'A', 'T', 'R', 'J'}) detail::put_le(out, static_cast<unsigned char>(c));
  detail::put_u32(out, kAtrjVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(t.n_samples()));
  detail::put_u32(out, static_cast<std::uint32_t>(t.n_layers()));
  detail::put_u32(out, static_cast<std::uint32_t>(t.n_tokens()));
  detail::put_u32(out, static_cast<std::uint32_t>(t.dim()));
  detail::put_le(out, static_cast<unsigned char>(dtype));
  for (TokenRole r : t.roles()) detail::put_le(out, static_cast<unsigned char>(r));
  for (double x : t.data()) {
    if (dtype == Dtype::f64) {
      detail::put_u64(out, std::bit_cast<std::uint64_t>(x));
    } else {
      detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
  }
  return out;
}

inline Trajectory decode_atrj(std::span<const unsigned char> bytes,
                              const std::string& path = "<memory>") {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ATRJ", 4) != 0)
    throw AtrjError(AtrjErrc::bad_magic, path, "missing ATRJ magic");
  if (bytes.size() < kAtrjFixedHeader)
    throw AtrjError(AtrjErrc::truncated, path, "header shorter than 25 bytes");
  const unsigned char* p = bytes.data();
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != kAtrjVersion)
    throw AtrjError(AtrjErrc::bad_version, path, "version " + std::to_string(version));
  const std::size_t ns = detail::get_u32(p + 8);
  const std::size_t nl = detail::get_u32(p + 12);
  const std::size_t nt = detail::get_u32(p + 16);
  const std::size_t dim = detail::get_u32(p + 20);
  const std::uint8_t dt = p[24];
  if (dt > 1) throw AtrjError(AtrjErrc::bad_header, path, "unknown dtype " + std::to_string(dt));
  if (ns < 1 || nl < 2 || nt < 1 || dim < 1)
    throw AtrjError(AtrjErrc::bad_header, path, "invalid dimensions");
  if (bytes.size() < kAtrjFixedHeader + nt)
    throw AtrjError(AtrjErrc::truncated, path, "role table truncated");
  std::vector<TokenRole> roles(nt);
  for (std::size_t i = 0; i < nt; ++i) {
    const auto r = p[kAtrjFixedHeader + i];
    if (r > 2) throw AtrjError(AtrjErrc::bad_header, path, "invalid role code");
    roles[i] = static_cast<TokenRole>(r);
  }
  if (std::count(roles.begin(), roles.end(), TokenRole::cls) != 1)
    throw AtrjError(AtrjErrc::bad_header, path, "role table needs exactly one cls token");
  const std::size_t width = dt == 1 ? 8 : 4;
  const std::size_t count = ns * nl * nt * dim;
  const std::size_t start = kAtrjFixedHeader + nt;
  if (bytes.size() - start < count * width)
    throw AtrjError(AtrjErrc::truncated, path,
                    "payload has " + std::to_string(bytes.size() - start) + " bytes, expected " +
                        std::to_string(count * width));
  if (bytes.size() - start > count * width)
    throw AtrjError(AtrjErrc::bad_header, path, "trailing bytes after payload");
  Trajectory t(ns, nl, std::move(roles), dim);
  auto data = t.data();
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* q = p + start + i * width;
    const double x = width == 8 ? std::bit_cast<double>(detail::get_u64(q))
                                : static_cast<double>(std::bit_cast<float>(detail::get_u32(q)));
    if (!std::isfinite(x))
      throw AtrjError(AtrjErrc::non_finite, path,
                      "non-finite value at flat index " + std::to_string(i));
    data[i] = x;
  }
  return t;
}

inline void write_bytes(const std::string& path, std::span<const unsigned char> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw AtrjError(AtrjErrc::open_failed, path, "cannot open for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw AtrjError(AtrjErrc::write_failed, path, "write failed");
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw AtrjError(AtrjErrc::open_failed, path, "cannot open for reading");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_trajectory(const Trajectory& t, const std::string& path,
                             Dtype dtype = Dtype::f64) {
  write_bytes(path, encode_atrj(t, dtype));
}

inline Trajectory read_trajectory(const std::string& path) {
  return decode_atrj(read_bytes(path), path);
}

}  // namespace depthflow
