#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <string_view>
#include <utility>
#include <vector>

namespace spikeslab {
namespace rng {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_label(std::string_view label) noexcept
{
  // FNV-1a, then avalanche
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return splitmix64(h);
}

using Block = std::array<std::uint32_t, 4>;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept
{
  const std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(prod >> 32);
  lo = static_cast<std::uint32_t>(prod);
}

/// Philox4x32-10 (Salmon et al., SC'11). Pure function of (counter, key).
inline Block philox4x32(Block ctr, std::array<std::uint32_t, 2> key) noexcept
{
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(M0, ctr[0], hi0, lo0);
    mulhilo(M1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += W0;
    key[1] += W1;
  }
  return ctr;
}

/// Maps 53 random bits to the open interval (0, 1).
inline double to_open_unit(std::uint64_t bits) noexcept
{
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline std::pair<double, double> box_muller(double u1, double u2) noexcept
{
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

} // namespace detail

/// Path identifying a substream, e.g. {{"replica", 3}, {"iter", 17}}.
struct StreamKey
{
  std::vector<std::pair<std::string_view, std::uint64_t>> path;
};

/**
 * A counter-based random stream. A Stream is a value: copying it copies the
 * identity of the stream, not a position in it. Children are derived by
 * hashing (label, index) into the parent's identity, so the tree of streams
 * can be addressed from any thread without coordination.
 *
 * A stream is consumed either sequentially (through Engine) or by index
 * (uniform_at / gaussian_at); the two views share the same counter space,
 * so a given stream should only be used one way.
 */
class Stream
{
public:
  Stream() = default;
  explicit Stream(std::uint64_t seed) noexcept
    : key_(detail::splitmix64(seed ^ 0x5EED5EED5EED5EEDULL)),
      tag_(detail::splitmix64(key_ + 0x7A67ULL))
  {}

  [[nodiscard]] Stream child(std::string_view label, std::uint64_t index = 0) const noexcept
  {
    Stream s;
    const std::uint64_t h = detail::hash_label(label);
    s.key_ = detail::splitmix64(key_ ^ detail::splitmix64(h + index));
    s.tag_ = detail::splitmix64(tag_ ^ detail::splitmix64(s.key_ + ~index) ^ h);
    return s;
  }

  [[nodiscard]] detail::Block block(std::uint64_t position) const noexcept
  {
    const detail::Block ctr = {static_cast<std::uint32_t>(position),
                               static_cast<std::uint32_t>(position >> 32),
                               static_cast<std::uint32_t>(tag_),
                               static_cast<std::uint32_t>(tag_ >> 32)};
    return detail::philox4x32(ctr, {static_cast<std::uint32_t>(key_),
                                    static_cast<std::uint32_t>(key_ >> 32)});
  }

  /// Uniform on (0,1) attached to `index`; same index, same value.
  [[nodiscard]] double uniform_at(std::uint64_t index) const noexcept
  {
    const auto b = block(index);
    return detail::to_open_unit((static_cast<std::uint64_t>(b[1]) << 32) | b[0]);
  }

  /// Standard normal attached to `index`.
  [[nodiscard]] double gaussian_at(std::uint64_t index) const noexcept
  {
    const auto b = block(index);
    const double u1 = detail::to_open_unit((static_cast<std::uint64_t>(b[1]) << 32) | b[0]);
    const double u2 = detail::to_open_unit((static_cast<std::uint64_t>(b[3]) << 32) | b[2]);
    return detail::box_muller(u1, u2).first;
  }

  friend bool operator==(const Stream&, const Stream&) = default;

private:
  std::uint64_t key_ = 0;
  std::uint64_t tag_ = 0;
};

inline Stream substream(std::uint64_t master_seed, const StreamKey& key)
{
  Stream s(master_seed);
  for (const auto& [label, index] : key.path) s = s.child(label, index);
  return s;
}

/// Sequential view of a Stream. Models UniformRandomBitGenerator.
class Engine
{
public:
  using result_type = std::uint64_t;

  explicit Engine(Stream stream) noexcept : stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept
  {
    if (cursor_ == 2) {
      buffer_ = stream_.block(position_++);
      cursor_ = 0;
    }
    const std::size_t i = 2 * cursor_++;
    return (static_cast<std::uint64_t>(buffer_[i + 1]) << 32) | buffer_[i];
  }

  double uniform() noexcept { return detail::to_open_unit((*this)()); }

  double gaussian() noexcept
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const auto [z0, z1] = detail::box_muller(u1, u2);
    spare_ = z1;
    has_spare_ = true;
    return z0;
  }

  /// Unbiased integer in [0, bound) (Lemire's multiply-and-reject).
  std::uint64_t below(std::uint64_t bound) noexcept
  {
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double prob) noexcept { return uniform() < prob; }

  const Stream& stream() const noexcept { return stream_; }

private:
  Stream stream_;
  std::uint64_t position_ = 0;
  detail::Block buffer_{};
  std::size_t cursor_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

enum class DrawKind { uniform, gaussian };

inline std::vector<double> standard_draws(Engine& engine, DrawKind kind, std::size_t count)
{
  std::vector<double> out(count);
  for (auto& v : out) v = kind == DrawKind::uniform ? engine.uniform() : engine.gaussian();
  return out;
}

/// First `k` entries of a uniformly random permutation of {0,..,n-1}
/// (partial Fisher-Yates). Order is the draw order.
inline std::vector<std::size_t> sample_without_replacement(Engine& engine, std::size_t n, std::size_t k)
{
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(engine.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

} // namespace rng
} // namespace spikeslab
