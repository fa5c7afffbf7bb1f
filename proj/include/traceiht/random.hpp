#ifndef TRACEIHT_RANDOM_HPP
#define TRACEIHT_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace traceiht {

/// Counter-based generator: draw i of a stream keyed by `key` is
/// splitmix64(key + i * golden). Streams are split by hashing a child id into
/// the key, so independent replicates never share draws and every result is
/// reproducible from (seed, path) alone, on any platform.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed);

  /// Child stream for `id`; does not advance this stream.
  [[nodiscard]] RandomStream split(std::uint64_t id) const;

  /// Seed value that reconstructs split(id) via RandomStream(seed).
  [[nodiscard]] std::uint64_t child_seed(std::uint64_t id) const;

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal (ziggurat, Boost.Random).
  double normal();

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  [[nodiscard]] std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for the stream reached from `master` by splitting along `path`.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

}  // namespace traceiht

#endif  // TRACEIHT_RANDOM_HPP
