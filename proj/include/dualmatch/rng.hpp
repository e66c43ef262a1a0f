#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace dualmatch {

/// Mixes a seed with a path of stream identifiers into a 64-bit key.
/// Equal paths give equal keys; the order of the path matters.
std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

/// A named random stream. Every consumer of randomness (weight init of one
/// block, dropout of one step, one synthetic record, one shuffle) owns a
/// stream addressed by (seed, path), so results do not depend on the order in
/// which other streams are consumed.
class Stream {
 public:
  Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);
  explicit Stream(std::uint64_t key) : engine_(key) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dualmatch
