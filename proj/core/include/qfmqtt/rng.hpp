#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace qfmqtt {

/// Philox4x32-10 counter-based generator.
///
/// The key is derived from the user seed and the stream id occupies the upper
/// half of the 128-bit counter, so `(seed, stream)` pairs give independent,
/// reproducible sequences regardless of the order in which streams are used.
/// Satisfies UniformRandomBitGenerator with 64-bit output.
class Philox {
public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t seed, std::uint64_t stream) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  /// Raw block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                            std::array<std::uint32_t, 2> key) noexcept;

private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
};

/// Hash an ordered list of ids into one stream id (splitmix64 chaining).
std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts) noexcept;

inline Philox make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  return Philox(seed, stream_id(parts));
}

}  // namespace qfmqtt
