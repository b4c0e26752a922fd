#pragma once

#include <cstdint>
#include <random>

namespace efc {

/// Seed plus substream id. Draws depend only on the pair, never on which
/// thread consumes them.
struct RngSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  /// Child stream derived from this one; distinct ids give unrelated streams.
  RngSeed substream(std::uint64_t id) const noexcept;
};

using Engine = std::mt19937_64;

Engine make_engine(const RngSeed& rng);

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace efc
