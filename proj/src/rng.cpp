#include "efc/rng.hpp"

namespace efc {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngSeed RngSeed::substream(std::uint64_t id) const noexcept {
  return RngSeed{seed, splitmix64(stream_id ^ splitmix64(id + 0x632be59bd9b4e019ULL))};
}

Engine make_engine(const RngSeed& rng) {
  std::seed_seq seq{static_cast<std::uint32_t>(rng.seed), static_cast<std::uint32_t>(rng.seed >> 32),
                    static_cast<std::uint32_t>(rng.stream_id),
                    static_cast<std::uint32_t>(rng.stream_id >> 32)};
  return Engine(seq);
}

}  // namespace efc
