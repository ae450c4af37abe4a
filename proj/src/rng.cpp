#include "setid/rng.hpp"

namespace setid {

std::uint64_t derive_seed(std::uint64_t seed, Stream purpose, std::uint64_t index,
                          std::uint64_t attempt) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed),  hi(seed),  static_cast<std::uint32_t>(purpose),
                    lo(index), hi(index), lo(attempt), hi(attempt)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

Engine make_engine(std::uint64_t seed, Stream purpose, std::uint64_t index, std::uint64_t attempt) {
  return Engine(derive_seed(seed, purpose, index, attempt));
}

}  // namespace setid
