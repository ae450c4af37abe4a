#pragma once

#include <cstdint>
#include <random>

namespace setid {

// Purpose tags for random substreams. A stream is addressed by
// (seed, purpose, index, attempt) so that any single draw can be regenerated
// without replaying the others.
enum class Stream : std::uint64_t {
  Data = 1,
  Folds = 2,
  Bootstrap = 3,
  Replication = 4,
  Jitter = 5,
};

using Engine = std::mt19937_64;

std::uint64_t derive_seed(std::uint64_t seed, Stream purpose, std::uint64_t index = 0,
                          std::uint64_t attempt = 0);

Engine make_engine(std::uint64_t seed, Stream purpose, std::uint64_t index = 0,
                   std::uint64_t attempt = 0);

}  // namespace setid
