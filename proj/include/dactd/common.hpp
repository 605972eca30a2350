#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace dactd {

/// Discrete simulation time. Negative ticks denote the zero-initialized past.
using Tick = std::int64_t;

/// Agents are indexed 0..N-1 inside the library. Text formats use 1..N.
using AgentId = int;

using Rng = std::mt19937_64;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error { using Error::Error; };
class ConfigurationError : public Error { using Error::Error; };
class TopologyError : public Error { using Error::Error; };
class TransportError : public Error { using Error::Error; };
class ProtocolCorruptionError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class ModelError : public Error { using Error::Error; };
class RankError : public Error { using Error::Error; };
class CapacityError : public Error { using Error::Error; };

/// Raised when a team TD error is requested before every slot is known.
class IncompleteAggregationError : public Error {
public:
  IncompleteAggregationError(const std::string& what, Tick tick)
      : Error(what), tick_(tick) {}
  Tick tick() const noexcept { return tick_; }

private:
  Tick tick_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for (base seed, stream label).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x51ed2701ULL));
}

/// Uniform double in [0, 1) with 53 random bits; identical on every platform.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [lo, hi] by rejection; identical on every platform.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(rng());
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return lo + static_cast<std::int64_t>(draw % span);
}

}  // namespace dactd
