#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace motifrep {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent substream seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

/// Seed for substream `index` of `seed` (optionally a second index, e.g. an
/// attempt counter). Independent of thread assignment.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0) noexcept;

inline Rng make_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0) {
  return Rng(substream_seed(seed, index, salt));
}

/// Uniform integer in [0, n). n must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Uniform real in [0, 1).
double uniform_unit(Rng& rng);

/// Number of workers to use for `threads` (0 means hardware concurrency).
unsigned resolve_threads(unsigned threads) noexcept;

/// Runs body(i, worker) for i in [0, n) on up to `threads` workers. Work is
/// handed out dynamically; callers that need deterministic results write to
/// per-index slots and reduce in index order afterwards. The first exception
/// thrown by any body is rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t, unsigned)>& body);

}  // namespace motifrep
