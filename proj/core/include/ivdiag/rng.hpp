#pragma once

#include <cstdint>
#include <functional>
#include <random>

namespace ivdiag {

// Replicated computations draw from independent streams keyed by
// (seed, stream, index) so results do not depend on scheduling.  The key is
// mixed through splitmix64 before seeding the engine; sequential seeds would
// otherwise produce correlated mt19937 states.
std::uint64_t mix64(std::uint64_t x);
std::mt19937_64 replicate_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

// Fixed stream tags, one per replicated computation.
namespace streams {
inline constexpr std::uint64_t kOlsBootstrap = 0x01;
inline constexpr std::uint64_t kTslsBootstrap = 0x02;
inline constexpr std::uint64_t kFirstStageBootstrap = 0x03;
inline constexpr std::uint64_t kInference = 0x04;
inline constexpr std::uint64_t kSimulation = 0x05;
}  // namespace streams

// Runs fn(0..count-1) across `threads` workers with a static stride schedule.
// Each index writes only its own output slot, so the result set is identical
// for every thread count.
void parallel_for(std::int64_t count, int threads, const std::function<void(std::int64_t)>& fn);

}  // namespace ivdiag
