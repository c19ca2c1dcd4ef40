#pragma once

#include <cstdint>

namespace cachelab {

// splitmix64 step; the whole simulator draws randomness through this.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Counter-based generator: draw i of stream (seed, stream_id) is a pure
// function of (seed, stream_id, i). Two instances constructed with the same
// parameters produce identical sequences regardless of construction time,
// which is what lets a shadow model replay another component's draws.
class CounterRng {
 public:
  CounterRng() : CounterRng(0, 0) {}
  CounterRng(std::uint64_t seed, std::uint64_t stream_id)
      : base_(splitmix64(seed ^ splitmix64(stream_id ^ 0xa5a5a5a5a5a5a5a5ull))) {}

  std::uint64_t next() { return splitmix64(base_ + ++count_); }

  // Value the next call to next() would return, without consuming it.
  std::uint64_t peek() const { return splitmix64(base_ + count_ + 1); }

  std::uint64_t below(std::uint64_t m) { return next() % m; }
  std::uint64_t peek_below(std::uint64_t m) const { return peek() % m; }

  // Uniform in [0,1).
  double unit() { return (next() >> 11) * 0x1.0p-53; }

  std::uint64_t draws() const { return count_; }
  void reset() { count_ = 0; }

 private:
  std::uint64_t base_;
  std::uint64_t count_ = 0;
};

}  // namespace cachelab
