#pragma once

#include <cstdint>
#include <string>

namespace cachelab {

using Addr = std::uint64_t;

// Cache lines are 64 bytes everywhere in this model.
inline constexpr unsigned kOffsetBits = 6;
inline constexpr unsigned kLineSize = 1u << kOffsetBits;

// Geometry of one cache level. `sets` is per slice; single-sliced levels use
// slices = 1. Both sets and slices must be powers of two.
struct CacheGeometry {
  unsigned sets = 0;
  unsigned ways = 0;
  unsigned slices = 1;
  unsigned latency = 0;

  unsigned set_bits() const;
  unsigned slice_bits() const;
  unsigned total_sets() const { return sets * slices; }
  unsigned lines() const { return sets * slices * ways; }
};

// One address split into the fields a given geometry cares about.
struct CacheAddress {
  Addr raw = 0;
  unsigned offset = 0;
  unsigned set_index = 0;
  unsigned slice = 0;
  Addr tag = 0;

  bool operator==(const CacheAddress&) const = default;
};

// Slice id for a tag: XOR-fold of the tag taken slice_bits at a time.
unsigned slice_hash(Addr tag, unsigned slices);

CacheAddress decompose(Addr raw, const CacheGeometry& g);
Addr recompose(const CacheAddress& a, const CacheGeometry& g);

// Builds the raw address of the `ordinal`-th distinct line that maps to the
// given (slice, set) of geometry g. Ordinals 0,1,2,... give distinct tags.
Addr make_line_addr(const CacheGeometry& g, unsigned slice, unsigned set,
                    std::uint64_t ordinal);

std::string format_addr(Addr a);

unsigned log2_exact(unsigned v);
bool is_pow2(unsigned v);

}  // namespace cachelab
