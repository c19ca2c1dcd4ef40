#include "cachelab/address.hpp"

#include <cassert>
#include <cstdio>

namespace cachelab {

bool is_pow2(unsigned v) { return v != 0 && (v & (v - 1)) == 0; }

unsigned log2_exact(unsigned v) {
  assert(is_pow2(v));
  unsigned b = 0;
  while ((1u << b) < v) ++b;
  return b;
}

unsigned CacheGeometry::set_bits() const { return log2_exact(sets); }
unsigned CacheGeometry::slice_bits() const {
  return slices > 1 ? log2_exact(slices) : 0;
}

unsigned slice_hash(Addr tag, unsigned slices) {
  if (slices <= 1) return 0;
  unsigned bits = log2_exact(slices);
  Addr mask = (Addr{1} << bits) - 1;
  Addr h = 0;
  while (tag != 0) {
    h ^= tag & mask;
    tag >>= bits;
  }
  return static_cast<unsigned>(h);
}

CacheAddress decompose(Addr raw, const CacheGeometry& g) {
  CacheAddress a;
  a.raw = raw;
  a.offset = static_cast<unsigned>(raw & (kLineSize - 1));
  a.set_index = static_cast<unsigned>((raw >> kOffsetBits) & (g.sets - 1));
  a.tag = raw >> (kOffsetBits + g.set_bits());
  a.slice = slice_hash(a.tag, g.slices);
  return a;
}

Addr recompose(const CacheAddress& a, const CacheGeometry& g) {
  return (a.tag << (kOffsetBits + g.set_bits())) |
         (Addr{a.set_index} << kOffsetBits) | a.offset;
}

Addr make_line_addr(const CacheGeometry& g, unsigned slice, unsigned set,
                    std::uint64_t ordinal) {
  assert(slice < g.slices && set < g.sets);
  unsigned k = g.slice_bits();
  // Tag layout: high part encodes the ordinal, low k bits are chosen so the
  // XOR-fold of the whole tag equals the requested slice.
  Addr high = (ordinal + 1) << k;
  Addr low = (slice_hash(high, g.slices) ^ slice) & ((Addr{1} << k) - 1);
  Addr tag = high | low;
  if (k == 0) tag = ordinal + 1;
  return (tag << (kOffsetBits + g.set_bits())) | (Addr{set} << kOffsetBits);
}

std::string format_addr(Addr a) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(a));
  return buf;
}

}  // namespace cachelab
