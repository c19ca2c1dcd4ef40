#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "cachelab/address.hpp"
#include "cachelab/policy.hpp"
#include "cachelab/profile.hpp"

namespace cachelab {

enum class Level { L1, L2, LLC, Memory };

const char* to_string(Level l);

// Snapshot of one way as seen by inspect_set.
struct LineState {
  Addr addr = 0;
  Addr tag = 0;
  bool valid = false;
  int control = -1; // policy control value, -1 when invalid
};

struct AccessOutcome {
  Level served_by = Level::L1;
  unsigned latency = 0;
  bool llc_evicted = false;       // a valid victim left the LLC
  Addr evicted_addr = 0;
  std::vector<unsigned> back_invalidated; // cores whose private copies dropped
  bool needs_fill = false;        // issue_access classified a memory miss but
                                  // did not install; apply_fill finishes it
  bool merged = false;            // scheduler joined an in-flight fill
};

// Inclusive three-level hierarchy: per-core L1 and L2 in front of a shared,
// possibly sliced LLC. Lines are clean; private-level evictions drop silently,
// LLC evictions invalidate every private copy.
class CacheHierarchy {
 public:
  CacheHierarchy(const MachineProfile& profile, std::uint64_t seed);

  // Full access: lookup plus all state effects, in one step. Equivalent to
  // issue_access followed immediately by apply_fill when one is needed.
  AccessOutcome access(unsigned core, Addr addr);

  // Lookup with effects applied only for hits; a memory miss changes nothing
  // and reports needs_fill so the caller can schedule the install.
  AccessOutcome issue_access(unsigned core, Addr addr);

  // Installs the line a previous issue_access missed on: victim selection,
  // back-invalidation and private-level fills happen here.
  AccessOutcome apply_fill(unsigned core, Addr addr);

  // Fills only the core's private levels; used when a read joined a fill
  // already in flight and the LLC install is credited to the first requester.
  void install_private(unsigned core, Addr addr);

  // Completion of a merged read: private fill plus the LLC hit promotion the
  // requester's access would have applied had the line already been resident.
  void merged_install(unsigned core, Addr addr);

  // Invalidates the line everywhere. No replacement-state updates beyond the
  // invalidation itself. Returns the configured flush latency.
  unsigned flush(Addr addr);

  bool present(Level level, unsigned core, Addr addr) const;
  std::vector<LineState> inspect_set(Level level, unsigned core, unsigned slice,
                                     unsigned set) const;

  // Address the LLC would evict next in this set, if the set is full.
  std::optional<Addr> llc_candidate_addr(unsigned slice, unsigned set) const;

  ReplacementPolicy& llc_policy() { return *llc_.policy; }
  const ReplacementPolicy& llc_policy() const { return *llc_.policy; }
  DuelingState* dueling() { return llc_.policy->dueling(); }

  const MachineProfile& profile() const { return profile_; }

  std::uint64_t state_digest() const;
  // Structural checks: inclusivity, unique tags per set, policy/array validity
  // agreement. Throws std::logic_error on violation.
  void check_invariants() const;

 private:
  struct Cache {
    CacheGeometry geom;
    std::unique_ptr<ReplacementPolicy> policy;
    std::vector<Addr> addr;          // per line, flat_set*ways+way
    std::vector<std::uint8_t> valid; // per line

    unsigned flat_set(const CacheAddress& a) const {
      return a.slice * geom.sets + a.set_index;
    }
    int find(const CacheAddress& a) const; // way or -1
  };

  Cache make_cache(const CacheGeometry& g, const std::string& policy_name,
                   std::uint64_t seed) const;
  void private_fill(Cache& c, const CacheAddress& a);
  void drop_private(unsigned core, Addr addr);
  AccessOutcome lookup_only(unsigned core, Addr addr) const;

  MachineProfile profile_;
  std::vector<Cache> l1_; // one per core
  std::vector<Cache> l2_;
  Cache llc_;
};

}  // namespace cachelab
