#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cachelab/address.hpp"
#include "cachelab/profile.hpp"
#include "cachelab/rng.hpp"

namespace cachelab {

// Policy-selection duel between two insertion behaviors, decided by a
// saturating counter fed by misses on designated leader sets.
class DuelingState {
 public:
  DuelingState() = default;
  DuelingState(unsigned total_sets, unsigned psel_bits, unsigned psel_init);

  void set_leader(unsigned flat_set, unsigned role); // 1 = mode-1/srrip side, 2 = mode-2/brrip side
  unsigned role(unsigned flat_set) const { return role_.empty() ? 0 : role_[flat_set]; }

  // True when the set currently behaves as the mode-2 (deeper-insertion) side.
  bool mode2_for(unsigned flat_set) const;

  // Called on every miss in the set; bumps psel when the set is a leader.
  void on_miss(unsigned flat_set);

  unsigned psel() const { return psel_; }
  void set_psel(unsigned v); // white-box override for experiments
  unsigned psel_max() const { return max_; }
  unsigned midpoint() const { return mid_; }

 private:
  std::vector<std::uint8_t> role_;
  unsigned psel_ = 0, max_ = 0, mid_ = 0;
};

// Replacement state for every set of one cache level. Sets are addressed by
// their flat index slice*sets_per_slice + set_index. The level owns tag/valid
// state; the policy mirrors validity so victim selection can prefer empty
// ways, which every policy here does.
class ReplacementPolicy {
 public:
  ReplacementPolicy(std::string name, const CacheGeometry& g);
  virtual ~ReplacementPolicy() = default;

  const std::string& name() const { return name_; }
  unsigned ways() const { return ways_; }
  unsigned total_sets() const { return total_sets_; }

  void on_fill(unsigned flat_set, unsigned way);
  void on_hit(unsigned flat_set, unsigned way);
  virtual void on_miss(unsigned flat_set); // fires on every miss, filled or not
  void on_invalidate(unsigned flat_set, unsigned way);

  // Victim the next select_victim would return, with no side effects.
  unsigned peek_victim(unsigned flat_set) const;
  // Victim choice including any persistent side effects (aging, hand moves,
  // consumed random draws). An invalid way, leftmost first, wins outright.
  unsigned select_victim(unsigned flat_set);

  bool valid(unsigned flat_set, unsigned way) const {
    return valid_[flat_set * ways_ + way];
  }

  // Per-way policy control state; -1 for invalid ways. Meaning depends on the
  // policy: age for the RRIP family, recency rank for LRU, queue rank for
  // FIFO, reference bit for CLOCK/NRU, 0 for PLRU/random.
  int control_value(unsigned flat_set, unsigned way) const;
  virtual int max_control() const = 0;

  virtual void reset();
  std::uint64_t state_digest() const;

  // Debug hook: force a way's control value (used by replay fixtures).
  virtual bool set_control(unsigned, unsigned, int) { return false; }
  virtual DuelingState* dueling() { return nullptr; }
  const DuelingState* dueling() const {
    return const_cast<ReplacementPolicy*>(this)->dueling();
  }

 protected:
  virtual void fill(unsigned flat_set, unsigned way) = 0;
  virtual void hit(unsigned flat_set, unsigned way) = 0;
  virtual void invalidate(unsigned, unsigned) {}
  virtual unsigned pick_victim(unsigned flat_set) const = 0; // full set, no side effects
  virtual void commit_victim(unsigned, unsigned) {} // persistent effects
  virtual int control(unsigned flat_set, unsigned way) const = 0;
  virtual void digest_extra(std::uint64_t&) const {}

  int leftmost_invalid(unsigned flat_set) const;
  unsigned idx(unsigned flat_set, unsigned way) const {
    return flat_set * ways_ + way;
  }

  std::string name_;
  unsigned ways_ = 0;
  unsigned total_sets_ = 0;
  std::vector<std::uint8_t> valid_;
};

// Kinds covered by the shared RRIP-family implementation.
enum class RripKind { Srrip, Brrip, Drrip, QuadAgeM1, QuadAgeM2, QuadAgeDuel };

std::vector<std::string> policy_zoo();

// Factory. Throws ProfileError for unknown names or unsupported geometry
// (tree_plru needs a power-of-two way count).
std::unique_ptr<ReplacementPolicy> make_policy(const std::string& name,
                                               const CacheGeometry& g,
                                               const PolicyConfig& cfg,
                                               std::uint64_t seed);

}  // namespace cachelab
