#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cachelab/hierarchy.hpp"
#include "cachelab/scheduler.hpp"

namespace cachelab {

struct EvictionSet {
  unsigned set_index = 0;
  unsigned slice = 0;
  std::vector<Addr> addrs; // exactly w, same set and slice, insertion order
};

struct ConflictingSet {
  std::vector<Addr> addrs; // w more lines, same set and slice, disjoint
};

// Timed-access mirror of one LLC set: the same policy automaton as the cache,
// fed only by observed latencies. Slot i mirrors way i; address 0 = empty.
class ShadowModel {
 public:
  ShadowModel(const std::string& policy_name, const MachineProfile& prof,
              std::uint64_t seed);

  void observe_read(Addr a, std::uint64_t measured_latency);
  void observe_flush(Addr a);

  // Address the model expects the next forced miss to evict; 0 if the model
  // thinks an empty way will absorb it.
  Addr candidate(unsigned flat_set) const;

  std::vector<Addr> address_array(unsigned flat_set) const;
  int control(unsigned flat_set, unsigned way) const;
  const std::string& name() const { return pol_->name(); }
  ReplacementPolicy& policy() { return *pol_; }
  unsigned flat_set_of(Addr a) const;

 private:
  int find_slot(unsigned flat_set, Addr a) const;

  CacheGeometry geom_;
  TimingConfig timing_;
  std::unique_ptr<ReplacementPolicy> pol_;
  std::vector<Addr> addrs_; // flat_set * ways + way
};

// Greedy reduction of a candidate pool to the w lines that evict `target`.
EvictionSet build_eviction_set(AgentPort& port, const MachineProfile& prof,
                               Addr target, const std::vector<Addr>& pool);

// Timed conflict probing: accepts candidates whose re-read is served by
// memory after the eviction set is read over them.
ConflictingSet get_conflicting_set(AgentPort& port, const MachineProfile& prof,
                                   const EvictionSet& ev,
                                   const std::vector<Addr>& candidates);

struct DetectResult {
  Addr evicted = 0;     // the slow member, if any
  unsigned slow = 0;    // 1 when a memory-latency member was found, else 0
};

// Probes the listed members in order with timed reads and stops at the first
// memory-latency one; that is the evicted line. Probing past it would let its
// refill evict a member not yet probed. Zero slow members marks a noisy trial.
DetectResult detect_evicted(AgentPort& port, const MachineProfile& prof,
                            const std::vector<Addr>& members);

struct PolicyTestResult {
  double accuracy = 0.0;
  unsigned valid_trials = 0;
  unsigned discarded = 0;
};

// Alg. 2: per trial, re-establish insertion order, do lim random member
// accesses, predict the next victim with the shadow model, force a miss with
// a fresh conflicting line, then find the truly evicted member by probing.
PolicyTestResult test_policy(AgentPort& port, const MachineProfile& prof,
                             const EvictionSet& ev,
                             const std::vector<Addr>& conflict_pool,
                             const std::string& model_name, unsigned trials,
                             std::uint64_t seed);

struct MatrixEntry {
  std::string machine;
  std::string model;
  double accuracy = 0.0;  // negative = model unavailable for the geometry
  unsigned valid_trials = 0;
  unsigned discarded = 0;
};

// Scores every zoo model against every zoo machine policy on one geometry.
std::vector<MatrixEntry> distinguishability_matrix(const MachineProfile& base,
                                                   unsigned trials,
                                                   std::uint64_t seed);

struct LeaderReport {
  bool dueling_detected = false;
  std::vector<std::pair<unsigned, unsigned>> mode1_leaders; // (slice, set)
  std::vector<std::pair<unsigned, unsigned>> mode2_leaders;
  std::vector<unsigned> mode1_regions; // 64-aligned region starts
  std::vector<unsigned> mode2_regions;
  unsigned flips_down = 0; // followers seen switching toward mode 1
  unsigned flips_up = 0;   // and back toward mode 2
};

// Finds dueling leader sets from miss-count signatures: leaders keep their
// burst signature while followers flip when the opposing side is trained.
LeaderReport locate_leader_sets(AgentPort& port, const MachineProfile& prof,
                                std::uint64_t seed);

}  // namespace cachelab
