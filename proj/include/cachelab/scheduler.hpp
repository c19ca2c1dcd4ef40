#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cachelab/hierarchy.hpp"
#include "cachelab/rng.hpp"

namespace cachelab {

enum class AgentEventKind { Read, Flush, Fence, Wait, Timestamp, CounterRead, Done };

const char* to_string(AgentEventKind k);
std::optional<AgentEventKind> event_kind_from(const std::string& s);

struct AgentOp {
  AgentEventKind kind = AgentEventKind::Done;
  Addr addr = 0;            // Read, Flush
  std::uint64_t cycles = 0; // Wait
  bool measured = false;    // Read: agent observes the latency (jitter applies)

  static AgentOp read(Addr a, bool measured = false) {
    return {AgentEventKind::Read, a, 0, measured};
  }
  static AgentOp flush(Addr a) { return {AgentEventKind::Flush, a, 0, false}; }
  static AgentOp wait(std::uint64_t c) { return {AgentEventKind::Wait, 0, c, false}; }
  static AgentOp fence() { return {AgentEventKind::Fence, 0, 0, false}; }
  static AgentOp timestamp() { return {AgentEventKind::Timestamp, 0, 0, false}; }
  static AgentOp counter_read() { return {AgentEventKind::CounterRead, 0, 0, false}; }
  static AgentOp done() { return {AgentEventKind::Done, 0, 0, false}; }
};

struct OpResult {
  AgentEventKind kind = AgentEventKind::Fence;
  Level served_by = Level::L1;
  std::uint64_t charged = 0;  // cycles the op cost on the agent clock
  std::uint64_t measured = 0; // observed latency (jitter included), reads only
  std::uint64_t now = 0;      // agent clock after the op
  std::uint64_t counter_misses = 0; // CounterRead payload
  bool merged = false;        // read joined a fill already in flight
  bool first = true;          // no op has completed yet
};

// An agent is pulled: the scheduler asks for the next op, handing back the
// result of the previous one.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual AgentOp next(const OpResult& prev) = 0;
};

struct PerfCounters {
  std::uint64_t reads = 0;
  std::uint64_t flushes = 0;
  std::uint64_t l1_hits = 0;
  std::uint64_t l2_hits = 0;
  std::uint64_t llc_accesses = 0;
  std::uint64_t llc_hits = 0;
  std::uint64_t llc_misses = 0;

  std::uint64_t mem_accesses() const { return llc_misses; }
  void reset() { *this = PerfCounters{}; }
};

struct TraceRecord {
  std::uint64_t seq = 0;
  int agent = 0;
  unsigned core = 0;
  AgentEventKind kind = AgentEventKind::Fence;
  Addr addr = 0;
  std::uint64_t arg = 0; // wait cycles
  std::uint64_t issue = 0;
  std::uint64_t charged = 0;
  std::uint64_t measured = 0;
  Level served_by = Level::L1;
};

class Scheduler;

// Imperative handle for driver-style code: each call executes one op on the
// owning scheduler's master lane, first advancing background agents that are
// due to run. Timing and state effects are identical to pull execution.
class AgentPort {
 public:
  AgentPort() = default;

  OpResult read(Addr a, bool measured = true);
  OpResult flush(Addr a);
  OpResult wait(std::uint64_t cycles);
  OpResult fence();
  void advance_to(std::uint64_t t); // move this lane's clock forward
  std::uint64_t now() const;
  unsigned core() const { return core_; }
  PerfCounters& counters();
  void reset_counters();

 private:
  friend class Scheduler;
  AgentPort(Scheduler* s, int lane, unsigned core)
      : sched_(s), lane_(lane), core_(core) {}
  Scheduler* sched_ = nullptr;
  int lane_ = -1;
  unsigned core_ = 0;
};

struct ReplayResult {
  bool ok = false;
  std::string error;
  std::uint64_t rows = 0;
  std::uint64_t digest = 0;
};

// Drives agents against one hierarchy on a shared cycle clock. Reads served
// by memory install their line when the fill completes; a read of a line with
// a fill in flight merges into it and is never counted as a second miss.
class Scheduler {
 public:
  Scheduler(CacheHierarchy& h, std::uint64_t seed);

  // A held agent is never dispatched by the concurrent machinery; it only
  // runs through run_phase. Used for strict phase alternation with a port.
  int add_agent(std::unique_ptr<Agent> a, unsigned core, std::string label,
                bool held = false);
  AgentPort port(unsigned core, std::string label = "master");

  // Concurrent mode: repeatedly dispatch the non-master agent with the
  // earliest ready time (seeded tie-break) until all are done or every ready
  // time reaches `until`.
  void run(std::uint64_t until = UINT64_MAX);

  // Runs one agent from `start` up to and including its next Fence (or Done)
  // and returns its clock afterwards.
  std::uint64_t run_phase(int lane, std::uint64_t start);

  // Runs one agent from its own clock until that clock reaches `until` or the
  // agent finishes. The op that crosses the boundary completes; the next one
  // waits for the following phase. Returns the lane clock afterwards.
  std::uint64_t run_phase_until(int lane, std::uint64_t until);

  bool lane_done(int lane) const { return lanes_[lane].done; }

  // Lockstep mode: agents take turns in id order, each running up to and
  // including its next Fence on a single shared clock. No interleaving
  // inside a phase.
  void run_lockstep();

  std::uint64_t now() const { return clock_; }
  PerfCounters& counters(int lane) { return lanes_[lane].counters; }
  void apply_due_fills(std::uint64_t up_to);
  void quiesce(); // apply every pending fill (before digests or inspection)

  void set_jitter(unsigned amplitude) { jitter_amp_ = amplitude; }

  void enable_trace(bool on) { tracing_ = on; }
  const std::vector<TraceRecord>& trace() const { return trace_; }
  int lane_count() const { return static_cast<int>(lanes_.size()); }
  const std::string& lane_label(int lane) const { return lanes_[lane].label; }
  unsigned lane_core(int lane) const { return lanes_[lane].core; }

  int add_sampler(int lane, std::uint64_t period);
  // Closes every complete window up to `until` and returns the series.
  const std::vector<std::uint64_t>& finish_sampler(int sampler, std::uint64_t until);
  const std::vector<std::uint64_t>& samples(int sampler) const {
    return samplers_[sampler].values;
  }

  CacheHierarchy& hierarchy() { return hier_; }
  std::uint64_t seed() const { return seed_; }

  void write_trace(const std::string& path, const std::string& mode_label) const;

 private:
  friend class AgentPort;
  friend ReplayResult replay_trace(const std::string& path);

  struct Lane {
    std::unique_ptr<Agent> agent; // null for master lanes
    unsigned core = 0;
    std::string label;
    std::uint64_t ready = 0;
    bool done = false;
    bool held = false;
    OpResult last;
    PerfCounters counters;
  };

  struct Pending {
    std::uint64_t complete = 0;
    std::uint64_t seq = 0;
    unsigned core = 0;
    Addr addr = 0;
    std::vector<unsigned> extra_cores;
  };

  struct Sampler {
    int lane = 0;
    std::uint64_t period = 0;
    std::uint64_t next_boundary = 0;
    std::uint64_t last_total = 0;
    std::vector<std::uint64_t> values;
  };

  OpResult exec(int lane, const AgentOp& op);
  void advance_background(std::uint64_t master_ready);
  int pick_next(std::uint64_t until);
  void cross_boundaries(int lane, std::uint64_t t);

  CacheHierarchy& hier_;
  std::uint64_t seed_;
  CounterRng tie_rng_;
  CounterRng jitter_rng_;
  std::vector<Lane> lanes_;
  std::vector<Pending> pending_;
  std::vector<Sampler> samplers_;
  std::uint64_t clock_ = 0;
  std::uint64_t op_seq_ = 0;
  unsigned jitter_amp_ = 0;
  bool tracing_ = false;
  std::vector<TraceRecord> trace_;
};

std::uint64_t trace_digest(const std::vector<TraceRecord>& records);

// Re-executes a trace file record by record against a fresh hierarchy,
// verifying outcome fields and the footer digest.
ReplayResult replay_trace(const std::string& path);

}  // namespace cachelab
