#include "cachelab/inference.hpp"

#include <algorithm>
#include <stdexcept>

namespace cachelab {

// ---------------------------------------------------------------------------
// ShadowModel

ShadowModel::ShadowModel(const std::string& policy_name,
                         const MachineProfile& prof, std::uint64_t seed)
    : geom_(prof.llc), timing_(prof.timing) {
  pol_ = make_policy(policy_name, geom_, prof.policy, seed);
  addrs_.assign(static_cast<size_t>(geom_.total_sets()) * geom_.ways, 0);
}

unsigned ShadowModel::flat_set_of(Addr a) const {
  CacheAddress ca = decompose(a, geom_);
  return ca.slice * geom_.sets + ca.set_index;
}

int ShadowModel::find_slot(unsigned fs, Addr a) const {
  for (unsigned w = 0; w < geom_.ways; ++w)
    if (addrs_[fs * geom_.ways + w] == a) return static_cast<int>(w);
  return -1;
}

void ShadowModel::observe_read(Addr a, std::uint64_t measured) {
  if (measured < timing_.ll_threshold) return; // private level served it
  unsigned fs = flat_set_of(a);
  if (measured < timing_.mem_threshold) {
    int slot = find_slot(fs, a);
    if (slot >= 0) pol_->on_hit(fs, static_cast<unsigned>(slot));
    return;
  }
  // Memory latency: the set took a fill.
  pol_->on_miss(fs);
  unsigned way = pol_->select_victim(fs);
  if (addrs_[fs * geom_.ways + way] != 0) pol_->on_invalidate(fs, way);
  addrs_[fs * geom_.ways + way] = a;
  pol_->on_fill(fs, way);
}

void ShadowModel::observe_flush(Addr a) {
  unsigned fs = flat_set_of(a);
  int slot = find_slot(fs, a);
  if (slot < 0) return;
  pol_->on_invalidate(fs, static_cast<unsigned>(slot));
  addrs_[fs * geom_.ways + slot] = 0;
}

Addr ShadowModel::candidate(unsigned fs) const {
  unsigned way = pol_->peek_victim(fs);
  return addrs_[fs * geom_.ways + way];
}

std::vector<Addr> ShadowModel::address_array(unsigned fs) const {
  std::vector<Addr> out(geom_.ways);
  for (unsigned w = 0; w < geom_.ways; ++w) out[w] = addrs_[fs * geom_.ways + w];
  return out;
}

int ShadowModel::control(unsigned fs, unsigned way) const {
  return pol_->control_value(fs, way);
}

// ---------------------------------------------------------------------------
// Eviction set construction

EvictionSet build_eviction_set(AgentPort& port, const MachineProfile& prof,
                               Addr target, const std::vector<Addr>& pool) {
  unsigned w = prof.llc.ways;
  std::vector<Addr> group = pool;
  if (group.size() < w)
    throw std::runtime_error("eviction set pool smaller than associativity");
  // Every membership check starts from a clean slate: flush the probe and the
  // whole candidate pool, so lines that earlier checks left resident cannot
  // supply set pressure of their own.
  auto evicts = [&](Addr probe, const std::vector<Addr>& members) {
    port.flush(target);
    port.flush(probe);
    for (Addr a : pool) port.flush(a);
    port.read(probe, false);
    for (Addr a : members) port.read(a, false);
    return port.read(probe, true).measured >= prof.timing.mem_threshold;
  };
  if (!evicts(target, group))
    throw std::runtime_error("candidate pool does not evict the target");
  for (size_t i = 0; i < group.size() && group.size() > w;) {
    std::vector<Addr> reduced = group;
    reduced.erase(reduced.begin() + static_cast<long>(i));
    if (evicts(target, reduced)) {
      group = std::move(reduced);
    } else {
      ++i;
    }
  }
  if (group.size() != w)
    throw std::runtime_error("pool exhausted before " + std::to_string(w) +
                             " conflicting members were found");
  // The set must also be self-evicting: all w plus the re-timed first member.
  std::vector<Addr> tail(group.begin() + 1, group.end());
  tail.push_back(target);
  if (!evicts(group[0], tail))
    throw std::runtime_error("reduced group fails the self-eviction check");
  CacheAddress ca = decompose(target, prof.llc);
  EvictionSet ev;
  ev.set_index = ca.set_index;
  ev.slice = ca.slice;
  ev.addrs = std::move(group);
  return ev;
}

ConflictingSet get_conflicting_set(AgentPort& port, const MachineProfile& prof,
                                   const EvictionSet& ev,
                                   const std::vector<Addr>& candidates) {
  unsigned w = prof.llc.ways;
  ConflictingSet out;
  for (Addr e : candidates) {
    if (out.addrs.size() == w) break;
    if (std::find(ev.addrs.begin(), ev.addrs.end(), e) != ev.addrs.end())
      continue;
    for (Addr a : ev.addrs) port.read(a, false);
    for (Addr a : ev.addrs) port.flush(a);
    port.read(e, false);
    for (Addr a : ev.addrs) port.read(a, false);
    if (port.read(e, true).measured >= prof.timing.mem_threshold)
      out.addrs.push_back(e);
  }
  if (out.addrs.size() != w)
    throw std::runtime_error("candidate pool exhausted with " +
                             std::to_string(out.addrs.size()) + " of " +
                             std::to_string(w) + " conflicting members");
  return out;
}

DetectResult detect_evicted(AgentPort& port, const MachineProfile& prof,
                            const std::vector<Addr>& members) {
  DetectResult r;
  for (Addr a : members) {
    if (a == 0) continue;
    if (port.read(a, true).measured >= prof.timing.mem_threshold) {
      r.evicted = a;
      r.slow = 1;
      // Stop here: the slow read just refilled the line, and that fill may
      // evict a member we have not probed yet.
      break;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Alg. 2

PolicyTestResult test_policy(AgentPort& port, const MachineProfile& prof,
                             const EvictionSet& ev,
                             const std::vector<Addr>& conflict_pool,
                             const std::string& model_name, unsigned trials,
                             std::uint64_t seed) {
  if (trials == 0)
    throw std::runtime_error("test_policy needs at least one trial");
  if (conflict_pool.size() < trials)
    throw std::runtime_error("need one fresh conflicting line per trial");
  unsigned w = prof.llc.ways;
  ShadowModel shadow(model_name, prof, seed);
  unsigned fs = shadow.flat_set_of(ev.addrs[0]);
  CounterRng rng(seed, 0xa19u);

  unsigned hits = 0, valid = 0, discarded = 0;
  auto observe_read = [&](Addr a, bool timed) {
    OpResult r = port.read(a, timed);
    shadow.observe_read(a, r.measured);
    return r;
  };

  for (unsigned trial = 0; trial < trials; ++trial) {
    // Re-establish insertion order: fill, flush everything, reload in order.
    for (Addr a : ev.addrs) observe_read(a, false);
    for (Addr a : ev.addrs) {
      port.flush(a);
      shadow.observe_flush(a);
    }
    for (Addr a : ev.addrs) observe_read(a, false);

    unsigned lim = static_cast<unsigned>(rng.below(51));
    for (unsigned i = 0; i < lim; ++i)
      observe_read(ev.addrs[rng.below(w)], true);

    Addr predicted = shadow.candidate(fs);
    std::vector<Addr> belief = shadow.address_array(fs);
    observe_read(conflict_pool[trial], true); // forced miss

    // Probe the pre-miss members in way order and stop at the first slow one,
    // so its refill cannot disturb members that are still unprobed.
    DetectResult det;
    for (Addr a : belief) {
      if (a == 0) continue;
      OpResult r = observe_read(a, true);
      if (r.measured >= prof.timing.mem_threshold) {
        det.evicted = a;
        det.slow = 1;
        break;
      }
    }
    // Retire the conflicting line so the next trial starts from members only.
    port.flush(conflict_pool[trial]);
    shadow.observe_flush(conflict_pool[trial]);
    if (det.slow != 1) {
      ++discarded;
      continue;
    }
    ++valid;
    if (predicted == det.evicted) ++hits;
  }
  if (valid == 0)
    throw std::runtime_error("all trials were discarded; accuracy undefined");
  PolicyTestResult res;
  res.accuracy = static_cast<double>(hits) / valid;
  res.valid_trials = valid;
  res.discarded = discarded;
  return res;
}

// ---------------------------------------------------------------------------
// Zoo matrix

std::vector<MatrixEntry> distinguishability_matrix(const MachineProfile& base,
                                                   unsigned trials,
                                                   std::uint64_t seed) {
  std::vector<MatrixEntry> out;
  for (const std::string& machine : policy_zoo()) {
    MachineProfile prof = base;
    prof.policy.llc_policy = machine;
    // The dueling entries in the model column need leader sets even when the
    // machine policy ignores them, so every cell gets the same layout.
    if (prof.policy.mode1_leaders.empty()) {
      for (unsigned k = 0; k < prof.llc.slices; ++k) {
        prof.policy.mode1_leaders.push_back(512 % prof.llc.sets);
        prof.policy.mode2_leaders.push_back(768 % prof.llc.sets);
      }
    }
    bool machine_ok = is_pow2(prof.llc.ways) || machine != "tree_plru";
    if (!machine_ok) {
      for (const std::string& model : policy_zoo())
        out.push_back({machine, model, -1.0, 0, 0});
      continue;
    }
    CacheHierarchy hier(prof, seed);
    Scheduler sched(hier, seed);
    AgentPort port = sched.port(0);

    // Tested set: index 5, slice 0 — a follower on every dueling layout.
    unsigned set = 5 % prof.llc.sets;
    EvictionSet ev;
    ev.set_index = set;
    ev.slice = 0;
    for (unsigned i = 0; i < prof.llc.ways; ++i)
      ev.addrs.push_back(make_line_addr(prof.llc, 0, set, i));
    std::vector<Addr> conflicts;
    for (unsigned i = 0; i < trials; ++i)
      conflicts.push_back(make_line_addr(prof.llc, 0, set, 1000 + i));

    for (const std::string& model : policy_zoo()) {
      if (model == "tree_plru" && !is_pow2(prof.llc.ways)) {
        out.push_back({machine, model, -1.0, 0, 0});
        continue;
      }
      CacheHierarchy h2(prof, seed);
      Scheduler s2(h2, seed);
      AgentPort p2 = s2.port(0);
      PolicyTestResult r =
          test_policy(p2, prof, ev, conflicts, model, trials, seed);
      out.push_back({machine, model, r.accuracy, r.valid_trials, r.discarded});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Leader location

namespace {

struct SetProbe {
  std::vector<Addr> ev;
  std::vector<Addr> conf;
};

SetProbe probe_lines(const MachineProfile& prof, unsigned slice, unsigned set) {
  SetProbe p;
  for (unsigned i = 0; i < prof.llc.ways; ++i) {
    p.ev.push_back(make_line_addr(prof.llc, slice, set, i));
    p.conf.push_back(make_line_addr(prof.llc, slice, set, prof.llc.ways + i));
  }
  return p;
}

// Burst signature: ordered eviction-set access, full conflicting-set access,
// timed eviction-set re-access; returns how many re-reads missed.
unsigned burst_misses(AgentPort& port, const MachineProfile& prof,
                      const SetProbe& p) {
  for (Addr a : p.ev) port.read(a, false);
  for (Addr a : p.conf) port.read(a, false);
  unsigned misses = 0;
  for (Addr a : p.ev)
    if (port.read(a, true).measured >= prof.timing.mem_threshold) ++misses;
  return misses;
}

}  // namespace

LeaderReport locate_leader_sets(AgentPort& port, const MachineProfile& prof,
                                std::uint64_t seed) {
  unsigned w = prof.llc.ways;
  unsigned slices = prof.llc.slices;
  unsigned sets = prof.llc.sets;
  unsigned total = slices * sets;
  CounterRng rng(seed, 0x1eadu);

  std::vector<unsigned> order(total);
  for (unsigned i = 0; i < total; ++i) order[i] = i;
  auto reshuffle = [&] {
    for (unsigned i = total - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(i + 1)]);
  };

  std::vector<SetProbe> probes;
  probes.reserve(total);
  for (unsigned fs = 0; fs < total; ++fs)
    probes.push_back(probe_lines(prof, fs / sets, fs % sets));

  auto measure_all = [&](std::vector<std::uint8_t>& mode1) {
    reshuffle();
    for (unsigned fs : order)
      mode1[fs] = burst_misses(port, prof, probes[fs]) >= (w + 1) / 2;
  };

  // Capacity storm: policy-independent misses that leave the set empty.
  // The round cap is sized so one stormed leader alone saturates the duel
  // counter; sentinel sets cut the storm short once behavior flips.
  unsigned rounds = ((1u << prof.policy.psel_bits) + 128) / (2 * w) + 1;
  std::uint64_t storm_serial = 1u << 20;
  auto storm = [&](const std::vector<std::uint8_t>& group,
                   const std::vector<std::uint8_t>& baseline) {
    std::vector<unsigned> sentinels;
    reshuffle();
    for (unsigned fs : order) {
      if (group[fs]) {
        sentinels.push_back(fs);
        if (sentinels.size() == 8) break;
      }
    }
    bool flipped = false;
    unsigned margin = 2;
    for (unsigned r = 0; r < rounds; ++r) {
      reshuffle();
      for (unsigned fs : order) {
        if (!group[fs]) continue;
        std::vector<Addr> lines;
        for (unsigned i = 0; i < 2 * w; ++i)
          lines.push_back(make_line_addr(prof.llc, fs / sets, fs % sets,
                                         storm_serial++));
        for (Addr a : lines) port.read(a, false);
        for (Addr a : lines) port.flush(a);
      }
      if (!flipped) {
        for (unsigned fs : sentinels) {
          bool mode1 = burst_misses(port, prof, probes[fs]) >= (w + 1) / 2;
          if (mode1 != static_cast<bool>(baseline[fs])) {
            flipped = true;
            break;
          }
        }
      } else if (--margin == 0) {
        break;
      }
    }
  };

  std::vector<std::uint8_t> m0(total), m1(total), m2(total);
  measure_all(m0);

  std::vector<std::uint8_t> group2(total);
  for (unsigned fs = 0; fs < total; ++fs) group2[fs] = !m0[fs];
  storm(group2, m0); // misses on mode-2 leaders drag the duel toward mode 1
  measure_all(m1);

  std::vector<std::uint8_t> group1(total);
  for (unsigned fs = 0; fs < total; ++fs) group1[fs] = m1[fs];
  storm(group1, m1); // misses on mode-1 leaders drag it back toward mode 2
  measure_all(m2);

  LeaderReport rep;
  for (unsigned fs = 0; fs < total; ++fs) {
    if (!m0[fs] && m1[fs]) ++rep.flips_down;
    if (m1[fs] && !m2[fs]) ++rep.flips_up;
  }
  rep.dueling_detected = rep.flips_down > 0 && rep.flips_up > 0;
  if (!rep.dueling_detected) return rep;

  auto add_regions = [](std::vector<unsigned>& regions, unsigned set) {
    unsigned start = (set / 64) * 64;
    if (std::find(regions.begin(), regions.end(), start) == regions.end())
      regions.push_back(start);
  };
  for (unsigned fs = 0; fs < total; ++fs) {
    unsigned slice = fs / sets, set = fs % sets;
    if (m0[fs] && m1[fs] && m2[fs]) {
      rep.mode1_leaders.emplace_back(slice, set);
      add_regions(rep.mode1_regions, set);
    } else if (!m0[fs] && !m1[fs] && !m2[fs]) {
      rep.mode2_leaders.emplace_back(slice, set);
      add_regions(rep.mode2_regions, set);
    }
  }
  std::sort(rep.mode1_regions.begin(), rep.mode1_regions.end());
  std::sort(rep.mode2_regions.begin(), rep.mode2_regions.end());
  return rep;
}

}  // namespace cachelab
