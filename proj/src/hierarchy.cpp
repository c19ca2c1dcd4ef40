#include "cachelab/hierarchy.hpp"

#include <sstream>
#include <stdexcept>

namespace cachelab {

const char* to_string(Level l) {
  switch (l) {
    case Level::L1: return "L1";
    case Level::L2: return "L2";
    case Level::LLC: return "LLC";
    case Level::Memory: return "MEM";
  }
  return "?";
}

int CacheHierarchy::Cache::find(const CacheAddress& a) const {
  unsigned fs = flat_set(a);
  for (unsigned w = 0; w < geom.ways; ++w) {
    unsigned i = fs * geom.ways + w;
    if (valid[i] && addr[i] == a.raw) return static_cast<int>(w);
  }
  return -1;
}

CacheHierarchy::Cache CacheHierarchy::make_cache(const CacheGeometry& g,
                                                 const std::string& policy_name,
                                                 std::uint64_t seed) const {
  Cache c;
  c.geom = g;
  c.policy = make_policy(policy_name, g, profile_.policy, seed);
  c.addr.assign(static_cast<size_t>(g.total_sets()) * g.ways, 0);
  c.valid.assign(c.addr.size(), 0);
  return c;
}

CacheHierarchy::CacheHierarchy(const MachineProfile& profile, std::uint64_t seed)
    : profile_(profile) {
  profile_.validate();
  for (unsigned core = 0; core < profile_.cores; ++core) {
    l1_.push_back(make_cache(profile_.l1, profile_.policy.l1_policy,
                             splitmix64(seed ^ (0x11ull + core))));
    l2_.push_back(make_cache(profile_.l2, profile_.policy.l2_policy,
                             splitmix64(seed ^ (0x22ull + core))));
  }
  llc_ = make_cache(profile_.llc, profile_.policy.llc_policy, seed);
}

// Install into a private level, silently dropping its victim if needed.
void CacheHierarchy::private_fill(Cache& c, const CacheAddress& a) {
  if (c.find(a) >= 0) return;
  unsigned fs = c.flat_set(a);
  unsigned way = c.policy->select_victim(fs);
  unsigned i = fs * c.geom.ways + way;
  if (c.valid[i]) c.policy->on_invalidate(fs, way);
  c.addr[i] = a.raw;
  c.valid[i] = 1;
  c.policy->on_fill(fs, way);
}

void CacheHierarchy::drop_private(unsigned core, Addr raw) {
  for (Cache* c : {&l1_[core], &l2_[core]}) {
    CacheAddress a = decompose(raw, c->geom);
    int way = c->find(a);
    if (way >= 0) {
      unsigned fs = c->flat_set(a);
      c->valid[fs * c->geom.ways + way] = 0;
      c->policy->on_invalidate(fs, static_cast<unsigned>(way));
    }
  }
}

AccessOutcome CacheHierarchy::access(unsigned core, Addr raw) {
  AccessOutcome out = issue_access(core, raw);
  if (out.needs_fill) {
    AccessOutcome fill = apply_fill(core, raw);
    fill.latency = out.latency;
    return fill;
  }
  return out;
}

AccessOutcome CacheHierarchy::issue_access(unsigned core, Addr raw) {
  const TimingConfig& t = profile_.timing;
  AccessOutcome out;

  Cache& l1 = l1_[core];
  CacheAddress a1 = decompose(raw, l1.geom);
  if (int way = l1.find(a1); way >= 0) {
    l1.policy->on_hit(l1.flat_set(a1), static_cast<unsigned>(way));
    out.served_by = Level::L1;
    out.latency = t.l1_latency;
    return out;
  }

  Cache& l2 = l2_[core];
  CacheAddress a2 = decompose(raw, l2.geom);
  if (int way = l2.find(a2); way >= 0) {
    l2.policy->on_hit(l2.flat_set(a2), static_cast<unsigned>(way));
    private_fill(l1, a1);
    out.served_by = Level::L2;
    out.latency = t.l2_latency;
    return out;
  }

  CacheAddress al = decompose(raw, llc_.geom);
  if (int way = llc_.find(al); way >= 0) {
    llc_.policy->on_hit(llc_.flat_set(al), static_cast<unsigned>(way));
    private_fill(l2, a2);
    private_fill(l1, a1);
    out.served_by = Level::LLC;
    out.latency = t.llc_latency;
    return out;
  }

  out.served_by = Level::Memory;
  out.latency = t.mem_latency;
  out.needs_fill = true;
  return out;
}

AccessOutcome CacheHierarchy::apply_fill(unsigned core, Addr raw) {
  AccessOutcome out;
  out.served_by = Level::Memory;
  out.latency = profile_.timing.mem_latency;

  CacheAddress al = decompose(raw, llc_.geom);
  unsigned fs = llc_.flat_set(al);
  llc_.policy->on_miss(fs);
  unsigned way = llc_.policy->select_victim(fs);
  unsigned i = fs * llc_.geom.ways + way;
  if (llc_.valid[i]) {
    out.llc_evicted = true;
    out.evicted_addr = llc_.addr[i];
    llc_.policy->on_invalidate(fs, way);
    llc_.valid[i] = 0;
    for (unsigned c = 0; c < profile_.cores; ++c) {
      if (present(Level::L1, c, out.evicted_addr) ||
          present(Level::L2, c, out.evicted_addr))
        out.back_invalidated.push_back(c);
      drop_private(c, out.evicted_addr);
    }
  }
  llc_.addr[i] = raw;
  llc_.valid[i] = 1;
  llc_.policy->on_fill(fs, way);
  install_private(core, raw);
  return out;
}

void CacheHierarchy::install_private(unsigned core, Addr raw) {
  private_fill(l2_[core], decompose(raw, l2_[core].geom));
  private_fill(l1_[core], decompose(raw, l1_[core].geom));
}

void CacheHierarchy::merged_install(unsigned core, Addr raw) {
  CacheAddress al = decompose(raw, llc_.geom);
  if (int way = llc_.find(al); way >= 0)
    llc_.policy->on_hit(llc_.flat_set(al), static_cast<unsigned>(way));
  install_private(core, raw);
}

unsigned CacheHierarchy::flush(Addr raw) {
  for (unsigned c = 0; c < profile_.cores; ++c) drop_private(c, raw);
  CacheAddress al = decompose(raw, llc_.geom);
  if (int way = llc_.find(al); way >= 0) {
    unsigned fs = llc_.flat_set(al);
    llc_.valid[fs * llc_.geom.ways + way] = 0;
    llc_.policy->on_invalidate(fs, static_cast<unsigned>(way));
  }
  return profile_.timing.flush_latency;
}

bool CacheHierarchy::present(Level level, unsigned core, Addr raw) const {
  const Cache* c = nullptr;
  switch (level) {
    case Level::L1: c = &l1_[core]; break;
    case Level::L2: c = &l2_[core]; break;
    case Level::LLC: c = &llc_; break;
    case Level::Memory: return true;
  }
  return c->find(decompose(raw, c->geom)) >= 0;
}

std::vector<LineState> CacheHierarchy::inspect_set(Level level, unsigned core,
                                                   unsigned slice,
                                                   unsigned set) const {
  const Cache* c = nullptr;
  switch (level) {
    case Level::L1: c = &l1_[core]; break;
    case Level::L2: c = &l2_[core]; break;
    case Level::LLC: c = &llc_; break;
    case Level::Memory: throw std::logic_error("memory has no sets");
  }
  unsigned fs = slice * c->geom.sets + set;
  std::vector<LineState> out(c->geom.ways);
  for (unsigned w = 0; w < c->geom.ways; ++w) {
    unsigned i = fs * c->geom.ways + w;
    LineState& ls = out[w];
    ls.valid = c->valid[i];
    if (ls.valid) {
      ls.addr = c->addr[i];
      ls.tag = decompose(ls.addr, c->geom).tag;
      ls.control = c->policy->control_value(fs, w);
    }
  }
  return out;
}

std::optional<Addr> CacheHierarchy::llc_candidate_addr(unsigned slice,
                                                       unsigned set) const {
  unsigned fs = slice * llc_.geom.sets + set;
  unsigned way = llc_.policy->peek_victim(fs);
  unsigned i = fs * llc_.geom.ways + way;
  if (!llc_.valid[i]) return std::nullopt;
  return llc_.addr[i];
}

std::uint64_t CacheHierarchy::state_digest() const {
  std::uint64_t h = 0xc0ffee1234567890ull;
  auto mix_cache = [&h](const Cache& c) {
    for (size_t i = 0; i < c.addr.size(); ++i) {
      h = splitmix64(h ^ (c.valid[i] ? c.addr[i] | 1 : 0));
    }
    h = splitmix64(h ^ c.policy->state_digest());
  };
  for (const Cache& c : l1_) mix_cache(c);
  for (const Cache& c : l2_) mix_cache(c);
  mix_cache(llc_);
  return h;
}

void CacheHierarchy::check_invariants() const {
  auto fail = [](const std::string& msg) {
    throw std::logic_error("hierarchy invariant violated: " + msg);
  };
  auto check_cache = [&](const Cache& c, const char* label) {
    for (unsigned fs = 0; fs < c.geom.total_sets(); ++fs) {
      for (unsigned w = 0; w < c.geom.ways; ++w) {
        unsigned i = fs * c.geom.ways + w;
        if (static_cast<bool>(c.valid[i]) != c.policy->valid(fs, w))
          fail(std::string(label) + ": policy/array validity mismatch");
        if (!c.valid[i]) continue;
        CacheAddress a = decompose(c.addr[i], c.geom);
        if (c.flat_set(a) != fs) fail(std::string(label) + ": line in wrong set");
        for (unsigned w2 = w + 1; w2 < c.geom.ways; ++w2) {
          unsigned j = fs * c.geom.ways + w2;
          if (c.valid[j] && c.addr[j] == c.addr[i])
            fail(std::string(label) + ": duplicate line in set");
        }
      }
    }
  };
  for (const Cache& c : l1_) check_cache(c, "L1");
  for (const Cache& c : l2_) check_cache(c, "L2");
  check_cache(llc_, "LLC");
  for (unsigned core = 0; core < profile_.cores; ++core) {
    for (const Cache* c : {&l1_[core], &l2_[core]}) {
      for (size_t i = 0; i < c->addr.size(); ++i) {
        if (c->valid[i] && !present(Level::LLC, core, c->addr[i]))
          fail("inclusivity: private line missing from LLC");
      }
    }
  }
}

}  // namespace cachelab
