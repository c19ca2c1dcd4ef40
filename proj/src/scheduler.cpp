#include "cachelab/scheduler.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cachelab {

const char* to_string(AgentEventKind k) {
  switch (k) {
    case AgentEventKind::Read: return "read";
    case AgentEventKind::Flush: return "flush";
    case AgentEventKind::Fence: return "fence";
    case AgentEventKind::Wait: return "wait";
    case AgentEventKind::Timestamp: return "timestamp";
    case AgentEventKind::CounterRead: return "counter";
    case AgentEventKind::Done: return "done";
  }
  return "?";
}

std::optional<AgentEventKind> event_kind_from(const std::string& s) {
  for (AgentEventKind k : {AgentEventKind::Read, AgentEventKind::Flush,
                           AgentEventKind::Fence, AgentEventKind::Wait,
                           AgentEventKind::Timestamp, AgentEventKind::CounterRead,
                           AgentEventKind::Done})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

static std::optional<Level> level_from(const std::string& s) {
  for (Level l : {Level::L1, Level::L2, Level::LLC, Level::Memory})
    if (s == to_string(l)) return l;
  return std::nullopt;
}

Scheduler::Scheduler(CacheHierarchy& h, std::uint64_t seed)
    : hier_(h),
      seed_(seed),
      tie_rng_(seed, 0x7133u),
      jitter_rng_(seed, 0x1177u) {}

int Scheduler::add_agent(std::unique_ptr<Agent> a, unsigned core,
                         std::string label, bool held) {
  Lane lane;
  lane.agent = std::move(a);
  lane.core = core;
  lane.label = std::move(label);
  lane.ready = clock_;
  lane.held = held;
  lanes_.push_back(std::move(lane));
  return static_cast<int>(lanes_.size()) - 1;
}

std::uint64_t Scheduler::run_phase(int lane_id, std::uint64_t start) {
  Lane& lane = lanes_[lane_id];
  if (lane.done || !lane.agent) return lane.ready;
  lane.ready = std::max(lane.ready, start);
  while (true) {
    AgentOp op = lane.agent->next(lane.last);
    exec(lane_id, op);
    if (op.kind == AgentEventKind::Fence || op.kind == AgentEventKind::Done)
      break;
  }
  return lane.ready;
}

std::uint64_t Scheduler::run_phase_until(int lane_id, std::uint64_t until) {
  Lane& lane = lanes_[lane_id];
  while (!lane.done && lane.agent && lane.ready < until) {
    AgentOp op = lane.agent->next(lane.last);
    exec(lane_id, op);
    if (op.kind == AgentEventKind::Done) break;
  }
  return lane.ready;
}

AgentPort Scheduler::port(unsigned core, std::string label) {
  Lane lane;
  lane.core = core;
  lane.label = std::move(label);
  lane.ready = clock_;
  lanes_.push_back(std::move(lane));
  return AgentPort(this, static_cast<int>(lanes_.size()) - 1, core);
}

void Scheduler::apply_due_fills(std::uint64_t up_to) {
  size_t applied = 0;
  while (applied < pending_.size() && pending_[applied].complete <= up_to) {
    Pending& p = pending_[applied];
    hier_.apply_fill(p.core, p.addr);
    for (unsigned c : p.extra_cores) hier_.merged_install(c, p.addr);
    ++applied;
  }
  if (applied > 0)
    pending_.erase(pending_.begin(), pending_.begin() + applied);
}

void Scheduler::quiesce() { apply_due_fills(UINT64_MAX); }

void Scheduler::cross_boundaries(int lane, std::uint64_t t) {
  for (Sampler& s : samplers_) {
    if (s.lane != lane) continue;
    while (t >= s.next_boundary) {
      std::uint64_t total = lanes_[lane].counters.llc_misses;
      s.values.push_back(total - s.last_total);
      s.last_total = total;
      s.next_boundary += s.period;
    }
  }
}

int Scheduler::add_sampler(int lane, std::uint64_t period) {
  Sampler s;
  s.lane = lane;
  s.period = period;
  s.next_boundary = period;
  samplers_.push_back(std::move(s));
  return static_cast<int>(samplers_.size()) - 1;
}

const std::vector<std::uint64_t>& Scheduler::finish_sampler(int sampler,
                                                            std::uint64_t until) {
  Sampler& s = samplers_[sampler];
  while (s.next_boundary <= until) {
    std::uint64_t total = lanes_[s.lane].counters.llc_misses;
    s.values.push_back(total - s.last_total);
    s.last_total = total;
    s.next_boundary += s.period;
  }
  return s.values;
}

OpResult Scheduler::exec(int lane_id, const AgentOp& op) {
  Lane& lane = lanes_[lane_id];
  std::uint64_t t = lane.ready;
  apply_due_fills(t);

  OpResult r;
  r.kind = op.kind;
  r.first = false;
  std::uint64_t charged = 0;

  switch (op.kind) {
    case AgentEventKind::Read: {
      lane.counters.reads++;
      auto pend = std::find_if(pending_.begin(), pending_.end(),
                               [&](const Pending& p) { return p.addr == op.addr; });
      if (pend != pending_.end()) {
        // Fill already in flight: complete together with it, no second miss.
        r.served_by = Level::LLC;
        r.merged = true;
        charged = pend->complete - t;
        lane.counters.llc_accesses++;
        lane.counters.llc_hits++;
        bool mine = pend->core == lane.core;
        for (unsigned c : pend->extra_cores) mine = mine || c == lane.core;
        if (!mine) pend->extra_cores.push_back(lane.core);
      } else {
        AccessOutcome out = hier_.issue_access(lane.core, op.addr);
        r.served_by = out.served_by;
        charged = out.latency;
        switch (out.served_by) {
          case Level::L1: lane.counters.l1_hits++; break;
          case Level::L2: lane.counters.l2_hits++; break;
          case Level::LLC:
            lane.counters.llc_accesses++;
            lane.counters.llc_hits++;
            break;
          case Level::Memory:
            cross_boundaries(lane_id, t);
            lane.counters.llc_accesses++;
            lane.counters.llc_misses++;
            pending_.push_back({t + charged, op_seq_, lane.core, op.addr, {}});
            break;
        }
      }
      r.measured = charged;
      if (op.measured && jitter_amp_ > 0) {
        std::int64_t delta =
            static_cast<std::int64_t>(jitter_rng_.below(2 * jitter_amp_ + 1)) -
            static_cast<std::int64_t>(jitter_amp_);
        std::int64_t m = static_cast<std::int64_t>(charged) + delta;
        r.measured = m < 1 ? 1 : static_cast<std::uint64_t>(m);
      }
      break;
    }
    case AgentEventKind::Flush: {
      lane.counters.flushes++;
      charged = hier_.flush(op.addr);
      auto pend = std::find_if(pending_.begin(), pending_.end(),
                               [&](const Pending& p) { return p.addr == op.addr; });
      if (pend != pending_.end()) pending_.erase(pend); // fetch aborted
      break;
    }
    case AgentEventKind::Wait:
      charged = op.cycles;
      break;
    case AgentEventKind::Fence:
    case AgentEventKind::Timestamp:
      break;
    case AgentEventKind::CounterRead:
      r.counter_misses = lane.counters.llc_misses;
      break;
    case AgentEventKind::Done:
      lane.done = true;
      break;
  }

  r.charged = charged;
  lane.ready = t + charged;
  r.now = lane.ready;
  clock_ = std::max(clock_, lane.ready);
  lane.last = r;

  if (tracing_) {
    TraceRecord rec;
    rec.seq = op_seq_;
    rec.agent = lane_id;
    rec.core = lane.core;
    rec.kind = op.kind;
    rec.addr = op.addr;
    rec.arg = op.kind == AgentEventKind::Wait
                  ? op.cycles
                  : (op.kind == AgentEventKind::Read && op.measured ? 1 : 0);
    rec.issue = t;
    rec.charged = charged;
    rec.measured = r.measured;
    rec.served_by = r.served_by;
    trace_.push_back(rec);
  }
  ++op_seq_;
  return r;
}

int Scheduler::pick_next(std::uint64_t until) {
  std::uint64_t best = UINT64_MAX;
  std::vector<int> minima;
  for (int i = 0; i < static_cast<int>(lanes_.size()); ++i) {
    Lane& l = lanes_[i];
    if (!l.agent || l.done || l.held) continue;
    if (l.ready < best) {
      best = l.ready;
      minima.clear();
      minima.push_back(i);
    } else if (l.ready == best) {
      minima.push_back(i);
    }
  }
  if (minima.empty() || best >= until) return -1;
  if (minima.size() == 1) return minima[0];
  return minima[tie_rng_.below(minima.size())];
}

void Scheduler::run(std::uint64_t until) {
  while (true) {
    int i = pick_next(until);
    if (i < 0) break;
    Lane& lane = lanes_[i];
    AgentOp op = lane.agent->next(lane.last);
    exec(i, op);
  }
  if (until != UINT64_MAX) apply_due_fills(until);
}

void Scheduler::run_lockstep() {
  std::uint64_t shared = clock_;
  while (true) {
    bool progressed = false;
    for (int i = 0; i < static_cast<int>(lanes_.size()); ++i) {
      Lane& lane = lanes_[i];
      if (!lane.agent || lane.done) continue;
      progressed = true;
      lane.ready = shared;
      while (true) {
        AgentOp op = lane.agent->next(lane.last);
        exec(i, op);
        if (op.kind == AgentEventKind::Fence || op.kind == AgentEventKind::Done)
          break;
      }
      shared = lane.ready;
    }
    if (!progressed) break;
  }
  quiesce();
}

void Scheduler::advance_background(std::uint64_t master_ready) {
  while (true) {
    std::uint64_t best = UINT64_MAX;
    std::vector<int> minima;
    for (int i = 0; i < static_cast<int>(lanes_.size()); ++i) {
      Lane& l = lanes_[i];
      if (!l.agent || l.done || l.held) continue;
      if (l.ready < best) {
        best = l.ready;
        minima.clear();
        minima.push_back(i);
      } else if (l.ready == best) {
        minima.push_back(i);
      }
    }
    if (minima.empty() || best > master_ready) break;
    if (best == master_ready && tie_rng_.below(2) == 1) break; // master first
    int i = minima.size() == 1
                ? minima[0]
                : minima[tie_rng_.below(minima.size())];
    Lane& lane = lanes_[i];
    AgentOp op = lane.agent->next(lane.last);
    exec(i, op);
  }
}

OpResult AgentPort::read(Addr a, bool measured) {
  sched_->advance_background(sched_->lanes_[lane_].ready);
  return sched_->exec(lane_, AgentOp::read(a, measured));
}

OpResult AgentPort::flush(Addr a) {
  sched_->advance_background(sched_->lanes_[lane_].ready);
  return sched_->exec(lane_, AgentOp::flush(a));
}

OpResult AgentPort::wait(std::uint64_t cycles) {
  sched_->advance_background(sched_->lanes_[lane_].ready);
  return sched_->exec(lane_, AgentOp::wait(cycles));
}

OpResult AgentPort::fence() {
  sched_->advance_background(sched_->lanes_[lane_].ready);
  return sched_->exec(lane_, AgentOp::fence());
}

void AgentPort::advance_to(std::uint64_t t) {
  Scheduler::Lane& lane = sched_->lanes_[lane_];
  if (t > lane.ready) lane.ready = t;
  if (t > sched_->clock_) sched_->clock_ = t;
}

std::uint64_t AgentPort::now() const { return sched_->lanes_[lane_].ready; }

PerfCounters& AgentPort::counters() { return sched_->counters(lane_); }

void AgentPort::reset_counters() { sched_->counters(lane_).reset(); }

// ---------------------------------------------------------------------------
// Trace files

static constexpr const char* kTraceVersion = "cachelab-trace v1";

std::uint64_t trace_digest(const std::vector<TraceRecord>& records) {
  std::uint64_t h = 0x7ace7ace7ace7aceull;
  for (const TraceRecord& r : records) {
    h = splitmix64(h ^ r.seq);
    h = splitmix64(h ^ static_cast<std::uint64_t>(r.agent));
    h = splitmix64(h ^ r.core);
    h = splitmix64(h ^ static_cast<std::uint64_t>(r.kind));
    h = splitmix64(h ^ r.addr);
    h = splitmix64(h ^ r.arg);
    h = splitmix64(h ^ r.issue);
    h = splitmix64(h ^ r.charged);
    h = splitmix64(h ^ r.measured);
    h = splitmix64(h ^ static_cast<std::uint64_t>(r.served_by));
  }
  return h;
}

void Scheduler::write_trace(const std::string& path,
                            const std::string& mode_label) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file '" + path + "'");
  const MachineProfile& p = hier_.profile();
  out << "# " << kTraceVersion << "\n";
  out << "# profile=" << p.name << " fingerprint=0x" << std::hex
      << p.fingerprint() << std::dec << "\n";
  out << "# seed=" << seed_ << " mode=" << mode_label
      << " jitter=" << jitter_amp_ << "\n";
  for (size_t i = 0; i < lanes_.size(); ++i)
    out << "# agent " << i << " core=" << lanes_[i].core
        << " label=" << lanes_[i].label << "\n";
  out << "seq,agent,core,kind,addr,arg,issue,charged,measured,served\n";
  for (const TraceRecord& r : trace_) {
    out << r.seq << ',' << r.agent << ',' << r.core << ','
        << to_string(r.kind) << ",0x" << std::hex << r.addr << std::dec << ','
        << r.arg << ',' << r.issue << ',' << r.charged << ',' << r.measured
        << ',' << to_string(r.served_by) << "\n";
  }
  out << "# rows=" << trace_.size() << " digest=0x" << std::hex
      << trace_digest(trace_) << std::dec << "\n";
}

namespace {

struct ParsedTrace {
  std::string profile;
  std::uint64_t fingerprint = 0;
  std::uint64_t seed = 0;
  std::string mode;
  unsigned jitter = 0;
  std::vector<std::pair<unsigned, std::string>> agents; // core, label
  std::vector<TraceRecord> records;
  std::uint64_t footer_rows = 0;
  std::uint64_t footer_digest = 0;
  bool footer_seen = false;
};

bool parse_kv(const std::string& line, const std::string& key, std::string& out) {
  size_t pos = line.find(key + "=");
  if (pos == std::string::npos) return false;
  size_t start = pos + key.size() + 1;
  size_t end = line.find(' ', start);
  out = line.substr(start, end == std::string::npos ? std::string::npos
                                                    : end - start);
  return true;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

ReplayResult replay_trace(const std::string& path) {
  ReplayResult res;
  std::ifstream in(path);
  if (!in) {
    res.error = "cannot open trace file '" + path + "'";
    return res;
  }
  ParsedTrace t;
  std::string line;
  bool version_ok = false, header_done = false;
  int lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (line[0] == '#') {
        if (line.find("cachelab-trace") != std::string::npos) {
          if (line.find(kTraceVersion) == std::string::npos) {
            res.error = "unsupported trace version: " + line.substr(2);
            return res;
          }
          version_ok = true;
        } else if (line.rfind("# agent ", 0) == 0) {
          std::string core_s, label;
          parse_kv(line, "core", core_s);
          parse_kv(line, "label", label);
          t.agents.emplace_back(std::stoul(core_s), label);
        } else if (line.find("rows=") != std::string::npos) {
          std::string rows_s, digest_s;
          parse_kv(line, "rows", rows_s);
          parse_kv(line, "digest", digest_s);
          t.footer_rows = std::stoull(rows_s);
          t.footer_digest = std::stoull(digest_s, nullptr, 0);
          t.footer_seen = true;
        } else if (line.find("profile=") != std::string::npos) {
          std::string fp;
          parse_kv(line, "profile", t.profile);
          if (parse_kv(line, "fingerprint", fp))
            t.fingerprint = std::stoull(fp, nullptr, 0);
        } else if (line.find("seed=") != std::string::npos) {
          std::string s, j;
          parse_kv(line, "seed", s);
          t.seed = std::stoull(s);
          parse_kv(line, "mode", t.mode);
          if (parse_kv(line, "jitter", j)) t.jitter = std::stoul(j);
        }
        continue;
      }
      if (!header_done) { // column header line
        header_done = true;
        continue;
      }
      auto f = split_csv(line);
      if (f.size() != 10)
        throw std::runtime_error("bad column count at line " +
                                 std::to_string(lineno));
      TraceRecord r;
      r.seq = std::stoull(f[0]);
      r.agent = std::stoi(f[1]);
      r.core = std::stoul(f[2]);
      auto k = event_kind_from(f[3]);
      if (!k) throw std::runtime_error("bad op kind at line " + std::to_string(lineno));
      r.kind = *k;
      r.addr = std::stoull(f[4], nullptr, 0);
      r.arg = std::stoull(f[5]);
      r.issue = std::stoull(f[6]);
      r.charged = std::stoull(f[7]);
      r.measured = std::stoull(f[8]);
      auto lv = level_from(f[9]);
      if (!lv) throw std::runtime_error("bad level at line " + std::to_string(lineno));
      r.served_by = *lv;
      t.records.push_back(r);
    }
  } catch (const std::exception& e) {
    res.error = std::string("trace parse error: ") + e.what();
    return res;
  }
  if (!version_ok) {
    res.error = "not a trace file (missing version header)";
    return res;
  }
  if (!t.footer_seen) {
    res.error = "truncated trace file: footer missing";
    return res;
  }
  if (t.footer_rows != t.records.size()) {
    res.error = "truncated trace file: footer says " +
                std::to_string(t.footer_rows) + " rows, found " +
                std::to_string(t.records.size());
    return res;
  }
  std::uint64_t digest = trace_digest(t.records);
  if (digest != t.footer_digest) {
    res.error = "trace digest mismatch: file corrupt or edited";
    return res;
  }

  MachineProfile profile;
  try {
    profile = resolve_profile(t.profile);
  } catch (const ProfileError& e) {
    res.error = e.what();
    return res;
  }
  if (profile.fingerprint() != t.fingerprint) {
    res.error = "profile '" + t.profile +
                "' no longer matches the fingerprint recorded in the trace";
    return res;
  }

  CacheHierarchy hier(profile, t.seed);
  Scheduler sched(hier, t.seed);
  sched.set_jitter(t.jitter);
  for (auto& [core, label] : t.agents) sched.port(core, label);

  for (size_t i = 0; i < t.records.size(); ++i) {
    const TraceRecord& r = t.records[i];
    if (r.agent < 0 || r.agent >= sched.lane_count()) {
      res.error = "row " + std::to_string(i) + ": unknown agent";
      return res;
    }
    AgentOp op;
    op.kind = r.kind;
    op.addr = r.addr;
    op.cycles = r.kind == AgentEventKind::Wait ? r.arg : 0;
    op.measured = r.kind == AgentEventKind::Read && r.arg == 1;
    sched.lanes_[r.agent].ready = r.issue;
    sched.lanes_[r.agent].done = false;
    OpResult got = sched.exec(r.agent, op);
    if (got.charged != r.charged || got.measured != r.measured ||
        (r.kind == AgentEventKind::Read && got.served_by != r.served_by)) {
      res.error = "row " + std::to_string(i) + ": outcome diverged (charged " +
                  std::to_string(got.charged) + " vs " +
                  std::to_string(r.charged) + ", served " +
                  to_string(got.served_by) + " vs " + to_string(r.served_by) +
                  ")";
      return res;
    }
  }
  res.ok = true;
  res.rows = t.records.size();
  res.digest = digest;
  return res;
}

}  // namespace cachelab
