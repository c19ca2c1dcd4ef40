#include "cachelab/attacks.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <memory>
#include <stdexcept>

#include "cachelab/address.hpp"
#include "cachelab/hierarchy.hpp"
#include "cachelab/rng.hpp"

namespace cachelab {

const char* to_string(Technique t) {
  switch (t) {
    case Technique::ReloadRefresh: return "rr";
    case Technique::FlushReload: return "fr";
    case Technique::PrimeProbe: return "pp";
  }
  return "?";
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::NotAccessed: return "not_accessed";
    case Verdict::Accessed: return "accessed";
    case Verdict::Invalid: return "invalid";
  }
  return "?";
}

std::optional<Technique> technique_from_string(std::string_view s) {
  if (s == "rr" || s == "reload-refresh") return Technique::ReloadRefresh;
  if (s == "fr" || s == "flush-reload") return Technique::FlushReload;
  if (s == "pp" || s == "prime-probe") return Technique::PrimeProbe;
  return std::nullopt;
}

std::vector<Addr> build_attack_eviction_set(const MachineProfile& prof,
                                            Addr target, unsigned count) {
  CacheAddress t = decompose(target, prof.llc);
  std::vector<Addr> out;
  out.reserve(count);
  for (std::uint64_t ord = 0; out.size() < count; ++ord) {
    Addr a = make_line_addr(prof.llc, t.slice, t.set_index, ord);
    if (a != target) out.push_back(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// RELOAD+REFRESH

RRAttack::RRAttack(AgentPort& port, const MachineProfile& prof,
                   AttackConfig cfg)
    : port_(&port), prof_(&prof), cfg_(std::move(cfg)) {
  if (cfg_.eviction_set.size() < prof_->llc.ways)
    throw std::invalid_argument("eviction set smaller than associativity");
}

void RRAttack::initialize() {
  const unsigned w = prof_->llc.ways;
  // Reload order decides the way layout: a fill pass claims the set (pushing
  // out any foreign line), then flush and reload place the members
  // deterministically in the leftmost invalid ways.
  std::vector<Addr> order;
  if (cfg_.mode2) {
    for (unsigned i = 0; i < w; ++i) order.push_back(cfg_.eviction_set[i]);
    for (Addr a : order) port_->read(a, false);
    return;
  }
  if (cfg_.target_slot == 1) {
    order.push_back(cfg_.eviction_set[0]);
    order.push_back(cfg_.target);
    for (unsigned i = 1; i + 1 < w; ++i) order.push_back(cfg_.eviction_set[i]);
  } else {
    order.push_back(cfg_.target);
    for (unsigned i = 0; i + 1 < w; ++i) order.push_back(cfg_.eviction_set[i]);
  }
  for (Addr a : order) port_->read(a, false);
  for (Addr a : order) port_->flush(a);
  for (Addr a : order) port_->read(a, false);
}

void RRAttack::calibrate() {
  initialize();
  if (cfg_.mode2) {
    // The single-read round needs no timing baseline; two rounds only settle
    // the set back into its steady layout.
    round();
    round();
    overhead_ = 0;
    refresh_bound_ = 0;
    return;
  }
  round();
  Sample s = round();
  // Quiet rounds: the timed window is overhead plus one memory fetch of the
  // target, and the refresh pass runs at its steady duration.
  overhead_ = s.reload_time - prof_->timing.mem_latency;
  unsigned span = prof_->timing.mem_latency - prof_->timing.llc_latency;
  unsigned tolerated = cfg_.target_slot == 1 ? 2u : 0u;
  refresh_bound_ = s.refresh_time + tolerated * span + span / 2;
}

std::uint64_t RRAttack::refresh_pass(size_t first, size_t last) {
  std::uint64_t total = 0;
  for (size_t i = first; i <= last; ++i)
    total += port_->read(cfg_.eviction_set[i], false).charged;
  return total;
}

void RRAttack::pad_round(std::uint64_t began) {
  if (cfg_.sampling_period == 0) return;
  std::uint64_t spent = port_->now() - began;
  if (spent < cfg_.sampling_period) port_->wait(cfg_.sampling_period - spent);
}

Sample RRAttack::round() {
  if (cfg_.mode2) return mode2_round();
  if (cfg_.target_slot == 1) return tolerant_round();
  return standard_round();
}

Sample RRAttack::standard_round() {
  const unsigned w = prof_->llc.ways;
  const Addr spare = cfg_.eviction_set[w - 1];
  std::uint64_t began = port_->now();

  port_->read(spare, false); // the miss ages the set and evicts the candidate
  port_->flush(spare);
  OpResult timed = port_->read(cfg_.target, true);
  port_->flush(cfg_.target);
  OpResult back = port_->read(cfg_.target, false); // reinsert at the base age
  std::uint64_t raw = port_->now() - began;
  if (back.merged) {
    // The reinsert landed on a fill in flight and skipped the fresh insert;
    // redo it so the target sits at the insertion age again.
    port_->flush(cfg_.target);
    port_->read(cfg_.target, false);
  }

  port_->read(cfg_.eviction_set[0], false); // second-place member comes back
  std::uint64_t refresh = refresh_pass(1, w - 2);

  Sample s;
  s.cycle = began;
  std::int64_t net = static_cast<std::int64_t>(raw) -
                     static_cast<std::int64_t>(overhead_) +
                     static_cast<std::int64_t>(timed.measured) -
                     static_cast<std::int64_t>(timed.charged);
  s.reload_time = net > 0 ? static_cast<std::uint64_t>(net) : 0;
  s.refresh_time = refresh;
  bool hit = timed.merged || s.reload_time < prof_->timing.mem_threshold;
  s.verdict = hit ? Verdict::Accessed : Verdict::NotAccessed;
  if (refresh_bound_ != 0 && refresh > refresh_bound_)
    s.verdict = Verdict::Invalid;
  pad_round(began);
  return s;
}

Sample RRAttack::tolerant_round() {
  const unsigned w = prof_->llc.ways;
  const Addr spare = cfg_.eviction_set[w - 1];
  std::uint64_t began = port_->now();

  port_->read(spare, false);
  port_->flush(spare);
  OpResult timed = port_->read(cfg_.target, true);
  port_->flush(cfg_.target);
  OpResult back = port_->read(cfg_.target, false);
  std::uint64_t raw = port_->now() - began;
  if (back.merged) {
    port_->flush(cfg_.target);
    port_->read(cfg_.target, false);
  }

  // First the stable members, then the front line whose miss throws the
  // absorbed noise line out of the set again.
  std::uint64_t refresh = refresh_pass(1, w - 2);
  refresh += port_->read(cfg_.eviction_set[0], false).charged;

  Sample s;
  s.cycle = began;
  std::int64_t net = static_cast<std::int64_t>(raw) -
                     static_cast<std::int64_t>(overhead_) +
                     static_cast<std::int64_t>(timed.measured) -
                     static_cast<std::int64_t>(timed.charged);
  s.reload_time = net > 0 ? static_cast<std::uint64_t>(net) : 0;
  s.refresh_time = refresh;
  bool hit = timed.merged || s.reload_time < prof_->timing.mem_threshold;
  s.verdict = hit ? Verdict::Accessed : Verdict::NotAccessed;
  if (refresh_bound_ != 0 && refresh > refresh_bound_)
    s.verdict = Verdict::Invalid;
  pad_round(began);
  return s;
}

Sample RRAttack::mode2_round() {
  std::uint64_t began = port_->now();
  const Addr probe = cfg_.eviction_set[0];
  OpResult timed = port_->read(probe, true);
  bool evicted =
      !timed.merged && timed.measured >= prof_->timing.mem_threshold;
  if (!evicted) {
    // The hit promoted the probe line to age zero; flush and refetch so it
    // sits at the insertion age and stays the next eviction candidate.
    port_->flush(probe);
    port_->read(probe, false);
  }
  Sample s;
  s.cycle = began;
  s.reload_time = timed.measured;
  s.verdict = evicted ? Verdict::Accessed : Verdict::NotAccessed;
  pad_round(began);
  return s;
}

// ---------------------------------------------------------------------------
// FLUSH+RELOAD

FRAttack::FRAttack(AgentPort& port, const MachineProfile& prof,
                   AttackConfig cfg)
    : port_(&port), prof_(&prof), cfg_(std::move(cfg)) {}

void FRAttack::initialize() { port_->flush(cfg_.target); }

Sample FRAttack::round() {
  std::uint64_t began = port_->now();
  OpResult timed = port_->read(cfg_.target, true);
  Sample s;
  s.cycle = began;
  s.reload_time = timed.measured;
  bool hit = timed.merged || timed.measured < prof_->timing.mem_threshold;
  s.verdict = hit ? Verdict::Accessed : Verdict::NotAccessed;
  port_->flush(cfg_.target);
  if (cfg_.sampling_period != 0) {
    std::uint64_t spent = port_->now() - began;
    if (spent < cfg_.sampling_period)
      port_->wait(cfg_.sampling_period - spent);
  }
  return s;
}

// ---------------------------------------------------------------------------
// PRIME+PROBE

PPAttack::PPAttack(AgentPort& port, const MachineProfile& prof,
                   AttackConfig cfg)
    : port_(&port), prof_(&prof), cfg_(std::move(cfg)) {
  if (cfg_.eviction_set.size() < prof_->llc.ways)
    throw std::invalid_argument("prime set smaller than associativity");
  lines_.assign(cfg_.eviction_set.begin(),
                cfg_.eviction_set.begin() + prof_->llc.ways);
}

void PPAttack::initialize() {
  for (Addr a : lines_) port_->read(a, false);
  forward_ = false; // the first probe walks back down
}

std::uint64_t PPAttack::probe_pass() {
  std::uint64_t total = 0;
  if (forward_) {
    for (size_t i = 0; i < lines_.size(); ++i)
      total += port_->read(lines_[i], true).measured;
  } else {
    for (size_t i = lines_.size(); i-- > 0;)
      total += port_->read(lines_[i], true).measured;
  }
  forward_ = !forward_;
  return total;
}

void PPAttack::calibrate() {
  initialize();
  probe_pass(); // settles the private caches behind the zig-zag
  idle_probe_ = probe_pass();
  threshold_ = idle_probe_ +
               (prof_->timing.mem_latency - prof_->timing.llc_latency) / 2;
}

Sample PPAttack::round() {
  std::uint64_t began = port_->now();
  std::uint64_t probe = probe_pass();
  Sample s;
  s.cycle = began;
  s.reload_time = probe;
  s.verdict = probe >= threshold_ ? Verdict::Accessed : Verdict::NotAccessed;
  if (cfg_.sampling_period != 0) {
    std::uint64_t spent = port_->now() - began;
    if (spent < cfg_.sampling_period)
      port_->wait(cfg_.sampling_period - spent);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Noise

NoiseAgent::NoiseAgent(std::vector<Addr> lines, std::uint64_t mean_gap,
                       std::uint64_t seed, std::uint64_t stop_at)
    : lines_(std::move(lines)),
      mean_gap_(mean_gap),
      rng_(seed, 0x6e6f697365ull),
      stop_at_(stop_at) {}

AgentOp NoiseAgent::next(const OpResult& prev) {
  if (lines_.empty() || prev.now >= stop_at_) return AgentOp::done();
  if (wait_next_) {
    wait_next_ = false;
    return AgentOp::wait(rng_.below(2 * mean_gap_ + 1));
  }
  wait_next_ = true;
  ++draws_;
  return AgentOp::read(lines_[rng_.below(lines_.size())]);
}

// ---------------------------------------------------------------------------
// AES experiment

namespace {

std::array<std::uint8_t, 16> pick_key(const AesAttackOptions& opts) {
  if (!opts.random_key) return opts.key;
  std::array<std::uint8_t, 16> key{};
  CounterRng rng(opts.seed, 0x6165736bull);
  for (auto& b : key) b = static_cast<std::uint8_t>(rng.below(256));
  return key;
}

struct TechniqueRunner {
  std::vector<std::unique_ptr<RRAttack>> rr;
  std::vector<std::unique_ptr<FRAttack>> fr;
  std::vector<std::unique_ptr<PPAttack>> pp;
  std::vector<std::function<Sample()>> rounds;

  void add(Technique t, AgentPort& port, const MachineProfile& prof,
           AttackConfig cfg) {
    switch (t) {
      case Technique::ReloadRefresh: {
        cfg.eviction_set =
            build_attack_eviction_set(prof, cfg.target, prof.llc.ways);
        auto a = std::make_unique<RRAttack>(port, prof, std::move(cfg));
        a->calibrate();
        rounds.push_back([p = a.get()] { return p->round(); });
        rr.push_back(std::move(a));
        break;
      }
      case Technique::FlushReload: {
        auto a = std::make_unique<FRAttack>(port, prof, std::move(cfg));
        a->initialize();
        rounds.push_back([p = a.get()] { return p->round(); });
        fr.push_back(std::move(a));
        break;
      }
      case Technique::PrimeProbe: {
        cfg.eviction_set =
            build_attack_eviction_set(prof, cfg.target, prof.llc.ways);
        auto a = std::make_unique<PPAttack>(port, prof, std::move(cfg));
        a->calibrate();
        rounds.push_back([p = a.get()] { return p->round(); });
        pp.push_back(std::move(a));
        break;
      }
    }
  }
};

}  // namespace

AesAttackResult run_aes_attack(const MachineProfile& prof,
                               const AesAttackOptions& opts) {
  CacheHierarchy hier(prof, opts.seed);
  Scheduler sched(hier, opts.seed);
  sched.set_jitter(opts.jitter);
  if (!opts.trace_path.empty()) sched.enable_trace(true);
  AgentPort port = sched.port(0, "attacker");

  AesAttackResult result;
  result.planted_key = pick_key(opts);

  auto agent = std::make_unique<AesVictimAgent>(
      prof.victim, result.planted_key, opts.seed + 17, opts.encryptions);
  AesVictimAgent* victim = agent.get();
  unsigned vcore = prof.cores > 1 ? 1 : 0;
  int vlane = sched.add_agent(std::move(agent), vcore, "victim", true);

  unsigned tables = std::min(opts.monitored_tables, 4u);
  TechniqueRunner runner;
  for (unsigned t = 0; t < tables; ++t) {
    AttackConfig cfg;
    cfg.target = aes_line_addr(prof.victim, t, opts.monitored_line);
    cfg.mode2 = prof.insertion == InsertionMode::Mode2Fixed;
    runner.add(opts.technique, port, prof, std::move(cfg));
  }

  AesLastRoundRecovery recovery(opts.monitored_line);
  std::uint64_t miss_base = sched.counters(vlane).llc_misses;
  for (unsigned e = 0; e < opts.encryptions && !sched.lane_done(vlane); ++e) {
    std::uint64_t vclock = sched.run_phase(vlane, port.now());
    port.advance_to(std::max(port.now(), vclock));
    const AesTrace& tr = victim->traces()[e];
    for (unsigned t = 0; t < tables; ++t) {
      Sample s = runner.rounds[t]();
      s.cycle = vclock;
      result.samples[t].push_back(s);
      if (s.verdict != Verdict::Invalid)
        recovery.add_sample(t, tr.ct, s.verdict == Verdict::Accessed);
    }
    ++result.encryptions;
  }

  result.victim_misses = sched.counters(vlane).llc_misses - miss_base;
  result.recovered_key = recovery.master_key();
  result.ambiguous = recovery.any_ambiguous();
  result.exact = tables == 4 && !result.ambiguous &&
                 result.recovered_key == result.planted_key;
  sched.quiesce();
  result.digest = hier.state_digest();
  if (!opts.trace_path.empty())
    sched.write_trace(opts.trace_path, to_string(opts.technique));
  return result;
}

// ---------------------------------------------------------------------------
// RSA experiment

RsaAttackResult run_rsa_attack(const MachineProfile& prof,
                               const RsaAttackOptions& opts) {
  CacheHierarchy hier(prof, opts.seed);
  Scheduler sched(hier, opts.seed);
  sched.set_jitter(opts.jitter);
  if (!opts.trace_path.empty()) sched.enable_trace(true);
  AgentPort port = sched.port(0, "attacker");

  RsaAttackResult result;
  result.planted_bits =
      random_exponent(opts.exponent_bits, opts.seed ^ 0x52534131ull);
  result.op_cost =
      opts.op_cost != 0 ? opts.op_cost : rsa_auto_op_cost(opts.exponent_bits);

  auto agent = std::make_unique<RsaVictimAgent>(
      prof.victim, result.planted_bits, opts.consume_leading, result.op_cost);
  RsaVictimAgent* victim = agent.get();
  unsigned vcore = prof.cores > 1 ? 1 : 0;
  int vlane = sched.add_agent(std::move(agent), vcore, "victim", true);

  // The victim's warm-up pass runs first so the attacker's set preparation
  // sweeps its stray line out of the monitored set.
  std::uint64_t loop_start = sched.run_phase(vlane, 0);
  result.loop_start = loop_start;

  AttackConfig cfg;
  cfg.target = rsa_op_addr(prof.victim, RsaOp::Multiply);
  cfg.mode2 = prof.insertion == InsertionMode::Mode2Fixed;
  TechniqueRunner runner;
  runner.add(opts.technique, port, prof, std::move(cfg));
  auto& attack_round = runner.rounds[0];

  std::uint64_t period = opts.sampling_period;
  if (opts.max_speed) {
    port.advance_to(std::max(port.now(), loop_start));
    std::uint64_t prev = loop_start;
    while (true) {
      std::uint64_t boundary = std::max(port.now(), prev + 1);
      sched.run_phase_until(vlane, boundary);
      port.advance_to(std::max(port.now(), boundary));
      Sample s = attack_round();
      s.cycle = boundary;
      result.samples.push_back(s);
      prev = boundary;
      if (sched.lane_done(vlane)) break;
    }
  } else {
    for (std::uint64_t k = 1;; ++k) {
      std::uint64_t boundary = loop_start + k * period;
      sched.run_phase_until(vlane, boundary);
      port.advance_to(std::max(port.now(), boundary));
      Sample s = attack_round();
      s.cycle = boundary;
      result.samples.push_back(s);
      if (sched.lane_done(vlane)) break;
    }
  }

  // Score detections against the executed multiplies, window by window.
  const std::vector<std::uint64_t>& mul = victim->multiply_cycles();
  result.executed_multiplies = static_cast<unsigned>(mul.size());
  std::uint64_t begin = loop_start;
  size_t mi = 0;
  for (const Sample& s : result.samples) {
    size_t in_window = 0;
    while (mi < mul.size() && mul[mi] <= s.cycle) {
      if (mul[mi] > begin) ++in_window;
      ++mi;
    }
    if (s.verdict == Verdict::Accessed) {
      ++result.detected;
      if (in_window > 0) ++result.correct;
    }
    begin = s.cycle;
  }
  result.rates = tp_fp(result.executed_multiplies, result.detected,
                       result.correct);

  std::vector<RsaBitSample> bit_samples;
  bit_samples.reserve(result.samples.size());
  for (const Sample& s : result.samples)
    bit_samples.push_back({s.cycle, s.verdict == Verdict::Accessed});
  RsaDecodeResult decoded = rsa_recover_bits(
      bit_samples, opts.max_speed ? 0 : period, result.op_cost,
      result.planted_bits.size(), loop_start);
  result.recovered_bits = std::move(decoded.bits);
  result.resolution_warning = decoded.resolution_warning;
  result.repaired = decoded.repaired;

  size_t match = 0;
  for (size_t i = 0; i < result.planted_bits.size(); ++i)
    if (i < result.recovered_bits.size() &&
        result.recovered_bits[i] == result.planted_bits[i])
      ++match;
  result.bit_accuracy = result.planted_bits.empty()
                            ? 0.0
                            : static_cast<double>(match) /
                                  static_cast<double>(result.planted_bits.size());
  sched.quiesce();
  result.digest = hier.state_digest();
  if (!opts.trace_path.empty())
    sched.write_trace(opts.trace_path, to_string(opts.technique));
  return result;
}

void write_samples_csv(const std::string& path,
                       const std::vector<Sample>& samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "cycle,reload_time,refresh_time,verdict\n";
  for (const Sample& s : samples)
    out << s.cycle << ',' << s.reload_time << ',' << s.refresh_time << ','
        << to_string(s.verdict) << '\n';
}

}  // namespace cachelab
