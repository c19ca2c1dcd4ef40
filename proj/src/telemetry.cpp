#include "cachelab/telemetry.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <memory>
#include <stdexcept>

#include "cachelab/hierarchy.hpp"
#include "cachelab/rng.hpp"
#include "cachelab/scheduler.hpp"
#include "cachelab/victims.hpp"

namespace cachelab {

void Histogram::add(std::uint64_t v) {
  ++bins_[v];
  ++total_;
  sum_ += v;
}

std::uint64_t Histogram::count(std::uint64_t v) const {
  auto it = bins_.find(v);
  return it == bins_.end() ? 0 : it->second;
}

double Histogram::fraction_at(std::uint64_t v) const {
  return total_ == 0 ? 0.0
                     : static_cast<double>(count(v)) /
                           static_cast<double>(total_);
}

double Histogram::mean() const {
  return total_ == 0 ? 0.0
                     : static_cast<double>(sum_) / static_cast<double>(total_);
}

std::uint64_t Histogram::max_value() const {
  return bins_.empty() ? 0 : bins_.rbegin()->first;
}

bool Histogram::mass_conserved() const {
  std::uint64_t n = 0;
  for (const auto& [v, c] : bins_) n += c;
  return n == total_;
}

namespace {

// One attack instance against one line, bound behind a uniform round call.
struct BoundAttack {
  std::unique_ptr<RRAttack> rr;
  std::unique_ptr<FRAttack> fr;
  std::unique_ptr<PPAttack> pp;
  std::function<Sample()> round;

  void bind(Technique t, AgentPort& port, const MachineProfile& prof,
            AttackConfig cfg) {
    switch (t) {
      case Technique::ReloadRefresh:
        cfg.eviction_set =
            build_attack_eviction_set(prof, cfg.target, prof.llc.ways);
        rr = std::make_unique<RRAttack>(port, prof, std::move(cfg));
        rr->calibrate();
        round = [p = rr.get()] { return p->round(); };
        break;
      case Technique::FlushReload:
        fr = std::make_unique<FRAttack>(port, prof, std::move(cfg));
        fr->initialize();
        round = [p = fr.get()] { return p->round(); };
        break;
      case Technique::PrimeProbe:
        cfg.eviction_set =
            build_attack_eviction_set(prof, cfg.target, prof.llc.ways);
        pp = std::make_unique<PPAttack>(port, prof, std::move(cfg));
        pp->calibrate();
        round = [p = pp.get()] { return p->round(); };
        break;
    }
  }
};

std::array<std::uint8_t, 16> telemetry_key(std::uint64_t seed) {
  std::array<std::uint8_t, 16> key{};
  CounterRng rng(seed, 0x74656c6bull);
  for (auto& b : key) b = static_cast<std::uint8_t>(rng.below(256));
  return key;
}

}  // namespace

AesScenarioStats run_aes_telemetry(const MachineProfile& prof,
                                   const AesTelemetryOptions& opts) {
  CacheHierarchy hier(prof, opts.seed);
  Scheduler sched(hier, opts.seed);
  AgentPort port = sched.port(0, "attacker");

  AesScenarioStats out;
  out.scenario = opts.technique ? to_string(*opts.technique) : "noattack";
  out.warmup = opts.warmup;

  auto agent = std::make_unique<AesVictimAgent>(
      prof.victim, telemetry_key(opts.seed), opts.seed + 17, opts.encryptions);
  agent->set_record_traces(false);
  unsigned vcore = prof.cores > 1 ? 1 : 0;
  int vlane = sched.add_agent(std::move(agent), vcore, "victim", true);

  BoundAttack attack;
  if (opts.technique) {
    AttackConfig cfg;
    cfg.target = aes_line_addr(prof.victim, 0, opts.monitored_line);
    cfg.sampling_period = opts.attack_period;
    cfg.mode2 = prof.insertion == InsertionMode::Mode2Fixed;
    attack.bind(*opts.technique, port, prof, std::move(cfg));
  }

  const PerfCounters& vc = sched.counters(vlane);
  std::uint64_t counted = 0;
  std::uint64_t prev_clock = 0;
  double l1 = 0, l2 = 0, llc = 0, mem = 0;
  for (unsigned e = 0; e < opts.encryptions && !sched.lane_done(vlane); ++e) {
    std::uint64_t start = std::max(prev_clock, port.now());
    PerfCounters before = vc;
    std::uint64_t vclock = sched.run_phase(vlane, port.now());
    port.advance_to(std::max(port.now(), vclock));
    if (e >= opts.warmup) {
      out.misses.add(vc.llc_misses - before.llc_misses);
      out.duration.add(vclock - start);
      l1 += static_cast<double>(vc.l1_hits - before.l1_hits);
      l2 += static_cast<double>(vc.l2_hits - before.l2_hits);
      llc += static_cast<double>(vc.llc_hits - before.llc_hits);
      mem += static_cast<double>(vc.llc_misses - before.llc_misses);
      ++counted;
    }
    if (attack.round) {
      if (opts.attack_period == 0) {
        attack.round();
      } else {
        while (port.now() < vclock) attack.round();
      }
    }
    prev_clock = vclock;
    ++out.encryptions;
  }

  if (counted > 0) {
    double n = static_cast<double>(counted);
    out.served_l1 = l1 / n;
    out.served_l2 = l2 / n;
    out.served_llc = llc / n;
    out.served_mem = mem / n;
  }
  out.zero_miss_fraction = out.misses.fraction_at(0);
  out.mean_misses = out.misses.mean();
  out.mean_duration = out.duration.mean();
  return out;
}

RsaTelemetrySeries run_rsa_telemetry(const MachineProfile& prof,
                                     const RsaTelemetryOptions& opts) {
  CacheHierarchy hier(prof, opts.seed);
  Scheduler sched(hier, opts.seed);
  AgentPort port = sched.port(0, "attacker");

  RsaTelemetrySeries out;
  out.scenario = opts.technique ? to_string(*opts.technique) : "noattack";
  out.cycles_per_sample = opts.cycles_per_sample != 0
                              ? opts.cycles_per_sample
                              : prof.timing.cycles_per_sample;
  out.steady_skip = opts.steady_skip;

  std::vector<std::uint8_t> bits =
      random_exponent(opts.exponent_bits, opts.seed ^ 0x52534131ull);
  unsigned op_cost = prof.victim.rsa_op_cost != 0
                         ? prof.victim.rsa_op_cost
                         : rsa_auto_op_cost(opts.exponent_bits);
  auto agent =
      std::make_unique<RsaVictimAgent>(prof.victim, bits, false, op_cost);
  unsigned vcore = prof.cores > 1 ? 1 : 0;
  int vlane = sched.add_agent(std::move(agent), vcore, "victim", true);
  int sampler = sched.add_sampler(vlane, out.cycles_per_sample);

  std::uint64_t loop_start = sched.run_phase(vlane, 0);

  if (opts.technique) {
    AttackConfig cfg;
    cfg.target = rsa_op_addr(prof.victim, RsaOp::Multiply);
    cfg.mode2 = prof.insertion == InsertionMode::Mode2Fixed;
    BoundAttack attack;
    attack.bind(*opts.technique, port, prof, std::move(cfg));
    for (std::uint64_t k = 1; !sched.lane_done(vlane); ++k) {
      std::uint64_t boundary = loop_start + k * opts.sampling_period;
      std::uint64_t vclock = sched.run_phase_until(vlane, boundary);
      port.advance_to(std::max(port.now(), boundary));
      attack.round();
      if (sched.lane_done(vlane)) {
        out.misses = sched.finish_sampler(sampler, vclock);
        break;
      }
    }
  } else {
    std::uint64_t vclock = loop_start;
    while (!sched.lane_done(vlane))
      vclock = sched.run_phase_until(vlane, UINT64_MAX);
    out.misses = sched.finish_sampler(sampler, vclock);
  }

  if (out.misses.size() > opts.steady_skip) {
    double acc = 0;
    for (size_t i = opts.steady_skip; i < out.misses.size(); ++i)
      acc += static_cast<double>(out.misses[i]);
    out.steady_mean =
        acc / static_cast<double>(out.misses.size() - opts.steady_skip);
  }
  return out;
}

void write_histogram_csv(const std::string& path, const Histogram& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "value,count\n";
  for (const auto& [v, c] : h.bins()) out << v << ',' << c << '\n';
}

void write_aes_stats_json(const std::string& path, const AesScenarioStats& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "{\n"
      << "  \"scenario\": \"" << s.scenario << "\",\n"
      << "  \"encryptions\": " << s.encryptions << ",\n"
      << "  \"warmup\": " << s.warmup << ",\n"
      << "  \"zero_miss_fraction\": " << s.zero_miss_fraction << ",\n"
      << "  \"mean_misses\": " << s.mean_misses << ",\n"
      << "  \"mean_duration\": " << s.mean_duration << ",\n"
      << "  \"served_l1\": " << s.served_l1 << ",\n"
      << "  \"served_l2\": " << s.served_l2 << ",\n"
      << "  \"served_llc\": " << s.served_llc << ",\n"
      << "  \"served_mem\": " << s.served_mem << "\n"
      << "}\n";
}

void write_series_csv(const std::string& path, const RsaTelemetrySeries& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "window,misses\n";
  for (size_t i = 0; i < s.misses.size(); ++i)
    out << i << ',' << s.misses[i] << '\n';
}

void write_series_json(const std::string& path, const RsaTelemetrySeries& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "{\n"
      << "  \"scenario\": \"" << s.scenario << "\",\n"
      << "  \"cycles_per_sample\": " << s.cycles_per_sample << ",\n"
      << "  \"windows\": " << s.misses.size() << ",\n"
      << "  \"steady_skip\": " << s.steady_skip << ",\n"
      << "  \"steady_mean\": " << s.steady_mean << "\n"
      << "}\n";
}

}  // namespace cachelab
