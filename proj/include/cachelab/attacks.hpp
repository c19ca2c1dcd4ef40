#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cachelab/profile.hpp"
#include "cachelab/scheduler.hpp"
#include "cachelab/victims.hpp"

namespace cachelab {

enum class Technique { ReloadRefresh, FlushReload, PrimeProbe };
enum class Verdict { NotAccessed, Accessed, Invalid };

const char* to_string(Technique t);
const char* to_string(Verdict v);
std::optional<Technique> technique_from_string(std::string_view s);

struct Sample {
  std::uint64_t cycle = 0;        // attacker clock when the round began; when
                                  // rounds are aligned to victim windows this
                                  // is the end of the window the verdict covers
  std::uint64_t reload_time = 0;  // timed target read net of fixed overhead,
                                  // or the whole probe pass for prime+probe
  std::uint64_t refresh_time = 0; // refresh pass duration, zero otherwise
  Verdict verdict = Verdict::NotAccessed;
};

struct AttackConfig {
  Addr target = 0;
  // Lines sharing the target's set and slice. The last one is the spare that
  // forces the eviction each round; the others refill the set.
  std::vector<Addr> eviction_set;
  std::uint64_t sampling_period = 0; // nonzero: pad each round to this length
  int target_slot = 0;               // 1 places the target second for noise
  bool mode2 = false;                // age-3 insertion variant, no flushes of
                                     // victim-reachable lines needed
};

// w distinct lines mapping to the target's set and slice, none equal to the
// target itself.
std::vector<Addr> build_attack_eviction_set(const MachineProfile& prof,
                                            Addr target, unsigned count);

// Observes one target line per round while putting the set back exactly as
// the round found it: evict, timed reload, then refresh the displaced ages.
class RRAttack {
 public:
  RRAttack(AgentPort& port, const MachineProfile& prof, AttackConfig cfg);

  // Runs initialize plus two quiet rounds and pins the fixed per-round
  // overhead of the timed window and the steady refresh duration. Leaves the
  // set in its steady layout.
  void calibrate();
  void initialize();
  Sample round();

  std::uint64_t overhead() const { return overhead_; }
  std::uint64_t refresh_bound() const { return refresh_bound_; }
  const AttackConfig& config() const { return cfg_; }

 private:
  Sample standard_round();
  Sample tolerant_round();
  Sample mode2_round();
  std::uint64_t refresh_pass(size_t first, size_t last);
  void pad_round(std::uint64_t began);

  AgentPort* port_;
  const MachineProfile* prof_;
  AttackConfig cfg_;
  std::uint64_t overhead_ = 0;
  std::uint64_t refresh_bound_ = 0;
};

// Classic flush-based probe: timed reload of the target, then flush it again.
class FRAttack {
 public:
  FRAttack(AgentPort& port, const MachineProfile& prof, AttackConfig cfg);

  void initialize(); // flush the target so round one starts from absence
  Sample round();

  const AttackConfig& config() const { return cfg_; }

 private:
  AgentPort* port_;
  const MachineProfile* prof_;
  AttackConfig cfg_;
};

// Fills the target's set with attacker lines and times a zig-zag probe pass
// that doubles as the next prime. Needs no shared memory with the victim.
class PPAttack {
 public:
  PPAttack(AgentPort& port, const MachineProfile& prof, AttackConfig cfg);

  // Primes the set, then times two quiet probe passes to pin the idle probe
  // duration and the detection threshold.
  void calibrate();
  void initialize();
  Sample round();

  std::uint64_t idle_probe() const { return idle_probe_; }
  std::uint64_t threshold() const { return threshold_; }
  const AttackConfig& config() const { return cfg_; }

 private:
  std::uint64_t probe_pass();

  AgentPort* port_;
  const MachineProfile* prof_;
  AttackConfig cfg_;
  std::vector<Addr> lines_; // prime lines, low way order
  bool forward_ = false;    // direction of the next probe pass
  std::uint64_t idle_probe_ = 0;
  std::uint64_t threshold_ = 0;
};

// Background agent that keeps touching lines of one set, for noise studies.
class NoiseAgent : public Agent {
 public:
  NoiseAgent(std::vector<Addr> lines, std::uint64_t mean_gap,
             std::uint64_t seed, std::uint64_t stop_at = UINT64_MAX);

  AgentOp next(const OpResult& prev) override;

 private:
  std::vector<Addr> lines_;
  std::uint64_t mean_gap_;
  CounterRng rng_;
  std::uint64_t stop_at_;
  std::uint64_t draws_ = 0;
  bool wait_next_ = true;
};

// ---------------------------------------------------------------------------
// End-to-end experiments. The victim runs in strict alternation with the
// attacker: each victim phase is played to completion on its own clock, then
// the attacker round observes the window and restores the set.

struct AesAttackOptions {
  Technique technique = Technique::ReloadRefresh;
  unsigned encryptions = 20000; // rounds per monitored line
  unsigned monitored_tables = 4;
  unsigned monitored_line = 0; // line index inside each table
  std::uint64_t seed = 1;
  bool random_key = true;
  std::array<std::uint8_t, 16> key{}; // used when random_key is false
  unsigned jitter = 0;
  std::string trace_path; // nonempty: record and write the op trace
};

struct AesAttackResult {
  std::array<std::uint8_t, 16> planted_key{};
  std::array<std::uint8_t, 16> recovered_key{};
  bool exact = false;
  bool ambiguous = false;
  unsigned encryptions = 0;
  std::uint64_t victim_misses = 0; // over the whole run
  std::uint64_t digest = 0;        // final hierarchy state digest
  std::array<std::vector<Sample>, 4> samples; // per monitored table
};

AesAttackResult run_aes_attack(const MachineProfile& prof,
                               const AesAttackOptions& opts);

struct RsaAttackOptions {
  Technique technique = Technique::ReloadRefresh;
  size_t exponent_bits = 2048;
  std::uint64_t seed = 1;
  std::uint64_t sampling_period = 3000;
  bool max_speed = false; // ignore the period and sample back to back
  bool consume_leading = false;
  unsigned op_cost = 0; // 0 = derive from the exponent width
  unsigned jitter = 0;
  std::string trace_path; // nonempty: record and write the op trace
};

struct RsaAttackResult {
  std::vector<std::uint8_t> planted_bits;
  std::vector<std::uint8_t> recovered_bits;
  double bit_accuracy = 0.0;
  unsigned executed_multiplies = 0;
  unsigned detected = 0; // windows judged Accessed
  unsigned correct = 0;  // detections whose window really held a multiply
  DetectionRates rates;
  bool resolution_warning = false;
  unsigned repaired = 0;
  unsigned op_cost = 0;
  std::uint64_t loop_start = 0;
  std::uint64_t digest = 0; // final hierarchy state digest
  std::vector<Sample> samples;
};

RsaAttackResult run_rsa_attack(const MachineProfile& prof,
                               const RsaAttackOptions& opts);

void write_samples_csv(const std::string& path,
                       const std::vector<Sample>& samples);

}  // namespace cachelab
