#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cachelab/profile.hpp"
#include "cachelab/scheduler.hpp"

namespace cachelab {

// ---------------------------------------------------------------------------
// AES-128 victim with byte-sliced lookup tables. Encryption follows the
// classic four-table layout: nine rounds of Te0..Te3 lookups, then a last
// round that reuses the tables masked down to their S-box byte.

struct AesTableRead {
  std::uint8_t table = 0; // 0..3
  std::uint8_t entry = 0; // 0..255
};

struct AesTrace {
  std::array<std::uint8_t, 16> ct{};
  std::vector<AesTableRead> reads; // exactly 160, in execution order
};

class AesVictim {
 public:
  AesVictim() = default;
  explicit AesVictim(const std::array<std::uint8_t, 16>& key) { set_key(key); }

  void set_key(const std::array<std::uint8_t, 16>& key);
  AesTrace encrypt(const std::array<std::uint8_t, 16>& pt) const;

  static const std::array<std::uint8_t, 256>& sbox();
  static const std::array<std::array<std::uint32_t, 256>, 4>& tables();

 private:
  std::array<std::uint32_t, 44> rk_{};
};

// Inverts the final-round key of the AES-128 schedule back to the cipher key.
std::array<std::uint8_t, 16> aes128_master_from_last_round(
    const std::array<std::uint8_t, 16>& k10);

// Table entries are 4 bytes; 16 entries share one 64-byte line.
Addr aes_entry_addr(const VictimConfig& v, unsigned table, unsigned entry);
Addr aes_line_addr(const VictimConfig& v, unsigned table, unsigned line);

// Ciphertext positions whose last-round lookup comes from the given table.
std::array<unsigned, 4> aes_positions_for_table(unsigned table);

// Pull agent: one encryption of a fresh random plaintext per phase, with a
// fence after each; ciphertexts are collected for the recovery stage.
class AesVictimAgent : public Agent {
 public:
  AesVictimAgent(const VictimConfig& v, const std::array<std::uint8_t, 16>& key,
                 std::uint64_t seed, unsigned encryptions);

  AgentOp next(const OpResult& prev) override;

  const std::vector<AesTrace>& traces() const { return traces_; }
  // Long telemetry runs only need the cache behavior, not the stored traces.
  void set_record_traces(bool on) { record_ = on; }
  unsigned completed() const { return completed_; }

 private:
  VictimConfig cfg_;
  AesVictim victim_;
  CounterRng rng_;
  unsigned target_ = 0;
  unsigned completed_ = 0;
  size_t read_idx_ = 0;
  bool fence_pending_ = false;
  bool record_ = true;
  AesTrace current_;
  std::vector<AesTrace> traces_;
};

// Two-sided last-round counting: candidate bytes consistent with an Accessed
// verdict gain, candidates implied by a NotAccessed verdict are penalized.
// The true byte is never penalized, which is what separates it.
class AesLastRoundRecovery {
 public:
  explicit AesLastRoundRecovery(unsigned monitored_line = 0)
      : line_(monitored_line) {}

  void add_sample(unsigned table, const std::array<std::uint8_t, 16>& ct,
                  bool accessed);

  struct ByteGuess {
    std::uint8_t value = 0;
    long long score = 0;
    long long margin = 0;
    bool ambiguous = false;
  };
  std::array<ByteGuess, 16> positions() const;
  std::array<std::uint8_t, 16> last_round_key() const;
  std::array<std::uint8_t, 16> master_key() const;
  bool any_ambiguous() const;

  static constexpr long long kMissPenalty = 12;

 private:
  unsigned line_;
  std::array<std::array<long long, 256>, 16> hit_{};
  std::array<std::array<long long, 256>, 16> miss_{};
};

// ---------------------------------------------------------------------------
// RSA square-and-multiply victim.

enum class RsaOp : std::uint8_t { Square, Reduce, Multiply };

const char* to_string(RsaOp op);

// MSB-first exponent bits to the executed operation sequence. Every bit costs
// a square and a reduction; set bits add a multiply and a second reduction.
// With consume_leading, the top set bit only initializes the accumulator.
std::vector<RsaOp> rsa_op_sequence(const std::vector<std::uint8_t>& bits,
                                   bool consume_leading);

unsigned rsa_auto_op_cost(size_t exponent_bits);
Addr rsa_op_addr(const VictimConfig& v, RsaOp op);

std::vector<std::uint8_t> random_exponent(size_t bits, std::uint64_t seed);

// Pull agent: an initialization burst over the data working set, then each
// operation as one code-line read padded to a fixed per-op cost.
class RsaVictimAgent : public Agent {
 public:
  RsaVictimAgent(const VictimConfig& v, std::vector<std::uint8_t> exponent_bits,
                 bool consume_leading, unsigned op_cost);

  AgentOp next(const OpResult& prev) override;

  std::uint64_t loop_start() const { return loop_start_; }
  unsigned multiplies_emitted() const { return multiplies_; }
  unsigned ops_emitted() const { return ops_emitted_; }
  unsigned op_cost() const { return op_cost_; }
  const std::vector<RsaOp>& ops() const { return ops_; }
  // Issue cycle of each executed multiply, for scoring detections.
  const std::vector<std::uint64_t>& multiply_cycles() const {
    return multiply_cycles_;
  }

 private:
  VictimConfig cfg_;
  std::vector<RsaOp> ops_;
  unsigned op_cost_;
  size_t init_idx_ = 0;
  size_t op_idx_ = 0;
  bool init_fenced_ = false;
  bool wait_pending_ = false;
  std::uint64_t loop_start_ = 0;
  unsigned multiplies_ = 0;
  unsigned ops_emitted_ = 0;
  std::vector<std::uint64_t> multiply_cycles_;
};

struct RsaBitSample {
  std::uint64_t cycle = 0; // end of the victim-time window this verdict covers
  bool accessed = false;
};

struct RsaDecodeResult {
  std::vector<std::uint8_t> bits;
  bool resolution_warning = false; // sampling too coarse for one op per window
  unsigned repaired = 0;           // detections reconstructed from bit count
};

// Phase range [lo, hi) modulo the sampling period, measured against the
// sample-cycle grid; marks stretches of each window where a multiply can
// escape detection.
struct PhaseWindow {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
};

// Every multiply issues at loop_start + 2c (mod 2c), so while one iteration
// outlasts the sampling period each Accessed window pins an exact multiply
// instant; gaps between instants are whole numbers of square-only iterations.
// When the emitted bit count overshoots total_bits, the surplus is one per
// undetected multiply; those are planted back at in-gap lattice slots,
// preferring slots whose phase falls in a declared blind window.
RsaDecodeResult rsa_recover_bits(const std::vector<RsaBitSample>& samples,
                                 std::uint64_t sampling_period,
                                 unsigned op_cost, size_t total_bits,
                                 std::uint64_t loop_start,
                                 const std::vector<PhaseWindow>& blind = {});

struct DetectionRates {
  double true_positive = 0.0;
  double false_positive = 0.0;
};

// TP = correctly detected / executed; FP = spurious detections / detections.
DetectionRates tp_fp(unsigned executed, unsigned detected, unsigned correct);

std::string bits_to_hex(const std::vector<std::uint8_t>& bits);

}  // namespace cachelab
