#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cachelab/attacks.hpp"
#include "cachelab/profile.hpp"

namespace cachelab {

// Exact integer histogram over event values.
class Histogram {
 public:
  void add(std::uint64_t v);

  std::uint64_t total() const { return total_; }
  std::uint64_t count(std::uint64_t v) const;
  double fraction_at(std::uint64_t v) const;
  double mean() const;
  std::uint64_t max_value() const;
  const std::map<std::uint64_t, std::uint64_t>& bins() const { return bins_; }
  // Every recorded event sits in exactly one bin.
  bool mass_conserved() const;

 private:
  std::map<std::uint64_t, std::uint64_t> bins_;
  std::uint64_t total_ = 0;
  std::uint64_t sum_ = 0;
};

// ---------------------------------------------------------------------------
// AES victim under observation: per-encryption cost and miss distributions.

struct AesTelemetryOptions {
  std::optional<Technique> technique; // empty = victim runs undisturbed
  unsigned encryptions = 100000;
  unsigned warmup = 100; // encryptions dropped before the distributions
  unsigned monitored_line = 0;
  // 0 = strict alternation, one attack round per encryption. Otherwise the
  // attacker rounds are padded to this many cycles and run back to back
  // until the attacker clock catches the victim clock, so slow victims see
  // several rounds per encryption and fast ones may be skipped.
  std::uint64_t attack_period = 0;
  std::uint64_t seed = 1;
};

struct AesScenarioStats {
  std::string scenario;
  unsigned encryptions = 0;
  unsigned warmup = 0;
  Histogram misses;   // victim fetches from memory per encryption
  Histogram duration; // victim cycles per encryption
  double zero_miss_fraction = 0.0;
  double mean_misses = 0.0;
  double mean_duration = 0.0;
  // Average per-encryption split of the victim's reads by serving level.
  double served_l1 = 0.0;
  double served_l2 = 0.0;
  double served_llc = 0.0;
  double served_mem = 0.0;
};

AesScenarioStats run_aes_telemetry(const MachineProfile& prof,
                                   const AesTelemetryOptions& opts);

// ---------------------------------------------------------------------------
// RSA victim under observation: miss counts per fixed slice of victim time.

struct RsaTelemetryOptions {
  std::optional<Technique> technique;
  size_t exponent_bits = 2048;
  std::uint64_t sampling_period = 3000; // attack round pacing, victim cycles
  std::uint64_t cycles_per_sample = 0;  // 0 = take the profile's value
  unsigned steady_skip = 2; // leading windows excluded from the steady mean
  std::uint64_t seed = 1;
};

struct RsaTelemetrySeries {
  std::string scenario;
  std::uint64_t cycles_per_sample = 0;
  std::vector<std::uint64_t> misses; // victim fetches from memory per window
  unsigned steady_skip = 0;
  double steady_mean = 0.0;
};

RsaTelemetrySeries run_rsa_telemetry(const MachineProfile& prof,
                                     const RsaTelemetryOptions& opts);

// ---------------------------------------------------------------------------
// Writers. CSV carries the data; the JSON sidecar carries the scalars.

void write_histogram_csv(const std::string& path, const Histogram& h);
void write_aes_stats_json(const std::string& path, const AesScenarioStats& s);
void write_series_csv(const std::string& path, const RsaTelemetrySeries& s);
void write_series_json(const std::string& path, const RsaTelemetrySeries& s);

}  // namespace cachelab
