#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cachelab/address.hpp"

namespace cachelab {

struct ProfileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class InsertionMode { Mode1Fixed, Mode2Fixed, SetDueling };

const char* to_string(InsertionMode m);

struct TimingConfig {
  unsigned l1_latency = 4;
  unsigned l2_latency = 12;
  unsigned llc_latency = 105;
  unsigned mem_latency = 345;
  unsigned flush_latency = 30;
  unsigned ll_threshold = 90;   // below: served by a private level
  unsigned mem_threshold = 300; // at or above: served by memory
  unsigned cycles_per_sample = 100000; // telemetry sampling period (100us)
};

struct PolicyConfig {
  std::string llc_policy = "quadage_m1"; // used when insertion mode is fixed
  std::string l1_policy = "lru";
  std::string l2_policy = "lru";
  std::string aging = "rrip";            // rrip | none
  std::string hit_promotion = "decrement"; // decrement | to_zero
  double brrip_epsilon = 1.0 / 32.0;
  unsigned psel_bits = 10;
  unsigned psel_init = 512;
  // Leader set indices, one entry per slice (entry i belongs to slice i).
  std::vector<unsigned> mode1_leaders;
  std::vector<unsigned> mode2_leaders;
};

struct VictimConfig {
  Addr aes_table_base = 0x200000;
  Addr rsa_code_base = 0x400000;  // square at +0, reduce at +64, multiply at +128
  Addr rsa_data_base = 0x600000;
  unsigned rsa_init_lines = 192;
  unsigned rsa_op_cost = 0; // 0 = derive from modulus width
};

struct MachineProfile {
  std::string name = "default";
  std::string generation; // free-text label, e.g. "4th"
  unsigned cores = 2;
  CacheGeometry l1{64, 8, 1, 4};
  CacheGeometry l2{512, 8, 1, 12};
  CacheGeometry llc{1024, 12, 1, 105};
  InsertionMode insertion = InsertionMode::Mode1Fixed;
  TimingConfig timing;
  PolicyConfig policy;
  VictimConfig victim;

  void validate() const;           // throws ProfileError
  std::uint64_t fingerprint() const;
  std::string summary() const;
};

std::vector<std::string> builtin_profile_names();
MachineProfile builtin_profile(const std::string& name); // throws ProfileError

// Parses the TOML-style key/value text of a profile file. Unknown sections or
// keys are errors so that typos fail fast.
MachineProfile parse_profile(const std::string& text, const std::string& origin);
MachineProfile load_profile_file(const std::string& path);

// Resolution order: explicit path (contains '/' or ends in .toml), then
// $CACHELAB_PROFILE_DIR/<name>.toml, then ./profiles/<name>.toml, then the
// builtin table.
MachineProfile resolve_profile(const std::string& name_or_path);

std::string profile_to_toml(const MachineProfile& p);

}  // namespace cachelab
