#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cachelab/address.hpp"
#include "cachelab/attacks.hpp"
#include "cachelab/hierarchy.hpp"
#include "cachelab/inference.hpp"
#include "cachelab/policy.hpp"
#include "cachelab/profile.hpp"
#include "cachelab/scheduler.hpp"
#include "cachelab/telemetry.hpp"
#include "cachelab/victims.hpp"

namespace fs = std::filesystem;
using namespace cachelab;

namespace {

constexpr const char* kVersion = "1.0.0";

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitProfile = 3;
constexpr int kExitOutput = 4;
constexpr int kExitExperiment = 5;

struct CliError : std::runtime_error {
  int code;
  CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

std::string hex_bytes(const std::array<std::uint8_t, 16>& b) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(32);
  for (std::uint8_t x : b) {
    out.push_back(digits[x >> 4]);
    out.push_back(digits[x & 0xf]);
  }
  return out;
}

MachineProfile load_profile_or_die(const std::string& name) {
  try {
    return resolve_profile(name);
  } catch (const std::exception& e) {
    throw CliError(kExitProfile, std::string("profile error: ") + e.what());
  }
}

void apply_mode(MachineProfile& prof, const std::string& mode) {
  if (mode.empty()) return;
  if (mode == "1") {
    prof.insertion = InsertionMode::Mode1Fixed;
    prof.policy.llc_policy = "quadage_m1";
  } else if (mode == "2") {
    prof.insertion = InsertionMode::Mode2Fixed;
    prof.policy.llc_policy = "quadage_m2";
  } else if (mode == "duel") {
    prof.insertion = InsertionMode::SetDueling;
    prof.policy.llc_policy = "quadage_duel";
    if (prof.policy.mode1_leaders.empty()) {
      for (unsigned k = 0; k < prof.llc.slices; ++k) {
        prof.policy.mode1_leaders.push_back(512 + k);
        prof.policy.mode2_leaders.push_back(768 + k);
      }
    }
  } else {
    throw CliError(kExitUsage, "unknown --mode value '" + mode + "'");
  }
}

// The run directory is created and the manifest written before any
// experiment work, so a crashed run still identifies itself.
struct RunDir {
  fs::path dir;

  RunDir(const std::string& out, const std::string& kind,
         const MachineProfile& prof, std::uint64_t seed,
         const std::vector<std::pair<std::string, std::string>>& extra) {
    dir = out.empty() ? fs::path("runs") / (kind + "-seed" + std::to_string(seed))
                      : fs::path(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw CliError(kExitOutput, "cannot create output directory '" +
                                            dir.string() + "': " + ec.message());
    std::ofstream m(dir / "manifest.json");
    if (!m)
      throw CliError(kExitOutput,
                     "cannot write manifest in '" + dir.string() + "'");
    char fp[32];
    std::snprintf(fp, sizeof fp, "0x%016llx",
                  static_cast<unsigned long long>(prof.fingerprint()));
    m << "{\n"
      << "  \"tool\": \"cachelab\",\n"
      << "  \"version\": \"" << kVersion << "\",\n"
      << "  \"kind\": \"" << kind << "\",\n"
      << "  \"profile\": \"" << prof.name << "\",\n"
      << "  \"profile_fingerprint\": \"" << fp << "\",\n"
      << "  \"seed\": " << seed;
    for (const auto& [k, v] : extra) m << ",\n  \"" << k << "\": " << v;
    m << "\n}\n";
    if (!m.good())
      throw CliError(kExitOutput, "failed writing manifest in '" +
                                      dir.string() + "'");
  }

  std::ofstream open(const std::string& name) const {
    std::ofstream f(dir / name);
    if (!f)
      throw CliError(kExitOutput,
                     "cannot write '" + (dir / name).string() + "'");
    return f;
  }

  std::string path(const std::string& name) const {
    return (dir / name).string();
  }
};

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

// ---------------------------------------------------------------------------

int cmd_policy_infer(const std::string& profile_name, const std::string& mode,
                     std::uint64_t seed, unsigned trials, unsigned noise,
                     const std::string& only_policy, const std::string& out) {
  MachineProfile prof = load_profile_or_die(profile_name);
  apply_mode(prof, mode);
  RunDir run(out, "policy-infer", prof, seed,
             {{"trials", std::to_string(trials)},
              {"noise", std::to_string(noise)},
              {"policy", quoted(only_policy.empty() ? "all" : only_policy)}});

  CacheHierarchy hier(prof, seed);
  Scheduler sched(hier, seed);
  sched.set_jitter(noise);
  AgentPort port = sched.port(0, "prober");

  CacheAddress probe = decompose(0x100000, prof.llc);
  Addr target = make_line_addr(prof.llc, probe.slice, probe.set_index, 400);
  std::vector<Addr> pool, conflict_pool;
  for (unsigned i = 0; i < 4 * prof.llc.ways; ++i)
    pool.push_back(make_line_addr(prof.llc, probe.slice, probe.set_index, i));
  // Every trial consumes one fresh conflicting line.
  unsigned conflicts = std::max(8 * prof.llc.ways, trials + prof.llc.ways);
  for (unsigned i = 0; i < conflicts; ++i)
    conflict_pool.push_back(
        make_line_addr(prof.llc, probe.slice, probe.set_index, 500 + i));

  EvictionSet ev = build_eviction_set(port, prof, target, pool);

  std::vector<std::string> models;
  if (only_policy.empty()) {
    models = policy_zoo();
  } else {
    models.push_back(only_policy);
  }

  auto csv = run.open("accuracy.csv");
  csv << "model,accuracy,valid_trials,discarded\n";
  std::printf("%-14s %9s %7s %9s\n", "model", "accuracy", "valid", "discarded");
  for (const std::string& m : models) {
    PolicyTestResult r;
    try {
      r = test_policy(port, prof, ev, conflict_pool, m, trials, seed + 1);
    } catch (const std::exception& e) {
      throw CliError(kExitExperiment,
                     "policy test '" + m + "' failed: " + e.what());
    }
    csv << m << ',' << r.accuracy << ',' << r.valid_trials << ','
        << r.discarded << '\n';
    std::printf("%-14s %9.4f %7u %9u\n", m.c_str(), r.accuracy,
                r.valid_trials, r.discarded);
  }
  std::printf("results in %s\n", run.dir.string().c_str());
  return kExitOk;
}

int cmd_leader_locate(const std::string& profile_name, const std::string& mode,
                      std::uint64_t seed, unsigned trials,
                      const std::string& out) {
  MachineProfile prof = load_profile_or_die(profile_name);
  apply_mode(prof, mode);
  RunDir run(out, "leader-locate", prof, seed,
             {{"trials", std::to_string(trials)}});

  auto csv = run.open("leaders.csv");
  csv << "seed,kind,slice,set,region\n";
  bool any_dueling = false;
  for (unsigned t = 0; t < trials; ++t) {
    std::uint64_t s = seed + t;
    CacheHierarchy hier(prof, s);
    Scheduler sched(hier, s);
    AgentPort port = sched.port(0, "prober");
    LeaderReport rep = locate_leader_sets(port, prof, s);
    any_dueling = any_dueling || rep.dueling_detected;
    for (auto [slice, set] : rep.mode1_leaders)
      csv << s << ",mode1," << slice << ',' << set << ',' << (set & ~63u)
          << '\n';
    for (auto [slice, set] : rep.mode2_leaders)
      csv << s << ",mode2," << slice << ',' << set << ',' << (set & ~63u)
          << '\n';
    std::printf("seed %llu: dueling=%s mode1_regions=", (unsigned long long)s,
                rep.dueling_detected ? "yes" : "no");
    for (unsigned r : rep.mode1_regions) std::printf("%u ", r);
    std::printf("mode2_regions=");
    for (unsigned r : rep.mode2_regions) std::printf("%u ", r);
    std::printf("\n");
  }
  std::printf("results in %s\n", run.dir.string().c_str());
  return any_dueling || prof.insertion != InsertionMode::SetDueling
             ? kExitOk
             : kExitExperiment;
}

int cmd_attack_aes(const std::string& profile_name, const std::string& mode,
                   std::uint64_t seed, unsigned samples,
                   const std::string& technique, unsigned line, bool trace,
                   const std::string& out) {
  MachineProfile prof = load_profile_or_die(profile_name);
  apply_mode(prof, mode);
  auto tech = technique_from_string(technique);
  if (!tech)
    throw CliError(kExitUsage, "unknown technique '" + technique + "'");

  RunDir run(out, "attack-aes", prof, seed,
             {{"samples", std::to_string(samples)},
              {"technique", quoted(technique)},
              {"line", std::to_string(line)}});

  AesAttackOptions opts;
  opts.technique = *tech;
  opts.encryptions = samples;
  opts.monitored_line = line;
  opts.seed = seed;
  if (trace) opts.trace_path = run.path("trace.csv");

  AesAttackResult r;
  try {
    r = run_aes_attack(prof, opts);
  } catch (const std::exception& e) {
    throw CliError(kExitExperiment, std::string("attack failed: ") + e.what());
  }

  for (unsigned t = 0; t < 4; ++t)
    if (!r.samples[t].empty())
      write_samples_csv(run.path("samples_t" + std::to_string(t) + ".csv"),
                        r.samples[t]);
  auto js = run.open("result.json");
  js << "{\n"
     << "  \"technique\": \"" << technique << "\",\n"
     << "  \"encryptions\": " << r.encryptions << ",\n"
     << "  \"planted_key\": \"" << hex_bytes(r.planted_key) << "\",\n"
     << "  \"recovered_key\": \"" << hex_bytes(r.recovered_key) << "\",\n"
     << "  \"exact\": " << (r.exact ? "true" : "false") << ",\n"
     << "  \"ambiguous\": " << (r.ambiguous ? "true" : "false") << ",\n"
     << "  \"victim_misses\": " << r.victim_misses << ",\n"
     << "  \"digest\": " << r.digest << "\n"
     << "}\n";

  std::printf("planted key:   %s\n", hex_bytes(r.planted_key).c_str());
  std::printf("recovered key: %s\n", hex_bytes(r.recovered_key).c_str());
  std::printf("match: %s  (%u encryptions per line)\n",
              r.exact ? "exact" : "no", r.encryptions);
  std::printf("results in %s\n", run.dir.string().c_str());
  return kExitOk;
}

int cmd_attack_rsa(const std::string& profile_name, const std::string& mode,
                   std::uint64_t seed, unsigned bits,
                   const std::string& technique, std::uint64_t period,
                   bool max_speed, bool trace, const std::string& out) {
  MachineProfile prof = load_profile_or_die(profile_name);
  apply_mode(prof, mode);
  auto tech = technique_from_string(technique);
  if (!tech)
    throw CliError(kExitUsage, "unknown technique '" + technique + "'");

  RunDir run(out, "attack-rsa", prof, seed,
             {{"bits", std::to_string(bits)},
              {"technique", quoted(technique)},
              {"sampling_period", std::to_string(period)},
              {"max_speed", max_speed ? "true" : "false"}});

  RsaAttackOptions opts;
  opts.technique = *tech;
  opts.exponent_bits = bits;
  opts.seed = seed;
  opts.sampling_period = period;
  opts.max_speed = max_speed;
  if (trace) opts.trace_path = run.path("trace.csv");

  RsaAttackResult r;
  try {
    r = run_rsa_attack(prof, opts);
  } catch (const std::exception& e) {
    throw CliError(kExitExperiment, std::string("attack failed: ") + e.what());
  }

  write_samples_csv(run.path("samples.csv"), r.samples);
  auto js = run.open("result.json");
  js << "{\n"
     << "  \"technique\": \"" << technique << "\",\n"
     << "  \"bits\": " << bits << ",\n"
     << "  \"sampling_period\": " << period << ",\n"
     << "  \"op_cost\": " << r.op_cost << ",\n"
     << "  \"executed_multiplies\": " << r.executed_multiplies << ",\n"
     << "  \"detected\": " << r.detected << ",\n"
     << "  \"correct\": " << r.correct << ",\n"
     << "  \"true_positive\": " << r.rates.true_positive << ",\n"
     << "  \"false_positive\": " << r.rates.false_positive << ",\n"
     << "  \"bit_accuracy\": " << r.bit_accuracy << ",\n"
     << "  \"repaired\": " << r.repaired << ",\n"
     << "  \"resolution_warning\": "
     << (r.resolution_warning ? "true" : "false") << ",\n"
     << "  \"planted_exponent\": \"" << bits_to_hex(r.planted_bits) << "\",\n"
     << "  \"recovered_exponent\": \"" << bits_to_hex(r.recovered_bits)
     << "\",\n"
     << "  \"digest\": " << r.digest << "\n"
     << "}\n";

  const char* label = technique == "rr"   ? "R+R"
                      : technique == "fr" ? "F+R"
                                          : "P+P";
  std::printf("Attack            %s\n", label);
  std::printf("True positives    %.2f%%\n", 100.0 * r.rates.true_positive);
  std::printf("False positives   %.2f%%\n", 100.0 * r.rates.false_positive);
  std::printf("bits correct      %.2f%%  (%zu of %u planted)\n",
              100.0 * r.bit_accuracy,
              static_cast<size_t>(r.bit_accuracy *
                                  static_cast<double>(bits) + 0.5),
              bits);
  if (r.resolution_warning)
    std::printf("warning: sampling period exceeds one squaring iteration; "
                "zero runs are under-resolved\n");
  std::printf("results in %s\n", run.dir.string().c_str());
  return kExitOk;
}

int cmd_telemetry(const std::string& profile_name, const std::string& mode,
                  std::uint64_t seed, const std::string& victim,
                  unsigned samples, const std::string& technique,
                  std::uint64_t cycles_per_sample, std::uint64_t attack_period,
                  const std::string& out) {
  MachineProfile prof = load_profile_or_die(profile_name);
  apply_mode(prof, mode);
  if (victim != "aes" && victim != "rsa")
    throw CliError(kExitUsage, "unknown victim '" + victim + "'");

  std::vector<std::optional<Technique>> scenarios;
  if (technique.empty() || technique == "all") {
    scenarios = {std::nullopt, Technique::ReloadRefresh,
                 Technique::PrimeProbe, Technique::FlushReload};
  } else {
    auto t = technique_from_string(technique);
    if (!t)
      throw CliError(kExitUsage, "unknown technique '" + technique + "'");
    scenarios = {*t};
  }

  RunDir run(out, "telemetry", prof, seed,
             {{"victim", quoted(victim)},
              {"samples", std::to_string(samples)},
              {"technique",
               quoted(technique.empty() ? "all" : technique)}});

  if (victim == "aes") {
    std::printf("%-9s %10s %12s %12s\n", "scenario", "zero-miss",
                "mean-misses", "mean-cycles");
    for (auto& sc : scenarios) {
      AesTelemetryOptions opts;
      opts.technique = sc;
      opts.encryptions = samples;
      opts.attack_period = attack_period;
      opts.seed = seed;
      AesScenarioStats st;
      try {
        st = run_aes_telemetry(prof, opts);
      } catch (const std::exception& e) {
        throw CliError(kExitExperiment,
                       std::string("telemetry failed: ") + e.what());
      }
      write_histogram_csv(run.path("aes_misses_" + st.scenario + ".csv"),
                          st.misses);
      write_histogram_csv(run.path("aes_duration_" + st.scenario + ".csv"),
                          st.duration);
      write_aes_stats_json(run.path("aes_stats_" + st.scenario + ".json"), st);
      std::printf("%-9s %9.2f%% %12.3f %12.1f\n", st.scenario.c_str(),
                  100.0 * st.zero_miss_fraction, st.mean_misses,
                  st.mean_duration);
    }
  } else {
    std::printf("%-9s %8s %12s\n", "scenario", "windows", "steady-mean");
    for (auto& sc : scenarios) {
      RsaTelemetryOptions opts;
      opts.technique = sc;
      opts.seed = seed;
      opts.cycles_per_sample = cycles_per_sample;
      RsaTelemetrySeries se;
      try {
        se = run_rsa_telemetry(prof, opts);
      } catch (const std::exception& e) {
        throw CliError(kExitExperiment,
                       std::string("telemetry failed: ") + e.what());
      }
      write_series_csv(run.path("rsa_misses_" + se.scenario + ".csv"), se);
      write_series_json(run.path("rsa_stats_" + se.scenario + ".json"), se);
      std::printf("%-9s %8zu %12.3f\n", se.scenario.c_str(),
                  se.misses.size(), se.steady_mean);
    }
  }
  std::printf("results in %s\n", run.dir.string().c_str());
  return kExitOk;
}

int cmd_replay(const std::string& trace_file) {
  std::error_code ec;
  if (!fs::exists(trace_file, ec) || ec)
    throw CliError(kExitOutput,
                   "cannot open trace file '" + trace_file + "'");
  ReplayResult r = replay_trace(trace_file);
  if (!r.ok) throw CliError(kExitExperiment, r.error);
  std::printf("rows: %llu\n", static_cast<unsigned long long>(r.rows));
  std::printf("digest: 0x%016llx\n",
              static_cast<unsigned long long>(r.digest));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cache-hierarchy side-channel laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string profile = "default";
  std::string mode;
  std::string technique = "rr";
  std::string out;
  std::string policy;
  std::string victim = "aes";
  std::string trace_file;
  std::uint64_t seed = 1;
  unsigned trials = 1000;
  unsigned samples = 20000;
  unsigned noise = 0;
  unsigned line = 0;
  unsigned bits = 2048;
  std::uint64_t period = 3000;
  std::uint64_t cycles_per_sample = 0;
  std::uint64_t attack_period = 0;
  bool max_speed = false;
  bool trace = false;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--profile", profile, "machine profile name or file");
    c->add_option("--seed", seed, "base RNG seed");
    c->add_option("--out", out, "output directory (default runs/<kind>-seed<seed>)");
    c->add_option("--mode", mode, "override insertion mode: 1, 2 or duel");
  };

  CLI::App* pi = app.add_subcommand("policy-infer",
                                    "score shadow models against a machine");
  add_common(pi);
  pi->add_option("--trials", trials, "trials per model");
  pi->add_option("--noise", noise, "timing jitter amplitude in cycles");
  pi->add_option("--policy", policy, "score a single model instead of all");

  CLI::App* ll = app.add_subcommand("leader-locate",
                                    "find set-dueling leader sets");
  add_common(ll);
  ll->add_option("--trials", trials, "independent seeds to probe")
      ->default_val(5);

  CLI::App* aa = app.add_subcommand("attack-aes",
                                    "recover an AES-128 key via one technique");
  add_common(aa);
  aa->add_option("--technique", technique, "rr, fr or pp");
  aa->add_option("--samples", samples, "encryptions observed per line");
  aa->add_option("--line", line, "monitored line index inside each table");
  aa->add_flag("--trace", trace, "record the op trace for replay");

  CLI::App* ar = app.add_subcommand("attack-rsa",
                                    "recover an exponent via one technique");
  add_common(ar);
  ar->add_option("--technique", technique, "rr, fr or pp");
  ar->add_option("--bits", bits, "exponent width");
  ar->add_option("--period", period, "sampling period in victim cycles");
  ar->add_flag("--max-speed", max_speed, "sample back to back instead");
  ar->add_flag("--trace", trace, "record the op trace for replay");

  CLI::App* tl = app.add_subcommand("telemetry",
                                    "miss distributions under each scenario");
  add_common(tl);
  tl->add_option("--victim", victim, "aes or rsa");
  tl->add_option("--samples", samples, "encryptions per scenario")
      ->default_val(100000);
  tl->add_option("--technique", technique,
                 "single scenario instead of all four")
      ->default_val("");
  tl->add_option("--cycles-per-sample", cycles_per_sample,
                 "periodic window width (0 = profile value)");
  tl->add_option("--attack-period", attack_period,
                 "attack round pacing in cycles (0 = one round per encryption)");

  CLI::App* rp = app.add_subcommand("replay",
                                    "re-simulate a trace and print its digest");
  rp->add_option("--trace", trace_file, "trace file from a previous run")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (pi->parsed())
      return cmd_policy_infer(profile, mode, seed, trials, noise, policy, out);
    if (ll->parsed())
      return cmd_leader_locate(profile, mode, seed, trials, out);
    if (aa->parsed())
      return cmd_attack_aes(profile, mode, seed, samples, technique, line,
                            trace, out);
    if (ar->parsed())
      return cmd_attack_rsa(profile, mode, seed, bits, technique, period,
                            max_speed, trace, out);
    if (tl->parsed())
      return cmd_telemetry(profile, mode, seed, victim, samples, technique,
                           cycles_per_sample, attack_period, out);
    if (rp->parsed()) return cmd_replay(trace_file);
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitExperiment;
  }
  return kExitUsage;
}
