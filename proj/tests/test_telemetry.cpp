#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "cachelab/telemetry.hpp"

using namespace cachelab;

namespace {

AesTelemetryOptions aes_opts(std::optional<Technique> t, unsigned encryptions,
                             unsigned warmup) {
  AesTelemetryOptions o;
  o.technique = t;
  o.encryptions = encryptions;
  o.warmup = warmup;
  o.seed = 5;
  return o;
}

RsaTelemetryOptions rsa_opts(std::optional<Technique> t) {
  RsaTelemetryOptions o;
  o.technique = t;
  o.exponent_bits = 64;
  o.sampling_period = 3000;
  o.cycles_per_sample = 10000;
  o.steady_skip = 8;
  o.seed = 3;
  return o;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("histogram bookkeeping stays exact") {
  Histogram h;
  CHECK(h.total() == 0);
  CHECK(h.mean() == 0.0);
  CHECK(h.fraction_at(3) == 0.0);
  CHECK(h.max_value() == 0);
  CHECK(h.mass_conserved());

  for (std::uint64_t v : {5, 5, 7, 0, 0, 0}) h.add(v);
  CHECK(h.total() == 6);
  CHECK(h.count(0) == 3);
  CHECK(h.count(5) == 2);
  CHECK(h.count(7) == 1);
  CHECK(h.count(9) == 0);
  CHECK(h.fraction_at(0) == 0.5);
  CHECK(h.fraction_at(5) == doctest::Approx(1.0 / 3.0));
  CHECK(h.mean() == doctest::Approx(17.0 / 6.0));
  CHECK(h.max_value() == 7);
  CHECK(h.bins().size() == 3);
  CHECK(h.mass_conserved());
}

TEST_CASE("undisturbed aes victim settles into pure l1 service") {
  AesScenarioStats s =
      run_aes_telemetry(builtin_profile("default"), aes_opts(std::nullopt, 220, 20));
  CHECK(s.scenario == "noattack");
  CHECK(s.encryptions == 220);
  CHECK(s.warmup == 20);
  CHECK(s.misses.total() == 200);
  CHECK(s.misses.mass_conserved());
  CHECK(s.duration.mass_conserved());

  // All 64 table lines are touched during warmup and nothing evicts them,
  // so every counted encryption is 160 l1 hits at 4 cycles plus a free fence.
  CHECK(s.zero_miss_fraction == 1.0);
  CHECK(s.mean_misses == 0.0);
  CHECK(s.misses.max_value() == 0);
  CHECK(s.served_l1 == 160.0);
  CHECK(s.served_l2 == 0.0);
  CHECK(s.served_llc == 0.0);
  CHECK(s.served_mem == 0.0);
  CHECK(s.duration.bins().size() == 1);
  CHECK(s.duration.count(640) == 200);
  CHECK(s.mean_duration == 640.0);
}

TEST_CASE("aes stealth ordering emerges across the three attacks") {
  MachineProfile prof = builtin_profile("default");
  AesScenarioStats na = run_aes_telemetry(prof, aes_opts(std::nullopt, 300, 50));
  AesScenarioStats rr =
      run_aes_telemetry(prof, aes_opts(Technique::ReloadRefresh, 300, 50));
  AesScenarioStats fr =
      run_aes_telemetry(prof, aes_opts(Technique::FlushReload, 300, 50));
  AesScenarioStats pp =
      run_aes_telemetry(prof, aes_opts(Technique::PrimeProbe, 300, 50));
  CHECK(rr.scenario == "rr");
  CHECK(fr.scenario == "fr");
  CHECK(pp.scenario == "pp");

  // The refresh keeps the monitored line shared-cache resident, so the
  // victim reloads it from the llc and never from memory.
  CHECK(rr.zero_miss_fraction == 1.0);
  CHECK(rr.mean_misses == 0.0);
  CHECK(rr.served_mem == 0.0);
  CHECK(rr.served_llc > 0.84);
  CHECK(rr.served_llc < 1.0);
  CHECK(rr.served_l1 + rr.served_llc == doctest::Approx(160.0));
  CHECK(rr.duration.count(640) + rr.duration.count(741) == 250);
  CHECK(rr.duration.count(741) > 180);

  // The flush forces one memory fetch per encryption that touches the line.
  CHECK(fr.zero_miss_fraction > 0.005);
  CHECK(fr.zero_miss_fraction < 0.16);
  CHECK(fr.served_llc == 0.0);
  CHECK(fr.served_mem == fr.mean_misses);
  CHECK(fr.misses.count(0) + fr.misses.count(1) == 250);
  CHECK(fr.duration.count(640) + fr.duration.count(981) == 250);

  // The zig-zag probe lets victim data ride out the round after a detection,
  // so the probe sits strictly between the other two attacks.
  CHECK(pp.served_mem > 0.0);
  CHECK(na.zero_miss_fraction >= rr.zero_miss_fraction);
  CHECK(rr.zero_miss_fraction > pp.zero_miss_fraction);
  CHECK(pp.zero_miss_fraction > fr.zero_miss_fraction);
  CHECK(pp.zero_miss_fraction > 0.2);
  CHECK(pp.zero_miss_fraction < 0.8);

  CHECK(na.mean_duration < rr.mean_duration);
  CHECK(rr.mean_duration < fr.mean_duration);
}

TEST_CASE("paced attack rounds keep the books and stay deterministic") {
  MachineProfile prof = builtin_profile("default");
  AesTelemetryOptions o = aes_opts(Technique::PrimeProbe, 300, 50);
  o.attack_period = 500;
  AesScenarioStats a = run_aes_telemetry(prof, o);
  AesScenarioStats b = run_aes_telemetry(prof, o);
  CHECK(a.zero_miss_fraction == b.zero_miss_fraction);
  CHECK(a.mean_duration == b.mean_duration);
  CHECK(a.misses.bins() == b.misses.bins());
  CHECK(a.zero_miss_fraction > 0.01);
  CHECK(a.zero_miss_fraction < 0.95);

  // Pacing changes how often the probe runs, never what the refresh hides.
  o.technique = Technique::ReloadRefresh;
  AesScenarioStats rr = run_aes_telemetry(prof, o);
  CHECK(rr.zero_miss_fraction == 1.0);
  CHECK(rr.served_mem == 0.0);
}

TEST_CASE("rsa telemetry separates the initialization burst from steady state") {
  RsaTelemetrySeries s =
      run_rsa_telemetry(builtin_profile("default"), rsa_opts(std::nullopt));
  CHECK(s.scenario == "noattack");
  CHECK(s.cycles_per_sample == 10000);
  CHECK(s.steady_skip == 8);
  CHECK(s.misses.size() >= 15);
  CHECK(s.misses.size() <= 25);

  // 192 initialization fetches issue every 345 cycles from cycle 0, which
  // puts exactly 29 of them inside the first 10000-cycle window.
  CHECK(s.misses[0] == 29);
  CHECK(s.steady_mean == 0.0);
}

TEST_CASE("rsa steady state shows reload refresh hiding and flush reload exposing") {
  MachineProfile prof = builtin_profile("default");
  RsaTelemetrySeries rr =
      run_rsa_telemetry(prof, rsa_opts(Technique::ReloadRefresh));
  RsaTelemetrySeries rr2 =
      run_rsa_telemetry(prof, rsa_opts(Technique::ReloadRefresh));
  RsaTelemetrySeries fr =
      run_rsa_telemetry(prof, rsa_opts(Technique::FlushReload));
  CHECK(rr.scenario == "rr");
  CHECK(fr.scenario == "fr");
  CHECK(rr.misses == rr2.misses);
  CHECK(rr.steady_mean == rr2.steady_mean);

  // The multiply line stays llc resident under the refresh, so the victim
  // never pays a memory fetch after its private copies warm up.
  CHECK(rr.steady_mean == 0.0);
  CHECK(fr.steady_mean > 0.5);
  CHECK(rr.steady_mean <= 0.1 * fr.steady_mean);
}

TEST_CASE("telemetry writers emit csv and json") {
  Histogram h;
  for (std::uint64_t v : {0, 0, 2}) h.add(v);
  write_histogram_csv("tel_hist.csv", h);
  std::string hist = slurp("tel_hist.csv");
  CHECK(hist == "value,count\n0,2\n2,1\n");

  AesScenarioStats stats;
  stats.scenario = "noattack";
  stats.encryptions = 7;
  write_aes_stats_json("tel_aes.json", stats);
  std::string aes = slurp("tel_aes.json");
  CHECK(aes.find("\"scenario\": \"noattack\"") != std::string::npos);
  CHECK(aes.find("\"encryptions\": 7") != std::string::npos);

  RsaTelemetrySeries series;
  series.scenario = "fr";
  series.cycles_per_sample = 10000;
  series.misses = {29, 3, 0};
  series.steady_skip = 1;
  series.steady_mean = 1.5;
  write_series_csv("tel_series.csv", series);
  CHECK(slurp("tel_series.csv") == "window,misses\n0,29\n1,3\n2,0\n");
  write_series_json("tel_series.json", series);
  std::string json = slurp("tel_series.json");
  CHECK(json.find("\"windows\": 3") != std::string::npos);
  CHECK(json.find("\"steady_mean\": 1.5") != std::string::npos);

  for (const char* p :
       {"tel_hist.csv", "tel_aes.json", "tel_series.csv", "tel_series.json"})
    std::remove(p);
}
