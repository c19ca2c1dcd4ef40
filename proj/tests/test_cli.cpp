#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string env_or_die(const char* name) {
  const char* v = std::getenv(name);
  REQUIRE_MESSAGE(v != nullptr, name);
  return v;
}

const fs::path& work_root() {
  static fs::path root = [] {
    fs::path p = env_or_die("CACHELAB_WORK_DIR");
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the installed binary through the shell and captures both streams.
CmdResult run_cli(const std::string& args, const std::string& env = "") {
  fs::path out = work_root() / "cmd.out";
  fs::path err = work_root() / "cmd.err";
  std::string cmd = env + (env.empty() ? "" : " ") + env_or_die("CACHELAB_BIN") +
                    " " + args + " >" + out.string() + " 2>" + err.string();
  int status = std::system(cmd.c_str());
  CmdResult r;
  if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::uint64_t json_u64(const std::string& text, const std::string& key) {
  std::string needle = "\"" + key + "\": ";
  size_t pos = text.find(needle);
  REQUIRE(pos != std::string::npos);
  return std::strtoull(text.c_str() + pos + needle.size(), nullptr, 10);
}

size_t line_count(const fs::path& path) {
  std::string text = slurp(path);
  size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("usage and version exits") {
  CHECK(run_cli("").code == 2);
  CHECK(run_cli("frobnicate").code == 2);
  CHECK(run_cli("policy-infer --bogus 3").code == 2);

  CmdResult version = run_cli("--version");
  CHECK(version.code == 0);
  CHECK(version.out.find("1.0.0") != std::string::npos);

  CmdResult help = run_cli("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("policy-infer") != std::string::npos);
  CHECK(help.out.find("attack-rsa") != std::string::npos);

  fs::path never = work_root() / "never";
  CmdResult tech = run_cli("attack-aes --technique zz --out " + never.string());
  CHECK(tech.code == 2);
  CHECK_FALSE(fs::exists(never));
  CHECK(run_cli("policy-infer --mode 9").code == 2);
  CHECK(run_cli("telemetry --victim zz").code == 2);
}

TEST_CASE("profile resolution failures exit with the profile code") {
  CmdResult r = run_cli("policy-infer --profile nosuch");
  CHECK(r.code == 3);
  CHECK(r.err.find("profile") != std::string::npos);
  CHECK(run_cli("attack-aes --profile /nonexistent/prof.toml").code == 3);
}

TEST_CASE("profile directory from the environment is honored") {
  fs::path dir = work_root() / "profdir";
  fs::create_directories(dir);
  fs::copy_file(fs::path(env_or_die("CACHELAB_SOURCE_DIR")) / "profiles" /
                    "i7-6700K.toml",
                dir / "myprof.toml", fs::copy_options::overwrite_existing);
  fs::path out = work_root() / "envprof";
  CmdResult r =
      run_cli("policy-infer --profile myprof --policy lru --trials 5 --out " +
                  out.string(),
              "CACHELAB_PROFILE_DIR=" + dir.string());
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "accuracy.csv"));
  CHECK(slurp(out / "manifest.json").find("myprof") != std::string::npos);
}

TEST_CASE("output directory failures exit with the output code") {
  fs::path blocker = work_root() / "blocker";
  std::ofstream(blocker) << "in the way\n";
  CmdResult r = run_cli("policy-infer --policy lru --trials 5 --out " +
                        (blocker / "sub").string());
  CHECK(r.code == 4);
  CHECK(run_cli("replay --trace " + (work_root() / "nope.csv").string()).code ==
        4);
}

TEST_CASE("policy inference writes the manifest and accuracy table") {
  fs::path out = work_root() / "pi";
  CmdResult r = run_cli("policy-infer --policy lru --trials 20 --seed 7 --out " +
                        out.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("lru") != std::string::npos);
  CHECK(r.out.find("results in") != std::string::npos);

  std::string manifest = slurp(out / "manifest.json");
  CHECK(manifest.find("\"tool\": \"cachelab\"") != std::string::npos);
  CHECK(manifest.find("\"kind\": \"policy-infer\"") != std::string::npos);
  CHECK(manifest.find("\"seed\": 7") != std::string::npos);

  std::string csv = slurp(out / "accuracy.csv");
  CHECK(csv.rfind("model,accuracy,valid_trials,discarded\nlru,1,", 0) == 0);
}

TEST_CASE("experiment failures still leave a manifest behind") {
  fs::path out = work_root() / "fail";
  CmdResult r = run_cli("policy-infer --policy nosuch_model --trials 5 --out " +
                        out.string());
  CHECK(r.code == 5);
  CHECK(fs::exists(out / "manifest.json"));
}

TEST_CASE("aes attack trace replays to the same digest") {
  fs::path out = work_root() / "aa";
  CmdResult r = run_cli(
      "attack-aes --technique rr --samples 200 --seed 11 --trace --out " +
      out.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("planted key:") != std::string::npos);
  for (int t = 0; t < 4; ++t)
    CHECK(line_count(out / ("samples_t" + std::to_string(t) + ".csv")) == 201);

  std::uint64_t digest = json_u64(slurp(out / "result.json"), "digest");
  char hex[32];
  std::snprintf(hex, sizeof hex, "0x%016llx",
                static_cast<unsigned long long>(digest));

  CmdResult rep = run_cli("replay --trace " + (out / "trace.csv").string());
  CHECK(rep.code == 0);
  CHECK(rep.out.find("rows: ") != std::string::npos);
  CHECK(rep.out.find(hex) != std::string::npos);
}

TEST_CASE("rsa attack reports clean recovery at fine sampling") {
  fs::path out = work_root() / "ar";
  CmdResult r = run_cli(
      "attack-rsa --technique rr --bits 128 --period 1400 --seed 4 --out " +
      out.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("True positives    100.00%") != std::string::npos);
  CHECK(r.out.find("warning") == std::string::npos);

  std::string json = slurp(out / "result.json");
  CHECK(json.find("\"bit_accuracy\": 1,") != std::string::npos);
  CHECK(json.find("\"resolution_warning\": false") != std::string::npos);
  CHECK(json_u64(json, "detected") == json_u64(json, "correct"));
  CHECK(slurp(out / "samples.csv")
            .rfind("cycle,reload_time,refresh_time,verdict", 0) == 0);
}

TEST_CASE("telemetry emits per scenario artifacts") {
  fs::path out = work_root() / "tel";
  CmdResult r = run_cli(
      "telemetry --victim aes --samples 250 --technique rr --seed 3 --out " +
      out.string());
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "aes_duration_rr.csv"));
  CHECK(slurp(out / "aes_misses_rr.csv") == "value,count\n0,150\n");
  std::string stats = slurp(out / "aes_stats_rr.json");
  CHECK(stats.find("\"scenario\": \"rr\"") != std::string::npos);
  CHECK(stats.find("\"zero_miss_fraction\": 1") != std::string::npos);

  fs::path outr = work_root() / "telr";
  CmdResult rsa = run_cli(
      "telemetry --victim rsa --technique fr --cycles-per-sample 10000 "
      "--seed 3 --out " +
      outr.string());
  CHECK(rsa.code == 0);
  CHECK(slurp(outr / "rsa_misses_fr.csv").rfind("window,misses", 0) == 0);
  CHECK(slurp(outr / "rsa_stats_fr.json").find("\"scenario\": \"fr\"") !=
        std::string::npos);
}

TEST_CASE("leader locate runs on a fixed insertion profile") {
  fs::path out = work_root() / "ll";
  CmdResult r = run_cli("leader-locate --trials 1 --seed 2 --out " +
                        out.string());
  CHECK(r.code == 0);
  CHECK(slurp(out / "leaders.csv").rfind("seed,kind,slice,set,region", 0) == 0);
  CHECK(r.out.find("dueling=no") != std::string::npos);
}
