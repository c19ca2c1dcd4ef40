#include "cachelab/profile.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cachelab/rng.hpp"

namespace cachelab {

const char* to_string(InsertionMode m) {
  switch (m) {
    case InsertionMode::Mode1Fixed: return "mode1";
    case InsertionMode::Mode2Fixed: return "mode2";
    case InsertionMode::SetDueling: return "dueling";
  }
  return "?";
}

static void check(bool ok, const std::string& msg) {
  if (!ok) throw ProfileError("profile: " + msg);
}

void MachineProfile::validate() const {
  check(cores >= 1 && cores <= 64, "cores out of range");
  for (const CacheGeometry* g : {&l1, &l2, &llc}) {
    check(g->sets > 0 && is_pow2(g->sets), "sets must be a power of two");
    check(g->slices > 0 && is_pow2(g->slices), "slices must be a power of two");
    check(g->ways >= 1 && g->ways <= 64, "ways out of range");
  }
  check(l1.slices == 1 && l2.slices == 1, "private levels are single-sliced");
  check(timing.l1_latency < timing.l2_latency &&
            timing.l2_latency < timing.llc_latency &&
            timing.llc_latency < timing.mem_latency,
        "latencies must increase strictly from L1 to memory");
  check(timing.ll_threshold > timing.l2_latency &&
            timing.ll_threshold <= timing.llc_latency,
        "ll_threshold must separate private-level from LLC latencies");
  check(timing.mem_threshold > timing.llc_latency &&
            timing.mem_threshold <= timing.mem_latency,
        "mem_threshold must separate LLC from memory latencies");
  if (insertion == InsertionMode::SetDueling) {
    check(policy.mode1_leaders.size() == llc.slices &&
              policy.mode2_leaders.size() == llc.slices,
          "dueling profiles need one leader per slice for each mode");
    for (unsigned s : policy.mode1_leaders) check(s < llc.sets, "leader index out of range");
    for (unsigned s : policy.mode2_leaders) check(s < llc.sets, "leader index out of range");
    for (unsigned i = 0; i < llc.slices; ++i)
      check(policy.mode1_leaders[i] != policy.mode2_leaders[i],
            "a set cannot lead both modes");
  }
  check(policy.psel_bits >= 1 && policy.psel_bits <= 16, "psel_bits out of range");
  check(policy.psel_init < (1u << policy.psel_bits), "psel_init out of range");
  check(policy.aging == "rrip" || policy.aging == "none", "aging must be rrip or none");
  check(policy.hit_promotion == "decrement" || policy.hit_promotion == "to_zero",
        "hit_promotion must be decrement or to_zero");
  check(victim.rsa_init_lines > 0, "rsa_init_lines must be positive");
}

std::uint64_t MachineProfile::fingerprint() const {
  std::uint64_t h = 0x5cab1ab5cab1ab00ull;
  auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ v); };
  for (char c : name) mix(static_cast<unsigned char>(c));
  mix(cores);
  for (const CacheGeometry* g : {&l1, &l2, &llc}) {
    mix(g->sets); mix(g->ways); mix(g->slices); mix(g->latency);
  }
  mix(static_cast<std::uint64_t>(insertion));
  mix(timing.l1_latency); mix(timing.l2_latency); mix(timing.llc_latency);
  mix(timing.mem_latency); mix(timing.flush_latency);
  mix(timing.ll_threshold); mix(timing.mem_threshold);
  mix(timing.cycles_per_sample);
  for (char c : policy.llc_policy) mix(static_cast<unsigned char>(c));
  for (char c : policy.aging) mix(static_cast<unsigned char>(c));
  for (char c : policy.hit_promotion) mix(static_cast<unsigned char>(c));
  mix(static_cast<std::uint64_t>(policy.brrip_epsilon * (1ull << 32)));
  mix(policy.psel_bits); mix(policy.psel_init);
  for (unsigned s : policy.mode1_leaders) mix(s);
  for (unsigned s : policy.mode2_leaders) mix(s);
  mix(victim.aes_table_base); mix(victim.rsa_code_base); mix(victim.rsa_data_base);
  mix(victim.rsa_init_lines); mix(victim.rsa_op_cost);
  return h;
}

std::string MachineProfile::summary() const {
  std::ostringstream os;
  os << name << ": " << cores << " cores, LLC " << llc.slices << "x" << llc.sets
     << "x" << llc.ways << ", insertion " << to_string(insertion)
     << ", policy " << policy.llc_policy;
  return os.str();
}

// ---------------------------------------------------------------------------
// Builtins. LLC `sets` is per slice. Leader lists give slice k the leaders
// 512+k and 768+k, one per slice inside each of the two 64-set regions.

static std::vector<unsigned> leaders_from(unsigned base, unsigned slices) {
  std::vector<unsigned> v;
  for (unsigned k = 0; k < slices; ++k) v.push_back(base + k);
  return v;
}

static MachineProfile make_default_profile() {
  MachineProfile p;
  p.name = "default";
  p.generation = "6th";
  p.cores = 2;
  p.l1 = {64, 8, 1, 4};
  p.l2 = {512, 8, 1, 12};
  p.llc = {1024, 12, 1, 105};
  p.insertion = InsertionMode::Mode1Fixed;
  return p;
}

static MachineProfile make_i7_4790() {
  MachineProfile p;
  p.name = "i7-4790";
  p.generation = "4th";
  p.cores = 4;
  p.l1 = {64, 8, 1, 4};
  p.l2 = {512, 8, 1, 12};
  p.llc = {2048, 16, 4, 105};
  p.insertion = InsertionMode::SetDueling;
  p.policy.llc_policy = "quadage_duel";
  p.policy.mode1_leaders = leaders_from(512, 4);
  p.policy.mode2_leaders = leaders_from(768, 4);
  return p;
}

static MachineProfile make_i3_5010u() {
  MachineProfile p;
  p.name = "i3-5010U";
  p.generation = "5th";
  p.cores = 2;
  p.l1 = {64, 8, 1, 4};
  p.l2 = {512, 8, 1, 12};
  p.llc = {2048, 12, 2, 105};
  p.insertion = InsertionMode::SetDueling;
  p.policy.llc_policy = "quadage_duel";
  p.policy.mode1_leaders = leaders_from(512, 2);
  p.policy.mode2_leaders = leaders_from(768, 2);
  return p;
}

static MachineProfile make_i7_6700k() {
  MachineProfile p;
  p.name = "i7-6700K";
  p.generation = "6th";
  p.cores = 4;
  p.l1 = {64, 8, 1, 4};
  p.l2 = {1024, 4, 1, 12};
  p.llc = {1024, 16, 8, 105};
  p.insertion = InsertionMode::Mode1Fixed;
  return p;
}

static MachineProfile make_i5_7600k() {
  MachineProfile p;
  p.name = "i5-7600K";
  p.generation = "7th";
  p.cores = 4;
  p.l1 = {64, 8, 1, 4};
  p.l2 = {1024, 4, 1, 12};
  p.llc = {1024, 12, 8, 105};
  p.insertion = InsertionMode::Mode1Fixed;
  return p;
}

static MachineProfile make_i7_8650u() {
  MachineProfile p;
  p.name = "i7-8650U";
  p.generation = "8th";
  p.cores = 4;
  p.l1 = {64, 8, 1, 4};
  p.l2 = {1024, 4, 1, 12};
  p.llc = {1024, 16, 8, 105};
  p.insertion = InsertionMode::Mode1Fixed;
  return p;
}

std::vector<std::string> builtin_profile_names() {
  return {"default", "i7-4790", "i3-5010U", "i7-6700K", "i5-7600K", "i7-8650U"};
}

MachineProfile builtin_profile(const std::string& name) {
  MachineProfile p;
  if (name == "default") p = make_default_profile();
  else if (name == "i7-4790") p = make_i7_4790();
  else if (name == "i3-5010U") p = make_i3_5010u();
  else if (name == "i7-6700K") p = make_i7_6700k();
  else if (name == "i5-7600K") p = make_i5_7600k();
  else if (name == "i7-8650U") p = make_i7_8650u();
  else throw ProfileError("unknown profile '" + name + "'");
  p.l1.latency = p.timing.l1_latency;
  p.l2.latency = p.timing.l2_latency;
  p.llc.latency = p.timing.llc_latency;
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// TOML-subset parser: [section] headers, key = value lines, # comments.
// Values: integers (decimal or 0x hex), floats, booleans, quoted strings,
// and [a, b, c] integer lists.

namespace {

struct Parser {
  std::string origin;
  MachineProfile p;
  std::string section;
  bool insertion_set = false;
  bool llc_policy_set = false;

  [[noreturn]] void fail(int line, const std::string& msg) {
    throw ProfileError(origin + ":" + std::to_string(line) + ": " + msg);
  }

  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::uint64_t parse_uint(int line, const std::string& v) {
    try {
      size_t pos = 0;
      unsigned long long r = std::stoull(v, &pos, 0);
      if (pos != v.size()) fail(line, "bad integer '" + v + "'");
      return r;
    } catch (const ProfileError&) {
      throw;
    } catch (...) {
      fail(line, "bad integer '" + v + "'");
    }
  }

  double parse_double(int line, const std::string& v) {
    try {
      size_t pos = 0;
      double r = std::stod(v, &pos);
      if (pos != v.size()) fail(line, "bad number '" + v + "'");
      return r;
    } catch (const ProfileError&) {
      throw;
    } catch (...) {
      fail(line, "bad number '" + v + "'");
    }
  }

  std::string parse_string(int line, const std::string& v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
      return v.substr(1, v.size() - 2);
    // Bare words are accepted for enum-like values.
    for (char c : v)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
        fail(line, "string value needs quotes: '" + v + "'");
    return v;
  }

  std::vector<unsigned> parse_list(int line, const std::string& v) {
    if (v.size() < 2 || v.front() != '[' || v.back() != ']')
      fail(line, "expected [..] list");
    std::vector<unsigned> out;
    std::string body = v.substr(1, v.size() - 2);
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      out.push_back(static_cast<unsigned>(parse_uint(line, item)));
    }
    return out;
  }

  CacheGeometry* level_for_section() {
    if (section == "l1") return &p.l1;
    if (section == "l2") return &p.l2;
    if (section == "llc") return &p.llc;
    return nullptr;
  }

  void assign(int line, const std::string& key, const std::string& val) {
    auto u = [&] { return parse_uint(line, val); };
    if (section == "machine") {
      if (key == "name") p.name = parse_string(line, val);
      else if (key == "generation") p.generation = parse_string(line, val);
      else if (key == "cores") p.cores = static_cast<unsigned>(u());
      else if (key == "insertion_mode") {
        std::string m = parse_string(line, val);
        if (m == "mode1") p.insertion = InsertionMode::Mode1Fixed;
        else if (m == "mode2") p.insertion = InsertionMode::Mode2Fixed;
        else if (m == "dueling") p.insertion = InsertionMode::SetDueling;
        else fail(line, "insertion_mode must be mode1, mode2 or dueling");
        insertion_set = true;
      } else fail(line, "unknown key '" + key + "' in [machine]");
    } else if (CacheGeometry* g = level_for_section()) {
      if (key == "sets") g->sets = static_cast<unsigned>(u());
      else if (key == "ways") g->ways = static_cast<unsigned>(u());
      else if (key == "slices") g->slices = static_cast<unsigned>(u());
      else fail(line, "unknown key '" + key + "' in [" + section + "]");
    } else if (section == "timing") {
      auto& t = p.timing;
      if (key == "l1_latency") t.l1_latency = static_cast<unsigned>(u());
      else if (key == "l2_latency") t.l2_latency = static_cast<unsigned>(u());
      else if (key == "llc_latency") t.llc_latency = static_cast<unsigned>(u());
      else if (key == "mem_latency") t.mem_latency = static_cast<unsigned>(u());
      else if (key == "flush_latency") t.flush_latency = static_cast<unsigned>(u());
      else if (key == "ll_threshold") t.ll_threshold = static_cast<unsigned>(u());
      else if (key == "mem_threshold") t.mem_threshold = static_cast<unsigned>(u());
      else if (key == "cycles_per_sample") t.cycles_per_sample = static_cast<unsigned>(u());
      else fail(line, "unknown key '" + key + "' in [timing]");
    } else if (section == "policy") {
      auto& c = p.policy;
      if (key == "llc") {
        c.llc_policy = parse_string(line, val);
        llc_policy_set = true;
      }
      else if (key == "l1") c.l1_policy = parse_string(line, val);
      else if (key == "l2") c.l2_policy = parse_string(line, val);
      else if (key == "aging") c.aging = parse_string(line, val);
      else if (key == "hit_promotion") c.hit_promotion = parse_string(line, val);
      else if (key == "brrip_epsilon") c.brrip_epsilon = parse_double(line, val);
      else if (key == "psel_bits") c.psel_bits = static_cast<unsigned>(u());
      else if (key == "psel_init") c.psel_init = static_cast<unsigned>(u());
      else if (key == "mode1_leaders") c.mode1_leaders = parse_list(line, val);
      else if (key == "mode2_leaders") c.mode2_leaders = parse_list(line, val);
      else fail(line, "unknown key '" + key + "' in [policy]");
    } else if (section == "victim") {
      auto& v = p.victim;
      if (key == "aes_table_base") v.aes_table_base = u();
      else if (key == "rsa_code_base") v.rsa_code_base = u();
      else if (key == "rsa_data_base") v.rsa_data_base = u();
      else if (key == "rsa_init_lines") v.rsa_init_lines = static_cast<unsigned>(u());
      else if (key == "rsa_op_cost") v.rsa_op_cost = static_cast<unsigned>(u());
      else fail(line, "unknown key '" + key + "' in [victim]");
    } else {
      fail(line, "key outside any known section");
    }
  }
};

}  // namespace

MachineProfile parse_profile(const std::string& text, const std::string& origin) {
  Parser ps;
  ps.origin = origin;
  std::stringstream ss(text);
  std::string raw;
  int line = 0;
  while (std::getline(ss, raw)) {
    ++line;
    size_t hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    std::string s = Parser::trim(raw);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') ps.fail(line, "unterminated section header");
      std::string sec = Parser::trim(s.substr(1, s.size() - 2));
      static const char* known[] = {"machine", "l1", "l2", "llc",
                                    "timing", "policy", "victim"};
      if (std::find_if(std::begin(known), std::end(known), [&](const char* k) {
            return sec == k;
          }) == std::end(known))
        ps.fail(line, "unknown section [" + sec + "]");
      ps.section = sec;
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos) ps.fail(line, "expected key = value");
    std::string key = Parser::trim(s.substr(0, eq));
    std::string val = Parser::trim(s.substr(eq + 1));
    if (key.empty() || val.empty()) ps.fail(line, "expected key = value");
    ps.assign(line, key, val);
  }
  MachineProfile p = ps.p;
  p.l1.latency = p.timing.l1_latency;
  p.l2.latency = p.timing.l2_latency;
  p.llc.latency = p.timing.llc_latency;
  if (ps.insertion_set && !ps.llc_policy_set) {
    switch (p.insertion) {
      case InsertionMode::Mode1Fixed: p.policy.llc_policy = "quadage_m1"; break;
      case InsertionMode::Mode2Fixed: p.policy.llc_policy = "quadage_m2"; break;
      case InsertionMode::SetDueling: p.policy.llc_policy = "quadage_duel"; break;
    }
  }
  if (p.insertion == InsertionMode::SetDueling &&
      p.policy.mode1_leaders.empty() && p.policy.mode2_leaders.empty()) {
    p.policy.mode1_leaders = leaders_from(512, p.llc.slices);
    p.policy.mode2_leaders = leaders_from(768, p.llc.slices);
  }
  p.validate();
  return p;
}

MachineProfile load_profile_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ProfileError("cannot open profile file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_profile(ss.str(), path);
}

MachineProfile resolve_profile(const std::string& name_or_path) {
  auto looks_like_path = name_or_path.find('/') != std::string::npos ||
                         (name_or_path.size() > 5 &&
                          name_or_path.substr(name_or_path.size() - 5) == ".toml");
  if (looks_like_path) return load_profile_file(name_or_path);
  std::vector<std::string> dirs;
  if (const char* env = std::getenv("CACHELAB_PROFILE_DIR")) dirs.push_back(env);
  dirs.push_back("profiles");
  for (const auto& d : dirs) {
    std::string path = d + "/" + name_or_path + ".toml";
    std::ifstream probe(path);
    if (probe) return load_profile_file(path);
  }
  return builtin_profile(name_or_path);
}

std::string profile_to_toml(const MachineProfile& p) {
  std::ostringstream os;
  os << "[machine]\n"
     << "name = \"" << p.name << "\"\n"
     << "generation = \"" << p.generation << "\"\n"
     << "cores = " << p.cores << "\n"
     << "insertion_mode = \"" << to_string(p.insertion) << "\"\n\n";
  auto level = [&os](const char* sec, const CacheGeometry& g) {
    os << "[" << sec << "]\n"
       << "sets = " << g.sets << "\n"
       << "ways = " << g.ways << "\n"
       << "slices = " << g.slices << "\n\n";
  };
  level("l1", p.l1);
  level("l2", p.l2);
  level("llc", p.llc);
  const auto& t = p.timing;
  os << "[timing]\n"
     << "l1_latency = " << t.l1_latency << "\n"
     << "l2_latency = " << t.l2_latency << "\n"
     << "llc_latency = " << t.llc_latency << "\n"
     << "mem_latency = " << t.mem_latency << "\n"
     << "flush_latency = " << t.flush_latency << "\n"
     << "ll_threshold = " << t.ll_threshold << "\n"
     << "mem_threshold = " << t.mem_threshold << "\n"
     << "cycles_per_sample = " << t.cycles_per_sample << "\n\n";
  const auto& c = p.policy;
  os << "[policy]\n"
     << "llc = \"" << c.llc_policy << "\"\n"
     << "l1 = \"" << c.l1_policy << "\"\n"
     << "l2 = \"" << c.l2_policy << "\"\n"
     << "aging = \"" << c.aging << "\"\n"
     << "hit_promotion = \"" << c.hit_promotion << "\"\n"
     << "psel_bits = " << c.psel_bits << "\n"
     << "psel_init = " << c.psel_init << "\n";
  auto list = [&os](const char* key, const std::vector<unsigned>& v) {
    if (v.empty()) return;
    os << key << " = [";
    for (size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    os << "]\n";
  };
  list("mode1_leaders", c.mode1_leaders);
  list("mode2_leaders", c.mode2_leaders);
  os << "\n[victim]\n"
     << "aes_table_base = 0x" << std::hex << p.victim.aes_table_base << "\n"
     << "rsa_code_base = 0x" << p.victim.rsa_code_base << "\n"
     << "rsa_data_base = 0x" << p.victim.rsa_data_base << std::dec << "\n"
     << "rsa_init_lines = " << p.victim.rsa_init_lines << "\n"
     << "rsa_op_cost = " << p.victim.rsa_op_cost << "\n";
  return os.str();
}

}  // namespace cachelab
