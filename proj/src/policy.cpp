#include "cachelab/policy.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace cachelab {

// ---------------------------------------------------------------------------
// DuelingState

DuelingState::DuelingState(unsigned total_sets, unsigned psel_bits,
                           unsigned psel_init)
    : role_(total_sets, 0),
      psel_(psel_init),
      max_((1u << psel_bits) - 1),
      mid_(1u << (psel_bits - 1)) {}

void DuelingState::set_leader(unsigned flat_set, unsigned role) {
  role_[flat_set] = static_cast<std::uint8_t>(role);
}

bool DuelingState::mode2_for(unsigned flat_set) const {
  unsigned r = role_[flat_set];
  if (r == 1) return false;
  if (r == 2) return true;
  return psel_ >= mid_;
}

void DuelingState::on_miss(unsigned flat_set) {
  unsigned r = role_[flat_set];
  if (r == 1 && psel_ < max_) ++psel_;
  else if (r == 2 && psel_ > 0) --psel_;
}

void DuelingState::set_psel(unsigned v) { psel_ = std::min(v, max_); }

// ---------------------------------------------------------------------------
// Base

ReplacementPolicy::ReplacementPolicy(std::string name, const CacheGeometry& g)
    : name_(std::move(name)),
      ways_(g.ways),
      total_sets_(g.total_sets()),
      valid_(static_cast<size_t>(g.total_sets()) * g.ways, 0) {}

void ReplacementPolicy::on_fill(unsigned flat_set, unsigned way) {
  valid_[idx(flat_set, way)] = 1;
  fill(flat_set, way);
}

void ReplacementPolicy::on_hit(unsigned flat_set, unsigned way) {
  hit(flat_set, way);
}

void ReplacementPolicy::on_miss(unsigned) {}

void ReplacementPolicy::on_invalidate(unsigned flat_set, unsigned way) {
  valid_[idx(flat_set, way)] = 0;
  invalidate(flat_set, way);
}

int ReplacementPolicy::leftmost_invalid(unsigned flat_set) const {
  for (unsigned w = 0; w < ways_; ++w)
    if (!valid_[idx(flat_set, w)]) return static_cast<int>(w);
  return -1;
}

unsigned ReplacementPolicy::peek_victim(unsigned flat_set) const {
  int inv = leftmost_invalid(flat_set);
  if (inv >= 0) return static_cast<unsigned>(inv);
  return pick_victim(flat_set);
}

unsigned ReplacementPolicy::select_victim(unsigned flat_set) {
  int inv = leftmost_invalid(flat_set);
  if (inv >= 0) return static_cast<unsigned>(inv);
  unsigned w = pick_victim(flat_set);
  commit_victim(flat_set, w);
  return w;
}

int ReplacementPolicy::control_value(unsigned flat_set, unsigned way) const {
  if (!valid_[idx(flat_set, way)]) return -1;
  return control(flat_set, way);
}

void ReplacementPolicy::reset() {
  std::fill(valid_.begin(), valid_.end(), 0);
}

std::uint64_t ReplacementPolicy::state_digest() const {
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (unsigned s = 0; s < total_sets_; ++s)
    for (unsigned w = 0; w < ways_; ++w)
      h = splitmix64(h ^ static_cast<std::uint64_t>(
                             control_value(s, w) + 2));
  digest_extra(h);
  return h;
}

// ---------------------------------------------------------------------------
// LRU: dense recency ranks, 0 = most recent.

class LruPolicy final : public ReplacementPolicy {
 public:
  LruPolicy(const CacheGeometry& g)
      : ReplacementPolicy("lru", g), pos_(valid_.size(), 0xff) {}

  int max_control() const override { return static_cast<int>(ways_) - 1; }

  void reset() override {
    ReplacementPolicy::reset();
    std::fill(pos_.begin(), pos_.end(), 0xff);
  }

 protected:
  void fill(unsigned s, unsigned way) override {
    for (unsigned w = 0; w < ways_; ++w)
      if (w != way && valid_[idx(s, w)]) ++pos_[idx(s, w)];
    pos_[idx(s, way)] = 0;
  }

  void hit(unsigned s, unsigned way) override {
    std::uint8_t old = pos_[idx(s, way)];
    for (unsigned w = 0; w < ways_; ++w)
      if (valid_[idx(s, w)] && pos_[idx(s, w)] < old) ++pos_[idx(s, w)];
    pos_[idx(s, way)] = 0;
  }

  void invalidate(unsigned s, unsigned way) override {
    std::uint8_t old = pos_[idx(s, way)];
    for (unsigned w = 0; w < ways_; ++w)
      if (valid_[idx(s, w)] && pos_[idx(s, w)] > old) --pos_[idx(s, w)];
    pos_[idx(s, way)] = 0xff;
  }

  unsigned pick_victim(unsigned s) const override {
    for (unsigned w = 0; w < ways_; ++w)
      if (pos_[idx(s, w)] == ways_ - 1) return w;
    return 0;
  }

  int control(unsigned s, unsigned w) const override { return pos_[idx(s, w)]; }

 private:
  std::vector<std::uint8_t> pos_;
};

// ---------------------------------------------------------------------------
// FIFO: eviction in insertion order, untouched by hits.

class FifoPolicy final : public ReplacementPolicy {
 public:
  FifoPolicy(const CacheGeometry& g)
      : ReplacementPolicy("fifo", g),
        seq_(valid_.size(), 0),
        next_(total_sets_, 0) {}

  int max_control() const override { return static_cast<int>(ways_) - 1; }

  void reset() override {
    ReplacementPolicy::reset();
    std::fill(seq_.begin(), seq_.end(), 0);
    std::fill(next_.begin(), next_.end(), 0);
  }

 protected:
  void fill(unsigned s, unsigned way) override { seq_[idx(s, way)] = next_[s]++; }
  void hit(unsigned, unsigned) override {}

  unsigned pick_victim(unsigned s) const override {
    unsigned best = 0;
    std::uint32_t best_seq = 0;
    bool found = false;
    for (unsigned w = 0; w < ways_; ++w) {
      if (!valid_[idx(s, w)]) continue;
      if (!found || seq_[idx(s, w)] < best_seq) {
        found = true;
        best = w;
        best_seq = seq_[idx(s, w)];
      }
    }
    return best;
  }

  // Queue rank, 0 = next to leave.
  int control(unsigned s, unsigned way) const override {
    int rank = 0;
    for (unsigned w = 0; w < ways_; ++w)
      if (w != way && valid_[idx(s, w)] && seq_[idx(s, w)] < seq_[idx(s, way)])
        ++rank;
    return rank;
  }

 private:
  std::vector<std::uint32_t> seq_;
  std::vector<std::uint32_t> next_;
};

// ---------------------------------------------------------------------------
// CLOCK: one reference bit per way plus a rotating hand.

class ClockPolicy final : public ReplacementPolicy {
 public:
  ClockPolicy(const CacheGeometry& g)
      : ReplacementPolicy("clock", g),
        ref_(valid_.size(), 0),
        hand_(total_sets_, 0) {}

  int max_control() const override { return 1; }

  void reset() override {
    ReplacementPolicy::reset();
    std::fill(ref_.begin(), ref_.end(), 0);
    std::fill(hand_.begin(), hand_.end(), 0);
  }

 protected:
  void fill(unsigned s, unsigned way) override { ref_[idx(s, way)] = 1; }
  void hit(unsigned s, unsigned way) override { ref_[idx(s, way)] = 1; }
  void invalidate(unsigned s, unsigned way) override { ref_[idx(s, way)] = 0; }

  unsigned pick_victim(unsigned s) const override {
    unsigned h = hand_[s];
    for (unsigned i = 0; i < ways_; ++i) {
      if (!ref_[idx(s, h)]) return h;
      h = (h + 1) % ways_;
    }
    return hand_[s]; // every bit set: first pass clears, second stops here
  }

  void commit_victim(unsigned s, unsigned victim) override {
    unsigned h = hand_[s];
    while (ref_[idx(s, h)]) {
      ref_[idx(s, h)] = 0;
      h = (h + 1) % ways_;
    }
    assert(h == victim);
    (void)victim;
    hand_[s] = (victim + 1) % ways_;
  }

  int control(unsigned s, unsigned w) const override { return ref_[idx(s, w)]; }

  void digest_extra(std::uint64_t& h) const override {
    for (unsigned v : hand_) h = splitmix64(h ^ v);
  }

 private:
  std::vector<std::uint8_t> ref_;
  std::vector<std::uint8_t> hand_;
};

// ---------------------------------------------------------------------------
// NRU: one bit per way; setting the last zero bit clears all the others.

class NruPolicy final : public ReplacementPolicy {
 public:
  NruPolicy(const CacheGeometry& g)
      : ReplacementPolicy("nru", g), bit_(valid_.size(), 0) {}

  int max_control() const override { return 1; }

  void reset() override {
    ReplacementPolicy::reset();
    std::fill(bit_.begin(), bit_.end(), 0);
  }

 protected:
  void touch(unsigned s, unsigned way) {
    bit_[idx(s, way)] = 1;
    for (unsigned w = 0; w < ways_; ++w)
      if (valid_[idx(s, w)] && !bit_[idx(s, w)]) return;
    for (unsigned w = 0; w < ways_; ++w)
      if (w != way) bit_[idx(s, w)] = 0;
  }

  void fill(unsigned s, unsigned way) override { touch(s, way); }
  void hit(unsigned s, unsigned way) override { touch(s, way); }
  void invalidate(unsigned s, unsigned way) override { bit_[idx(s, way)] = 0; }

  unsigned pick_victim(unsigned s) const override {
    for (unsigned w = 0; w < ways_; ++w)
      if (!bit_[idx(s, w)]) return w;
    return 0;
  }

  int control(unsigned s, unsigned w) const override { return bit_[idx(s, w)]; }

 private:
  std::vector<std::uint8_t> bit_;
};

// ---------------------------------------------------------------------------
// Tree-PLRU: per-set binary tree of direction bits; needs 2^k ways.

class TreePlruPolicy final : public ReplacementPolicy {
 public:
  TreePlruPolicy(const CacheGeometry& g)
      : ReplacementPolicy("tree_plru", g),
        nodes_(static_cast<size_t>(total_sets_) * (ways_ - 1), 0) {
    if (!is_pow2(ways_))
      throw ProfileError("tree_plru needs a power-of-two way count, got " +
                         std::to_string(ways_));
  }

  int max_control() const override { return 0; }

  void reset() override {
    ReplacementPolicy::reset();
    std::fill(nodes_.begin(), nodes_.end(), 0);
  }

 protected:
  // Walk root to leaf, pointing every node away from the accessed way.
  void touch(unsigned s, unsigned way) {
    unsigned node = 0, lo = 0, hi = ways_;
    std::uint8_t* t = &nodes_[static_cast<size_t>(s) * (ways_ - 1)];
    while (hi - lo > 1) {
      unsigned mid = lo + (hi - lo) / 2;
      if (way < mid) {
        t[node] = 1; // next victim on the right
        node = 2 * node + 1;
        hi = mid;
      } else {
        t[node] = 0;
        node = 2 * node + 2;
        lo = mid;
      }
    }
  }

  void fill(unsigned s, unsigned way) override { touch(s, way); }
  void hit(unsigned s, unsigned way) override { touch(s, way); }

  unsigned pick_victim(unsigned s) const override {
    unsigned node = 0, lo = 0, hi = ways_;
    const std::uint8_t* t = &nodes_[static_cast<size_t>(s) * (ways_ - 1)];
    while (hi - lo > 1) {
      unsigned mid = lo + (hi - lo) / 2;
      if (t[node] == 0) {
        node = 2 * node + 1;
        hi = mid;
      } else {
        node = 2 * node + 2;
        lo = mid;
      }
    }
    return lo;
  }

  int control(unsigned, unsigned) const override { return 0; }

  void digest_extra(std::uint64_t& h) const override {
    for (std::uint8_t b : nodes_) h = splitmix64(h ^ b);
  }

 private:
  std::vector<std::uint8_t> nodes_;
};

// ---------------------------------------------------------------------------
// Random: uniform victim from a per-set counter RNG stream.

class RandomPolicy final : public ReplacementPolicy {
 public:
  RandomPolicy(const CacheGeometry& g, std::uint64_t seed)
      : ReplacementPolicy("random", g) {
    rng_.reserve(total_sets_);
    for (unsigned s = 0; s < total_sets_; ++s) rng_.emplace_back(seed, s);
  }

  int max_control() const override { return 0; }

  void reset() override {
    ReplacementPolicy::reset();
    for (auto& r : rng_) r.reset();
  }

 protected:
  void fill(unsigned, unsigned) override {}
  void hit(unsigned, unsigned) override {}

  unsigned pick_victim(unsigned s) const override {
    return static_cast<unsigned>(rng_[s].peek_below(ways_));
  }

  void commit_victim(unsigned s, unsigned way) override {
    unsigned drawn = static_cast<unsigned>(rng_[s].below(ways_));
    (void)drawn;
    assert(drawn == way);
    (void)way;
  }

  int control(unsigned, unsigned) const override { return 0; }

  void digest_extra(std::uint64_t& h) const override {
    for (const auto& r : rng_) h = splitmix64(h ^ r.draws());
  }

 private:
  mutable std::vector<CounterRng> rng_;
};

// ---------------------------------------------------------------------------
// RRIP family: 2-bit ages, victim = leftmost oldest way. Covers SRRIP, BRRIP,
// DRRIP and the quad-age modes reverse-engineered from recent parts.

class RripPolicy final : public ReplacementPolicy {
 public:
  RripPolicy(const std::string& name, RripKind kind, const CacheGeometry& g,
             const PolicyConfig& cfg, std::uint64_t seed)
      : ReplacementPolicy(name, g),
        kind_(kind),
        age_(valid_.size(), 0),
        aging_persistent_(cfg.aging == "rrip"),
        quad_hit_decrement_(cfg.hit_promotion == "decrement") {
    if (kind_ == RripKind::Brrip || kind_ == RripKind::Drrip) {
      eps_denom_ = std::max<std::uint64_t>(
          1, std::llround(1.0 / std::max(cfg.brrip_epsilon, 1e-9)));
      rng_.reserve(total_sets_);
      for (unsigned s = 0; s < total_sets_; ++s) rng_.emplace_back(seed, s);
    }
    if (kind_ == RripKind::QuadAgeDuel || kind_ == RripKind::Drrip) {
      duel_ = DuelingState(total_sets_, cfg.psel_bits, cfg.psel_init);
      if (kind_ == RripKind::QuadAgeDuel) {
        if (cfg.mode1_leaders.size() != g.slices ||
            cfg.mode2_leaders.size() != g.slices)
          throw ProfileError(name + " needs one leader per slice for each mode");
        for (unsigned k = 0; k < g.slices; ++k) {
          duel_.set_leader(k * g.sets + cfg.mode1_leaders[k], 1);
          duel_.set_leader(k * g.sets + cfg.mode2_leaders[k], 2);
        }
      } else {
        // Constituency sampling: two sets per 64-set stride lead each side.
        for (unsigned s = 0; s < total_sets_; ++s) {
          if ((s & 63u) == 0) duel_.set_leader(s, 1);
          else if ((s & 63u) == 32) duel_.set_leader(s, 2);
        }
      }
    }
  }

  int max_control() const override { return 3; }

  void on_miss(unsigned s) override {
    if (kind_ == RripKind::QuadAgeDuel || kind_ == RripKind::Drrip)
      duel_.on_miss(s);
  }

  void reset() override {
    ReplacementPolicy::reset();
    std::fill(age_.begin(), age_.end(), 0);
    for (auto& r : rng_) r.reset();
  }

  bool set_control(unsigned s, unsigned way, int v) override {
    if (v < 0 || v > 3) return false;
    age_[idx(s, way)] = static_cast<std::uint8_t>(v);
    return true;
  }

  DuelingState* dueling() override {
    if (kind_ == RripKind::QuadAgeDuel || kind_ == RripKind::Drrip)
      return &duel_;
    return nullptr;
  }

 protected:
  std::uint8_t insertion_age(unsigned s) {
    switch (kind_) {
      case RripKind::Srrip: return 2;
      case RripKind::Brrip: return brrip_age(s);
      case RripKind::Drrip: {
        unsigned r = duel_.role(s);
        bool deep = (r == 2) || (r == 0 && duel_.psel() >= duel_.midpoint());
        return deep ? brrip_age(s) : 2;
      }
      case RripKind::QuadAgeM1: return 2;
      case RripKind::QuadAgeM2: return 3;
      case RripKind::QuadAgeDuel: return duel_.mode2_for(s) ? 3 : 2;
    }
    return 2;
  }

  std::uint8_t brrip_age(unsigned s) {
    return rng_[s].below(eps_denom_) == 0 ? 2 : 3;
  }

  void fill(unsigned s, unsigned way) override {
    age_[idx(s, way)] = insertion_age(s);
  }

  void hit(unsigned s, unsigned way) override {
    bool quad = kind_ == RripKind::QuadAgeM1 || kind_ == RripKind::QuadAgeM2 ||
                kind_ == RripKind::QuadAgeDuel;
    std::uint8_t& a = age_[idx(s, way)];
    if (quad && quad_hit_decrement_) {
      if (a > 0) --a;
    } else {
      a = 0;
    }
  }

  unsigned pick_victim(unsigned s) const override {
    std::uint8_t oldest = 0;
    for (unsigned w = 0; w < ways_; ++w)
      oldest = std::max(oldest, age_[idx(s, w)]);
    for (unsigned w = 0; w < ways_; ++w)
      if (age_[idx(s, w)] == oldest) return w;
    return 0;
  }

  void commit_victim(unsigned s, unsigned) override {
    if (!aging_persistent_) return;
    std::uint8_t oldest = 0;
    for (unsigned w = 0; w < ways_; ++w)
      oldest = std::max(oldest, age_[idx(s, w)]);
    std::uint8_t delta = static_cast<std::uint8_t>(3 - oldest);
    if (delta == 0) return;
    for (unsigned w = 0; w < ways_; ++w)
      age_[idx(s, w)] = static_cast<std::uint8_t>(age_[idx(s, w)] + delta);
  }

  int control(unsigned s, unsigned w) const override { return age_[idx(s, w)]; }

  void digest_extra(std::uint64_t& h) const override {
    if (kind_ == RripKind::QuadAgeDuel || kind_ == RripKind::Drrip)
      h = splitmix64(h ^ duel_.psel());
    for (const auto& r : rng_) h = splitmix64(h ^ r.draws());
  }

 private:
  RripKind kind_;
  std::vector<std::uint8_t> age_;
  bool aging_persistent_ = true;
  bool quad_hit_decrement_ = true;
  std::uint64_t eps_denom_ = 32;
  mutable std::vector<CounterRng> rng_;
  DuelingState duel_;
};

// ---------------------------------------------------------------------------

std::vector<std::string> policy_zoo() {
  return {"lru",   "tree_plru", "fifo",       "clock",      "nru",
          "srrip", "brrip",     "drrip",      "quadage_m1", "quadage_m2",
          "quadage_duel", "random"};
}

std::unique_ptr<ReplacementPolicy> make_policy(const std::string& name,
                                               const CacheGeometry& g,
                                               const PolicyConfig& cfg,
                                               std::uint64_t seed) {
  if (name == "lru") return std::make_unique<LruPolicy>(g);
  if (name == "tree_plru") return std::make_unique<TreePlruPolicy>(g);
  if (name == "fifo") return std::make_unique<FifoPolicy>(g);
  if (name == "clock") return std::make_unique<ClockPolicy>(g);
  if (name == "nru") return std::make_unique<NruPolicy>(g);
  if (name == "random") return std::make_unique<RandomPolicy>(g, seed);
  if (name == "srrip")
    return std::make_unique<RripPolicy>(name, RripKind::Srrip, g, cfg, seed);
  if (name == "brrip")
    return std::make_unique<RripPolicy>(name, RripKind::Brrip, g, cfg, seed);
  if (name == "drrip")
    return std::make_unique<RripPolicy>(name, RripKind::Drrip, g, cfg, seed);
  if (name == "quadage_m1")
    return std::make_unique<RripPolicy>(name, RripKind::QuadAgeM1, g, cfg, seed);
  if (name == "quadage_m2")
    return std::make_unique<RripPolicy>(name, RripKind::QuadAgeM2, g, cfg, seed);
  if (name == "quadage_duel")
    return std::make_unique<RripPolicy>(name, RripKind::QuadAgeDuel, g, cfg, seed);
  throw ProfileError("unknown replacement policy '" + name + "'");
}

}  // namespace cachelab
