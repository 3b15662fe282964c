#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "hgcn/common.hpp"

namespace hgcn {

// Seeded RNG wrapper. One instance per logical consumer keeps draws
// independent of unrelated code paths, which keeps runs reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  real uniform(real lo, real hi) {
    std::uniform_real_distribution<real> d(lo, hi);
    return d(gen_);
  }
  real normal(real mean = 0, real stddev = 1) {
    std::normal_distribution<real> d(mean, stddev);
    return d(gen_);
  }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    std::uniform_int_distribution<int> d(lo, hi);
    return d(gen_);
  }
  template <class It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, gen_);
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace hgcn
