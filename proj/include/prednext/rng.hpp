#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace prednext {

// All randomness in a run derives from one experiment seed through named
// sub-streams, so adding a consumer never shifts another stream.
class RngStream {
 public:
  explicit RngStream(uint64_t state) : gen_(state) {}

  float uniform(float lo, float hi) {
    return std::uniform_real_distribution<float>(lo, hi)(gen_);
  }
  float normal(float mean = 0.f, float stddev = 1.f) {
    return std::normal_distribution<float>(mean, stddev)(gen_);
  }
  // Inclusive bounds.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(gen_);
  }
  bool bernoulli(float p) {
    return std::bernoulli_distribution(p)(gen_);
  }
  std::mt19937_64& gen() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

uint64_t hash_name(std::string_view name);

// Deterministic stream for (seed, name).
RngStream substream(uint64_t seed, std::string_view name);

}  // namespace prednext
