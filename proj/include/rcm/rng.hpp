#pragma once

#include <array>
#include <cstdint>

namespace rcm {

// Philox4x32-10 block cipher used as a counter-based generator.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter encrypt(Counter ctr, Key key);
};

// Stream identifiers keep the environment, walkers and corpora apart.
enum class StreamTag : std::uint32_t {
  environment = 1,
  walker = 2,
  slowed_walker = 3,
  corpus = 4,
  permutation = 5,
  refresh = 6,
  start = 7,
};

// Sequential draws from one keyed stream. Two engines with the same
// (seed, tag, stream) produce identical output regardless of thread.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, StreamTag tag, std::uint64_t stream);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // [0, 1) with 53 random bits
  double uniform();
  // (0, 1), never returns an endpoint
  double uniform_open();
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  double exponential(double rate = 1.0);
  double normal();
  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n);

 private:
  void refill();

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace rcm
