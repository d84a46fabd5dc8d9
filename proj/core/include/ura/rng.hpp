#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

// Counter-based random streams (Philox4x32-10). A stream is addressed by
// (seed, stream id, trial index); draws inside a trial advance a 64-bit
// block counter. Identical (seed, stream, trial) always reproduces the
// same draws, which is what makes trial-parallel runs bit-reproducible.

namespace ura::rng {

struct PhiloxState {
  uint32_t key[2];
  uint64_t counter_hi;  // trial index
  uint64_t counter_lo;  // block index within the trial
  uint32_t buffer[4];
  int buffered = 0;
};

class Substream {
 public:
  Substream(uint64_t seed, uint64_t stream, uint64_t trial);

  uint32_t next_u32();
  uint64_t next_u64();
  // Uniform on (0,1), 53-bit resolution, never exactly 0.
  double next_uniform();
  // Standard circular complex Gaussian CN(0,1).
  std::complex<double> next_cgauss();
  // Real standard normal N(0,1).
  double next_gauss();

 private:
  void refill();
  PhiloxState st_;
  bool have_spare_gauss_ = false;
  double spare_gauss_ = 0.0;
};

// Packs a module tag plus up to five small nonnegative fields into a
// stream id so that pools drawn by different bound families never collide.
uint64_t pack_stream(uint32_t tag, uint64_t a = 0, uint64_t b = 0,
                     uint64_t c = 0, uint64_t d = 0, uint64_t e = 0);

// Runs fn(i) for i in [0, count) across `threads` workers. Each index is
// independent; any shared output must be written only at slot i. Results
// are deterministic for every thread count by construction.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& fn);

// Process-wide default worker count used when a plan does not set one.
unsigned default_threads();
void set_default_threads(unsigned n);

}  // namespace ura::rng
