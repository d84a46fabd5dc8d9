#include "ura/rng.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace ura::rng {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

inline uint32_t mulhi(uint32_t a, uint32_t b, uint32_t* lo) {
  const uint64_t p = static_cast<uint64_t>(a) * b;
  *lo = static_cast<uint32_t>(p);
  return static_cast<uint32_t>(p >> 32);
}

inline void philox_round(uint32_t ctr[4], const uint32_t key[2]) {
  uint32_t lo0, lo1;
  const uint32_t hi0 = mulhi(kPhiloxM0, ctr[0], &lo0);
  const uint32_t hi1 = mulhi(kPhiloxM1, ctr[2], &lo1);
  const uint32_t out0 = hi1 ^ ctr[1] ^ key[0];
  const uint32_t out1 = lo1;
  const uint32_t out2 = hi0 ^ ctr[3] ^ key[1];
  const uint32_t out3 = lo0;
  ctr[0] = out0;
  ctr[1] = out1;
  ctr[2] = out2;
  ctr[3] = out3;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::atomic<unsigned> g_default_threads{0};

}  // namespace

Substream::Substream(uint64_t seed, uint64_t stream, uint64_t trial) {
  const uint64_t key = splitmix64(splitmix64(seed) ^ stream);
  st_.key[0] = static_cast<uint32_t>(key);
  st_.key[1] = static_cast<uint32_t>(key >> 32);
  st_.counter_hi = trial;
  st_.counter_lo = 0;
  st_.buffered = 0;
}

void Substream::refill() {
  uint32_t ctr[4] = {
      static_cast<uint32_t>(st_.counter_lo),
      static_cast<uint32_t>(st_.counter_lo >> 32),
      static_cast<uint32_t>(st_.counter_hi),
      static_cast<uint32_t>(st_.counter_hi >> 32),
  };
  uint32_t key[2] = {st_.key[0], st_.key[1]};
  for (int r = 0; r < 10; ++r) {
    philox_round(ctr, key);
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  for (int i = 0; i < 4; ++i) st_.buffer[i] = ctr[i];
  st_.buffered = 4;
  ++st_.counter_lo;
}

uint32_t Substream::next_u32() {
  if (st_.buffered == 0) refill();
  return st_.buffer[--st_.buffered];
}

uint64_t Substream::next_u64() {
  const uint64_t hi = next_u32();
  const uint64_t lo = next_u32();
  return (hi << 32) | lo;
}

double Substream::next_uniform() {
  const uint64_t bits = next_u64() >> 11;  // 53 bits
  double u = static_cast<double>(bits) * 0x1.0p-53;
  if (u <= 0.0) u = 0x1.0p-53;
  return u;
}

std::complex<double> Substream::next_cgauss() {
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-std::log(u1));
  return {r * std::cos(2.0 * M_PI * u2), r * std::sin(2.0 * M_PI * u2)};
}

double Substream::next_gauss() {
  if (have_spare_gauss_) {
    have_spare_gauss_ = false;
    return spare_gauss_;
  }
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_gauss_ = r * std::sin(2.0 * M_PI * u2);
  have_spare_gauss_ = true;
  return r * std::cos(2.0 * M_PI * u2);
}

uint64_t pack_stream(uint32_t tag, uint64_t a, uint64_t b, uint64_t c,
                     uint64_t d, uint64_t e) {
  constexpr uint64_t kFieldMax = (1ull << 12) - 1;
  for (uint64_t v : {a, b, c, d, e}) {
    if (v > kFieldMax)
      throw std::overflow_error("pack_stream: field exceeds 12 bits");
  }
  uint64_t s = static_cast<uint64_t>(tag & 0xF) << 60;
  s |= a << 48;
  s |= b << 36;
  s |= c << 24;
  s |= d << 12;
  s |= e;
  return s;
}

unsigned default_threads() {
  unsigned n = g_default_threads.load();
  if (n == 0) {
    n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
  }
  return n;
}

void set_default_threads(unsigned n) { g_default_threads.store(n); }

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = default_threads();
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const unsigned n = std::min<std::size_t>(threads, count);
  pool.reserve(n);
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace ura::rng
