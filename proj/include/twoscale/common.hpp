#pragma once

// Shared error types, deterministic random numbers and small utilities.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace twoscale {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input or configuration rejected before any computation starts.
struct ValidationError : Error {
  using Error::Error;
};

// Iterative solver gave up; carries the last residual for diagnostics.
struct SolveError : Error {
  SolveError(const std::string& msg, double residual_, int iterations_)
      : Error(msg), residual(residual_), iterations(iterations_) {}
  double residual = 0.0;
  int iterations = 0;
};

// Deterministic generator. Distributions are hand-rolled on top of the
// raw 64-bit stream so that identical seeds give identical output
// independent of the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64() {
    // xorshift* step; deterministic and portable
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  double uniform() {  // in [0,1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(two_pi * u2);
    has_spare_ = true;
    return r * std::cos(two_pi * u2);
  }

  int index(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Runs fn(i) for i in [0,count) on up to max_threads workers. Results must be
// written to pre-sized slots so output order never depends on scheduling.
void parallel_for(int count, int max_threads, const std::function<void(int)>& fn);

// Worker cap from the TWOSCALE_THREADS environment variable (>=1).
int worker_count();

// Formats a double with 17 significant digits (round-trip safe).
std::string format_full(double v);

}  // namespace twoscale
