#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kvp {

// Error taxonomy. The CLI maps InputError/CapabilityError to exit code 1 and
// the numerical failures (RangeError, DataError, SolverError) to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Exponent or magnitude outside the representable range of a double.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise unusable data (payoff values, matrix entries).
class DataError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double rcond)
      : Error(what), rcond_(rcond) {}
  double rcond() const { return rcond_; }

 private:
  double rcond_;
};

/// Largest exponent accepted before exponentiation.
inline constexpr double kMaxExponent = 700.0;

/// Throws RangeError when `e` would overflow exp().
void check_exponent(double e, const char* where);

// ---------------------------------------------------------------------------
// Seeds and parallel loops

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed of stream `index` under `seed`; used for per-path RNG streams.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

/// Purposes for seeds derived from a master seed. Streams with different
/// purposes never coincide.
enum class SeedPurpose : std::uint64_t {
  training = 1,
  validation = 2,
  test = 3,
  ground_truth = 4,
  nested = 5,
  reference = 6,
  probe = 7,
  diagnostics = 8,
};

std::uint64_t derive_seed(std::uint64_t master, SeedPurpose purpose,
                          std::uint64_t index);

/// Number of worker threads used by parallel_for; defaults to 1.
int num_threads();
void set_num_threads(int n);

/// Runs body(i) for i in [0, n) on num_threads() threads with static
/// chunking. Results must be written to per-index slots by the caller, so the
/// output does not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Pairwise (cascade) summation.
double pairwise_sum(std::span<const double> v);

}  // namespace kvp
