#pragma once

// Shared basics: error taxonomy, deterministic RNG helpers, a fixed-chunk
// parallel loop, and the FNV hash used for artifact fingerprints.

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace derdispatch {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorCode {
  generic = 1,
  infeasible_input = 2,
  certificate_failure = 3,
  convergence_failure = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct TopologyError : Error {
  explicit TopologyError(const std::string& m) : Error(ErrorCode::generic, m) {}
};
struct InputError : Error {
  explicit InputError(const std::string& m) : Error(ErrorCode::infeasible_input, m) {}
};
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& m) : Error(ErrorCode::convergence_failure, m) {}
};
struct CollapseError : Error {
  explicit CollapseError(const std::string& m) : Error(ErrorCode::convergence_failure, m) {}
};
struct FormulationError : Error {
  explicit FormulationError(const std::string& m) : Error(ErrorCode::generic, m) {}
};
struct CertificateError : Error {
  explicit CertificateError(const std::string& m) : Error(ErrorCode::certificate_failure, m) {}
};

using Rng = std::mt19937_64;

// Uniform in [0,1). Hand-rolled from raw bits so streams are identical
// across standard library implementations.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Derive an independent stream for item `index` of a seeded batch
// (splitmix64 mixing of the pair).
inline Rng sub_rng(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return Rng(z);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline int worker_count() {
  if (const char* env = std::getenv("DERDISPATCH_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, count). Chunk boundaries depend only on `count`
// and the worker count, so per-chunk accumulations combined in chunk order
// stay bit-reproducible no matter how threads are scheduled.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  int workers = worker_count();
  if (workers <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace derdispatch
