#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace eqspike {

/** Deterministic random stream keyed by (seed, stream id).
 *
 * Identical keys produce identical sequences on every platform: the
 * generator is mt19937_64 (state sequence fixed by the standard) and all
 * distributions are derived from raw 64-bit draws by hand, never through
 * std distribution objects whose output is implementation-defined. */
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) : gen_(mix(seed, stream)) {}

  std::uint64_t next_u64() { return gen_(); }

  /** Uniform in [0, 1) with 53-bit resolution. */
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /** Standard normal via Box-Muller; consumes exactly two draws. */
  double normal() {
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /** Uniform integer in [0, n). */
  Eigen::Index uniform_index(Eigen::Index n) {
    return static_cast<Eigen::Index>(gen_() % static_cast<std::uint64_t>(n));
  }

  template <typename Derived>
  void fill_uniform(Eigen::DenseBase<Derived>& x, double lo = 0.0, double hi = 1.0) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x.derived().data()[i] = uniform(lo, hi);
  }

  template <typename Derived>
  void fill_normal(Eigen::DenseBase<Derived>& x) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x.derived().data()[i] = normal();
  }

  std::string state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void restore(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
  }

 private:
  // SplitMix64 over the key pair; decorrelates nearby (seed, stream) values.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 gen_;
};

}  // namespace eqspike
