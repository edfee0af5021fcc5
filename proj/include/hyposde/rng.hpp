#pragma once

#include <cstdint>
#include <random>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace hyposde {

// splitmix64; used only to decorrelate (seed, stream) pairs into engine seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// One reproducible random stream. A Monte Carlo run derives one stream per
// path from (seed, path_index), so results do not depend on how paths are
// scheduled across workers.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : eng_(splitmix64(splitmix64(seed) ^ (stream_id + 0x632be59bd9b4e019ULL))) {}

  // uniform in (0, 1]
  double uniform() {
    return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
  }

  // standard normal via Box-Muller; avoids the implementation-defined
  // std::normal_distribution so streams are bitwise portable.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Static block partition of [0, n) over nthreads workers. Each index is
// processed exactly once and owns its output slot, so the result is
// independent of the worker count.
template <class Fn>
void parallel_for(std::size_t n, unsigned nthreads, Fn&& fn) {
  if (nthreads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::size_t chunk = (n + nthreads - 1) / nthreads;
  for (unsigned w = 0; w < nthreads; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace hyposde
