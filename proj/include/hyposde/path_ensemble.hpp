#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hyposde {

constexpr double kNoExit = std::numeric_limits<double>::infinity();

// Monte Carlo path bundle on a shared time grid. states[p] is an
// (n_times x d) matrix; row i is the state at times[i]. Immutable by
// convention once a scheme has produced it.
struct PathEnsemble {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> states;   // one (n_times x d) block per path
  std::vector<double> exit_time;         // kNoExit when the path never exits
  std::vector<bool> stopped;
  std::vector<bool> diverged;
  std::uint64_t seed = 0;
  std::string scheme_tag;

  int n_paths() const { return static_cast<int>(states.size()); }
  int n_times() const { return static_cast<int>(times.size()); }
  int dim() const { return states.empty() ? 0 : static_cast<int>(states[0].cols()); }
  double horizon() const { return times.empty() ? 0.0 : times.back(); }
};

}  // namespace hyposde
