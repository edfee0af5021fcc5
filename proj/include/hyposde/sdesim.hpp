#pragma once

// Path simulation for the degenerate SDE
//   dZ = A Z dt + lift(b0(Z)) dt + lift(B0(Z)) dW,
// where only the first d0 coordinates carry drift perturbation and noise.
// Three schemes: Euler-Maruyama, exponential (mild-form) Euler with the
// exact frozen-OU step, and the dyadic frozen-coefficient scheme (exact OU
// steps with coefficients frozen at dyadic times, freeze point capped at
// time m).

#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "hyposde/matcore.hpp"
#include "hyposde/oukernel.hpp"
#include "hyposde/path_ensemble.hpp"
#include "hyposde/scalar_field.hpp"

namespace hyposde {

constexpr double kDivergenceNorm = 1e12;

struct LyapunovSpec {
  ScalarField phi;
  double growth_C = 0;
};

struct SDEModel {
  int d = 0, d0 = 0, r = 0;
  MatrixXd A;
  // Null b0 means identically-zero drift perturbation.
  std::function<VectorXd(const VectorXd&)> b0;       // R^d -> R^{d0}
  std::function<MatrixXd(const VectorXd&)> B0;       // R^d -> d0 x r
  std::optional<LyapunovSpec> lyapunov;

  MatrixXd Q0_at(const VectorXd& z) const {
    MatrixXd B = B0(z);
    return B * B.transpose();
  }
  // Q(z) = diag(Q0(z), 0), the full d x d diffusion matrix.
  MatrixXd Q_at(const VectorXd& z) const {
    MatrixXd Q = MatrixXd::Zero(d, d);
    Q.topLeftCorner(d0, d0) = Q0_at(z);
    return Q;
  }
  bool b0_is_zero() const { return !b0; }
  VectorXd drift_block(const VectorXd& z) const {
    return b0 ? b0(z) : VectorXd::Zero(d0).eval();
  }
};

namespace detail {

inline bool state_ok(const VectorXd& z) {
  return z.allFinite() && z.norm() < kDivergenceNorm;
}

// Precomputed per-step data for the exact frozen-OU update. The Gramian
// int_0^h e^{sA} lift(Q0) e^{sA^T} ds is linear in Q0, so it is assembled
// from per-basis-element Gramians instead of one block exponential per step.
struct FrozenStepOp {
  MatrixXd exp_hA;        // e^{hA}
  MatrixXd drift_map;     // int_0^h e^{sA} ds, applied to lift(b0)
  std::vector<MatrixXd> basis_gram;  // symmetric-basis Gramians, d0*(d0+1)/2
  MatrixXd unit_factor;   // d0 == 1 fast path: psd_factor of basis_gram[0]
  int d = 0, d0 = 0;

  FrozenStepOp(const MatrixXd& A, int d0_in, double h)
      : d(static_cast<int>(A.rows())), d0(d0_in) {
    exp_hA = mat_exp(A, h);
    drift_map = exp_integral(A, h);
    for (int a = 0; a < d0; ++a)
      for (int b = a; b < d0; ++b) {
        MatrixXd E = MatrixXd::Zero(d, d);
        E(a, b) = 1;
        E(b, a) = 1;
        basis_gram.push_back(gramian(A, E, h));
      }
    if (d0 == 1) unit_factor = psd_factor(basis_gram[0]);
  }

  MatrixXd noise_factor(const MatrixXd& Q0) const {
    if (d0 == 1) return std::sqrt(Q0(0, 0)) * unit_factor;
    MatrixXd G = MatrixXd::Zero(d, d);
    int idx = 0;
    for (int a = 0; a < d0; ++a)
      for (int b = a; b < d0; ++b) {
        double w = (a == b) ? Q0(a, a) : Q0(a, b);
        G += w * basis_gram[idx++];
      }
    return psd_factor(G);
  }
};

}  // namespace detail

// Per-step visitor contract: visit(path_index, step_index, t, state) is
// invoked for every grid point including step 0. Paths run independently;
// with nthreads > 1 the visitor must only touch per-path slots.

template <class Visitor>
std::vector<bool> run_euler(const SDEModel& m, const VectorXd& z0, double h,
                            int n_steps, int n_paths, std::uint64_t seed,
                            unsigned nthreads, Visitor&& visit) {
  std::vector<bool> diverged(n_paths, false);
  parallel_for(n_paths, nthreads, [&](std::size_t p) {
    RngStream stream(seed, p);
    VectorXd z = z0;
    visit(p, 0, 0.0, z);
    bool dead = false;
    for (int i = 0; i < n_steps; ++i) {
      if (!dead) {
        VectorXd drift = m.A * z;
        drift.head(m.d0) += m.drift_block(z);
        MatrixXd B = m.B0(z);
        VectorXd znew = z + h * drift;
        znew.head(m.d0) += std::sqrt(h) * (B * stream.normal_vector(m.r));
        if (detail::state_ok(znew)) {
          z = znew;
        } else {
          dead = true;
          diverged[p] = true;
        }
      }
      visit(p, i + 1, (i + 1) * h, z);
    }
  });
  return diverged;
}

template <class Visitor>
std::vector<bool> run_exp_euler(const SDEModel& m, const VectorXd& z0, double h,
                                int n_steps, int n_paths, std::uint64_t seed,
                                unsigned nthreads, Visitor&& visit) {
  detail::FrozenStepOp op(m.A, m.d0, h);
  std::vector<bool> diverged(n_paths, false);
  parallel_for(n_paths, nthreads, [&](std::size_t p) {
    RngStream stream(seed, p);
    VectorXd z = z0;
    visit(p, 0, 0.0, z);
    bool dead = false;
    for (int i = 0; i < n_steps; ++i) {
      if (!dead) {
        MatrixXd F = op.noise_factor(m.Q0_at(z));
        VectorXd znew = op.exp_hA * z;
        VectorXd lifted = VectorXd::Zero(m.d);
        lifted.head(m.d0) = m.drift_block(z);
        znew += op.drift_map * lifted;
        znew += F * stream.normal_vector(F.cols());
        if (detail::state_ok(znew)) {
          z = znew;
        } else {
          dead = true;
          diverged[p] = true;
        }
      }
      visit(p, i + 1, (i + 1) * h, z);
    }
  });
  return diverged;
}

// Dyadic frozen-coefficient scheme at level m: step h = 2^-m with exact
// frozen-OU updates; coefficients are frozen at the state Z_{k 2^-m ^ m},
// i.e. past time m the freeze point stays at Z_m. Driftless models only.
template <class Visitor>
std::vector<bool> run_frozen_dyadic(const SDEModel& m, int level,
                                    const VectorXd& z0, double T, int n_paths,
                                    std::uint64_t seed, unsigned nthreads,
                                    Visitor&& visit) {
  if (!m.b0_is_zero())
    throw std::invalid_argument(
        "frozen_dyadic_scheme: requires b0 == 0; use exp_euler for models with drift");
  require(level >= 1, "frozen_dyadic_scheme: require level >= 1");
  const double h = std::ldexp(1.0, -level);
  const int n_steps = static_cast<int>(std::llround(T / h));
  require(n_steps >= 1 && std::abs(n_steps * h - T) < 1e-12,
          "frozen_dyadic_scheme: horizon must be a multiple of 2^-level");
  const double cap = static_cast<double>(level);  // freeze saturates at t = m
  detail::FrozenStepOp op(m.A, m.d0, h);
  std::vector<bool> diverged(n_paths, false);
  parallel_for(n_paths, nthreads, [&](std::size_t p) {
    RngStream stream(seed, p);
    VectorXd z = z0;
    VectorXd z_freeze = z0;
    visit(p, 0, 0.0, z);
    bool dead = false;
    for (int i = 0; i < n_steps; ++i) {
      double t = i * h;
      if (!dead) {
        if (t <= cap) z_freeze = z;
        MatrixXd F = op.noise_factor(m.Q0_at(z_freeze));
        VectorXd znew = op.exp_hA * z + F * stream.normal_vector(F.cols());
        if (detail::state_ok(znew)) {
          z = znew;
        } else {
          dead = true;
          diverged[p] = true;
        }
      }
      visit(p, i + 1, (i + 1) * h, z);
    }
  });
  return diverged;
}

namespace detail {

inline PathEnsemble make_ensemble(int n_paths, int n_steps, double h, int d,
                                  std::uint64_t seed, std::string tag) {
  PathEnsemble ens;
  ens.times.resize(n_steps + 1);
  for (int i = 0; i <= n_steps; ++i) ens.times[i] = i * h;
  ens.states.assign(n_paths, Eigen::MatrixXd(n_steps + 1, d));
  ens.exit_time.assign(n_paths, kNoExit);
  ens.stopped.assign(n_paths, false);
  ens.diverged.assign(n_paths, false);
  ens.seed = seed;
  ens.scheme_tag = std::move(tag);
  return ens;
}

}  // namespace detail

inline PathEnsemble euler_maruyama(const SDEModel& m, const VectorXd& z0, double h,
                                   double T, int n, std::uint64_t seed,
                                   unsigned nthreads = 1) {
  require(h > 0 && T >= h, "euler_maruyama: require h > 0 and T >= h");
  const int n_steps = static_cast<int>(std::llround(T / h));
  PathEnsemble ens = detail::make_ensemble(n, n_steps, h, m.d, seed, "euler");
  auto div = run_euler(m, z0, h, n_steps, n, seed, nthreads,
                       [&](std::size_t p, int i, double, const VectorXd& z) {
                         ens.states[p].row(i) = z.transpose();
                       });
  ens.diverged.assign(div.begin(), div.end());
  return ens;
}

inline PathEnsemble exp_euler(const SDEModel& m, const VectorXd& z0, double h,
                              double T, int n, std::uint64_t seed,
                              unsigned nthreads = 1) {
  require(h > 0 && T >= h, "exp_euler: require h > 0 and T >= h");
  const int n_steps = static_cast<int>(std::llround(T / h));
  PathEnsemble ens = detail::make_ensemble(n, n_steps, h, m.d, seed, "exp-euler");
  auto div = run_exp_euler(m, z0, h, n_steps, n, seed, nthreads,
                           [&](std::size_t p, int i, double, const VectorXd& z) {
                             ens.states[p].row(i) = z.transpose();
                           });
  ens.diverged.assign(div.begin(), div.end());
  return ens;
}

inline PathEnsemble frozen_dyadic_scheme(const SDEModel& m, int level,
                                         const VectorXd& z0, double T, int n,
                                         std::uint64_t seed, unsigned nthreads = 1) {
  const double h = std::ldexp(1.0, -level);
  const int n_steps = static_cast<int>(std::llround(T / h));
  PathEnsemble ens =
      detail::make_ensemble(n, n_steps, h, m.d, seed, "frozen-dyadic");
  auto div = run_frozen_dyadic(m, level, z0, T, n, seed, nthreads,
                               [&](std::size_t p, int i, double, const VectorXd& z) {
                                 ens.states[p].row(i) = z.transpose();
                               });
  ens.diverged.assign(div.begin(), div.end());
  return ens;
}

// Freeze each path at its first grid time outside the open ball B(center, R).
// Exit is detected on the grid only; overshoot between grid points is not
// corrected. A start outside the closure exits at time 0.
inline PathEnsemble stop_on_exit(const PathEnsemble& ens, const VectorXd& center,
                                 double R) {
  require(R > 0, "stop_on_exit: require R > 0");
  PathEnsemble out = ens;
  for (int p = 0; p < out.n_paths(); ++p) {
    Eigen::MatrixXd& path = out.states[p];
    for (int i = 0; i < out.n_times(); ++i) {
      if ((path.row(i).transpose() - center).norm() >= R) {
        out.exit_time[p] = out.times[i];
        out.stopped[p] = true;
        for (int j = i + 1; j < out.n_times(); ++j) path.row(j) = path.row(i);
        break;
      }
    }
  }
  return out;
}

struct LyapunovReport {
  std::vector<double> times;
  std::vector<double> means;    // E[phi(Z_{t ^ tau})]
  std::vector<double> stderrs;
  std::vector<double> bounds;   // phi(z0) e^{Ct}
  std::vector<int> violations;  // time indices where mean - 3 se > bound
};

inline LyapunovReport lyapunov_monitor(const PathEnsemble& ens,
                                       const ScalarField& phi, double C) {
  LyapunovReport rep;
  rep.times = ens.times;
  const int n = ens.n_paths();
  const double phi0 = phi(ens.states[0].row(0).transpose());
  for (int i = 0; i < ens.n_times(); ++i) {
    double sum = 0, sumsq = 0;
    for (int p = 0; p < n; ++p) {
      double v = phi(ens.states[p].row(i).transpose());
      if (!std::isfinite(v))
        throw std::runtime_error("lyapunov_monitor: phi non-finite at a visited state");
      sum += v;
      sumsq += v * v;
    }
    double mean = sum / n;
    double se = std::sqrt(std::max(0.0, sumsq / n - mean * mean) / std::max(1, n - 1));
    double bound = phi0 * std::exp(C * ens.times[i]);
    rep.means.push_back(mean);
    rep.stderrs.push_back(se);
    rep.bounds.push_back(bound);
    if (mean - 3 * se > bound) rep.violations.push_back(i);
  }
  return rep;
}

struct ExitProbPoint {
  double radius = 0;
  double estimate = 0;
  double stderr_ = 0;
};

// P(tau_R <= t) for each radius, estimated from one common unstopped
// Euler ensemble (paths are shared across radii, so the curve is monotone by
// construction). tau_R is the first grid time with |Z - center| >= R.
inline std::vector<ExitProbPoint> exit_prob_curve(const SDEModel& m,
                                                  const VectorXd& z0,
                                                  const std::vector<double>& radii,
                                                  double t, double h, int n,
                                                  std::uint64_t seed,
                                                  unsigned nthreads = 1) {
  require(!radii.empty(), "exit_prob_curve: empty radius list");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    require(radii[i] > z0.norm(), "exit_prob_curve: radii must exceed |z0|");
    if (i > 0) require(radii[i] > radii[i - 1], "exit_prob_curve: radii must increase");
  }
  const int n_steps = static_cast<int>(std::llround(t / h));
  const int nr = static_cast<int>(radii.size());
  std::vector<std::vector<char>> exited(n, std::vector<char>(nr, 0));
  run_euler(m, z0, h, n_steps, n, seed, nthreads,
            [&](std::size_t p, int, double, const VectorXd& z) {
              double nz = z.norm();
              for (int j = 0; j < nr; ++j)
                if (!exited[p][j] && nz >= radii[j]) exited[p][j] = 1;
            });
  std::vector<ExitProbPoint> out(nr);
  for (int j = 0; j < nr; ++j) {
    int count = 0;
    for (int p = 0; p < n; ++p) count += exited[p][j];
    double prob = static_cast<double>(count) / n;
    out[j] = {radii[j], prob, std::sqrt(prob * (1 - prob) / n)};
  }
  return out;
}

}  // namespace hyposde
