#pragma once

// Exact analytics and sampling for the frozen-coefficient hypoelliptic OU
// process dZ = AZ dt + sqrt(Q) dW with Q = diag(Q0, 0): transition law
// N(e^{tA} z, Q_t), Monte Carlo semigroup / resolvent functionals, the
// commutation formula for directional derivatives, and the small-time
// log-log slope of det(Q_t).

#include <cmath>
#include <utility>
#include <vector>

#include "hyposde/matcore.hpp"
#include "hyposde/path_ensemble.hpp"
#include "hyposde/scalar_field.hpp"

namespace hyposde {

struct OUModel {
  MatrixXd A;       // d x d drift matrix
  MatrixXd Q0;      // d0 x d0 positive definite diffusion block
  MatrixXd Q;       // d x d, diag(Q0, 0)
  int d = 0;
  int d0 = 0;
  int k = 0;        // Kalman index; construction fails if infinite
  double eta = 0;   // ellipticity of Q0: eta |h|^2 <= <Q0 h, h> <= |h|^2 / eta
  double omega = 0; // spectral abscissa of A
  double growth_M = 1;  // ||e^{tA}|| <= M e^{omega t} on a sampled t-range

  OUModel(MatrixXd A_in, MatrixXd Q0_in)
      : A(std::move(A_in)), Q0(std::move(Q0_in)) {
    d = static_cast<int>(A.rows());
    d0 = static_cast<int>(Q0.rows());
    require(A.cols() == d && Q0.cols() == d0 && d0 >= 1 && d0 <= d,
            "OUModel: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Q0);
    double lmin = es.eigenvalues().minCoeff();
    double lmax = es.eigenvalues().maxCoeff();
    require(lmin > 0, "OUModel: Q0 must be positive definite");
    eta = std::min(lmin, 1.0 / lmax);
    Q = MatrixXd::Zero(d, d);
    Q.topLeftCorner(d0, d0) = Q0;
    auto rep = kalman_index(A, d0);
    require(rep.k.has_value(), "OUModel: (A, d0) is not hypoelliptic");
    k = *rep.k;
    omega = A.eigenvalues().real().maxCoeff();
    for (double t : {0.25, 0.5, 1.0, 2.0, 5.0, 10.0})
      growth_M = std::max(growth_M, mat_exp(A, t).norm() * std::exp(-omega * t));
  }
};

// Integrability threshold from det(Q_t) ~ t^{2k+1}: the Laplace-time integral
// of det(Q_t)^{-1/2p} converges iff p > (2k+1)/2, i.e. p >= k+1 with margin.
// ceil((2k+1)/2) + 1 = k + 2.
inline int p_default(const OUModel& m) { return std::max(2, m.k + 2); }

// Concrete floor below which the resolvent integrals are not guaranteed to
// converge absolutely.
inline double lambda_min(const OUModel& m) {
  double p = static_cast<double>(p_default(m));
  return std::max({0.0, m.omega, -m.A.trace() / p}) + 1.0;
}

struct McEstimate {
  double value = 0;
  double stderr_ = 0;
  double tail_bound = 0;  // analytic truncation term, resolvent only
};

// Transition law at time t starting at z: N(e^{tA} z, Q_t).
inline std::pair<VectorXd, MatrixXd> ou_transition(const OUModel& m,
                                                   const VectorXd& z, double t) {
  require(t > 0, "ou_transition: require t > 0");
  require(z.size() == m.d, "ou_transition: dimension mismatch");
  return {mat_exp(m.A, t) * z, gramian(m.A, m.Q, t)};
}

// Exact-in-law sampling on a grid via the Markov recursion
// Z_{t+h} = e^{hA} Z_t + N(0, Q_h). times must start at 0.
inline PathEnsemble ou_sample_path(const OUModel& m, const VectorXd& z0,
                                   const std::vector<double>& times, int n,
                                   std::uint64_t seed, unsigned nthreads = 1) {
  require(times.size() >= 2 && times.front() == 0.0,
          "ou_sample_path: grid must start at 0");
  for (std::size_t i = 1; i < times.size(); ++i)
    require(times[i] > times[i - 1], "ou_sample_path: grid must be increasing");
  require(z0.size() == m.d, "ou_sample_path: dimension mismatch");

  const int nt = static_cast<int>(times.size());
  std::vector<MatrixXd> step_exp(nt - 1), step_fac(nt - 1);
  for (int i = 0; i + 1 < nt; ++i) {
    double h = times[i + 1] - times[i];
    step_exp[i] = mat_exp(m.A, h);
    step_fac[i] = psd_factor(gramian(m.A, m.Q, h));
  }

  PathEnsemble ens;
  ens.times = times;
  ens.seed = seed;
  ens.scheme_tag = "ou-exact";
  ens.states.resize(n);
  ens.exit_time.assign(n, kNoExit);
  ens.stopped.assign(n, false);
  ens.diverged.assign(n, false);
  parallel_for(n, nthreads, [&](std::size_t p) {
    RngStream stream(seed, p);
    MatrixXd path(nt, m.d);
    VectorXd z = z0;
    path.row(0) = z.transpose();
    for (int i = 0; i + 1 < nt; ++i) {
      z = step_exp[i] * z + step_fac[i] * stream.normal_vector(step_fac[i].cols());
      path.row(i + 1) = z.transpose();
    }
    ens.states[p] = std::move(path);
  });
  return ens;
}

// Monte Carlo estimate of P_t f(z) = E[f(Z_t^z)].
inline McEstimate semigroup_apply(const OUModel& m, const ScalarField& f, double t,
                                  const VectorXd& z, int n, RngStream& stream) {
  require(n >= 2, "semigroup_apply: require n >= 2");
  auto [mean, cov] = ou_transition(m, z, t);
  MatrixXd F = psd_factor(cov);
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    double v = f(mean + F * stream.normal_vector(F.cols()));
    if (!std::isfinite(v))
      throw std::runtime_error("semigroup_apply: f non-finite at a sampled point");
    sum += v;
    sumsq += v * v;
  }
  McEstimate e;
  e.value = sum / n;
  e.stderr_ = std::sqrt(std::max(0.0, sumsq / n - e.value * e.value) / (n - 1));
  return e;
}

struct LaplaceGrid {
  std::vector<double> nodes;    // geometric grid in [t_min, T_max]
  std::vector<double> weights;  // trapezoid weights
  double t_min = 0, t_max = 0;
};

inline LaplaceGrid laplace_grid(double lambda, double t_min = 1e-4,
                                int n_nodes = 200, double t_max_override = 0) {
  LaplaceGrid g;
  g.t_min = t_min;
  g.t_max = t_max_override > 0 ? t_max_override : std::max(10.0, 12.0 / lambda);
  double ratio = std::pow(g.t_max / t_min, 1.0 / (n_nodes - 1));
  g.nodes.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) g.nodes[i] = t_min * std::pow(ratio, i);
  g.weights.assign(n_nodes, 0.0);
  for (int i = 0; i + 1 < n_nodes; ++i) {
    double h = g.nodes[i + 1] - g.nodes[i];
    g.weights[i] += 0.5 * h;
    g.weights[i + 1] += 0.5 * h;
  }
  return g;
}

// R(lambda, L0) f(z) = int_0^inf e^{-lambda t} P_t f(z) dt by composite
// trapezoid on a geometric t-grid, with common random numbers across nodes.
// The [0, t_min) head uses P_t f(z) -> f(z); the (T_max, inf) tail bound
// e^{-lambda T} sup|f| / lambda is reported, not added.
inline McEstimate resolvent_apply(const OUModel& m, const ScalarField& f,
                                  double lambda, const VectorXd& z, int n,
                                  RngStream& stream, int n_nodes = 200) {
  require(lambda > lambda_min(m), "resolvent_apply: lambda below lambda_min");
  require(n >= 2, "resolvent_apply: require n >= 2");
  LaplaceGrid g = laplace_grid(lambda, 1e-4, n_nodes);
  const int nt = static_cast<int>(g.nodes.size());

  std::vector<VectorXd> means(nt);
  std::vector<MatrixXd> facs(nt);
  for (int j = 0; j < nt; ++j) {
    means[j] = mat_exp(m.A, g.nodes[j]) * z;
    facs[j] = psd_factor(gramian(m.A, m.Q, g.nodes[j]));
  }
  double head = f(z) * (1.0 - std::exp(-lambda * g.t_min)) / lambda;

  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    VectorXd xi = stream.normal_vector(m.d);
    double acc = 0;
    for (int j = 0; j < nt; ++j) {
      double v = f(means[j] + facs[j] * xi.head(facs[j].cols()));
      if (!std::isfinite(v))
        throw std::runtime_error("resolvent_apply: f non-finite at a sampled point");
      acc += g.weights[j] * std::exp(-lambda * g.nodes[j]) * v;
    }
    sum += acc;
    sumsq += acc * acc;
  }
  McEstimate e;
  e.value = head + sum / n;
  e.stderr_ = std::sqrt(std::max(0.0, sumsq / n - (sum / n) * (sum / n)) / (n - 1));
  e.tail_bound = std::exp(-lambda * g.t_max) * f.sup_norm / lambda;
  return e;
}

// <D P_t f(z), h> = P_t(<Df(.), e^{tA} h>)(z) -- the commutation formula,
// estimated by Monte Carlo rather than finite differences.
inline McEstimate semigroup_gradient(const OUModel& m, const ScalarField& f,
                                     double t, const VectorXd& z,
                                     const VectorXd& h, int n, RngStream& stream) {
  if (!f.has_gradient())
    throw std::invalid_argument("semigroup_gradient: field has no gradient evaluator");
  auto [mean, cov] = ou_transition(m, z, t);
  MatrixXd F = psd_factor(cov);
  VectorXd dir = mat_exp(m.A, t) * h;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    double v = f.gradient(mean + F * stream.normal_vector(F.cols())).dot(dir);
    sum += v;
    sumsq += v * v;
  }
  McEstimate e;
  e.value = sum / n;
  e.stderr_ = std::sqrt(std::max(0.0, sumsq / n - e.value * e.value) / (n - 1));
  return e;
}

inline std::vector<double> geometric_grid(double lo, double hi, int n) {
  std::vector<double> g(n);
  double ratio = std::pow(hi / lo, 1.0 / (n - 1));
  for (int i = 0; i < n; ++i) g[i] = lo * std::pow(ratio, i);
  return g;
}

struct SlopeFit {
  double slope = 0, intercept = 0, residual = 0;
};

// Least-squares slope of log det(Q_t) vs log t. The determinant lower bound
// det(Q_t) >= C t^{2k+1} makes slope >= 2k+1 (up to fit tolerance); the true
// slope is the sum of the per-direction exponents.
inline SlopeFit det_smalltime_fit(const OUModel& m,
                                  std::vector<double> t_grid = {}) {
  if (t_grid.empty()) t_grid = geometric_grid(1e-4, 0.5, 12);
  require(t_grid.size() >= 8, "det_smalltime_fit: need at least 8 grid points");
  auto rep = gramian_report(m.A, m.Q, t_grid);
  SlopeFit fit;
  fit.slope = rep.fitted_slope;
  fit.intercept = rep.fitted_intercept;
  fit.residual = rep.fit_residual;
  return fit;
}

// Monte Carlo L^p norm over R^d with a N(0, sigma^2 I) importance proposal:
// ||f||_p^p = E[ |f(X)|^p / pdf(X) ], X ~ N(0, sigma^2 I).
inline McEstimate lp_norm_mc(const ScalarField& f, int d, double p, int n,
                             RngStream& stream, double sigma = 3.0) {
  const double log_norm = -0.5 * d * std::log(2.0 * M_PI * sigma * sigma);
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    VectorXd z = sigma * stream.normal_vector(d);
    double log_pdf = log_norm - 0.5 * z.squaredNorm() / (sigma * sigma);
    double v = std::pow(std::abs(f(z)), p) * std::exp(-log_pdf);
    sum += v;
    sumsq += v * v;
  }
  double mean = sum / n;
  double se = std::sqrt(std::max(0.0, sumsq / n - mean * mean) / (n - 1));
  McEstimate e;
  e.value = std::pow(mean, 1.0 / p);
  // delta method for the p-th root
  e.stderr_ = mean > 0 ? e.value * se / (p * mean) : 0.0;
  return e;
}

}  // namespace hyposde
