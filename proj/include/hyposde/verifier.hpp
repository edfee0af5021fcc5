#pragma once

// Statistical verification layer. Weak uniqueness is checked at the
// resolvent level: two constructions of the same law must produce equal
// resolvent functionals G(lambda, z) f = int_0^inf e^{-lambda t} E[f(Z_t)] dt
// for every test function in a fixed battery and every lambda on a grid.
// The layer also estimates martingale defects, the resolvent identity
// residual lambda G f - f(z0) - G(L f), and numerical probes of the
// sup-vs-L^p and second-derivative resolvent estimates.

#include <cmath>
#include <string>
#include <vector>

#include "hyposde/oukernel.hpp"
#include "hyposde/path_ensemble.hpp"
#include "hyposde/scalar_field.hpp"
#include "hyposde/sdesim.hpp"

namespace hyposde {

struct ResolventEstimate {
  double value = 0;
  double stderr_ = 0;
  double lambda = 0;
  VectorXd z0;
  std::string f_id;
  std::string scheme_tag;
  double tail_bound = 0;  // e^{-lambda T} sup|f| / lambda
};

namespace detail {

// Product-trapezoid weights for int_0^T e^{-lambda t} f(t) dt: f is taken
// piecewise linear on the grid and the Laplace weight is integrated exactly,
// so f == const integrates to (1 - e^{-lambda T}) / lambda with no error.
inline std::vector<double> laplace_path_weights(const std::vector<double>& times,
                                                double lambda) {
  const int nt = static_cast<int>(times.size());
  std::vector<double> w(nt, 0.0);
  for (int i = 0; i + 1 < nt; ++i) {
    double a = times[i], b = times[i + 1], h = b - a;
    double ea = std::exp(-lambda * a), eb = std::exp(-lambda * b);
    double i0 = (ea - eb) / lambda;                // int e^{-lt} dt
    double i1 = (i0 - h * eb) / lambda;            // int (t-a) e^{-lt} dt
    w[i] += i0 - i1 / h;
    w[i + 1] += i1 / h;
  }
  return w;
}

inline double two_pass_stderr(const std::vector<double>& vals, double mean) {
  double ss = 0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  const std::size_t n = vals.size();
  return n > 1 ? std::sqrt(ss / (static_cast<double>(n) * (n - 1))) : 0.0;
}

}  // namespace detail

// Laplace-weighted quadrature of f along each path (piecewise-linear f,
// exact weight), then Monte Carlo mean and standard error across paths.
inline ResolventEstimate resolvent_functional(const PathEnsemble& ens,
                                              const ScalarField& f, double lambda) {
  require(lambda > 0, "resolvent_functional: require lambda > 0");
  const int n = ens.n_paths();
  const int nt = ens.n_times();
  require(n >= 2 && nt >= 2, "resolvent_functional: ensemble too small");

  std::vector<double> w = detail::laplace_path_weights(ens.times, lambda);
  std::vector<double> vals(n, 0.0);
  for (int p = 0; p < n; ++p) {
    double acc = 0;
    for (int i = 0; i < nt; ++i) acc += w[i] * f(ens.states[p].row(i).transpose());
    vals[p] = acc;
  }
  ResolventEstimate est;
  double sum = 0;
  for (double v : vals) sum += v;
  est.value = sum / n;
  est.stderr_ = detail::two_pass_stderr(vals, est.value);
  est.lambda = lambda;
  est.z0 = ens.states.empty() ? VectorXd() : VectorXd(ens.states[0].row(0).transpose());
  est.f_id = f.label;
  est.scheme_tag = ens.scheme_tag;
  est.tail_bound = std::exp(-lambda * ens.horizon()) * f.sup_norm / lambda;
  return est;
}

struct FunctionBattery {
  std::vector<ScalarField> members;
};

// The versioned default battery standing in for C^2_K test functions:
// three Gaussian bumps, two compactly supported coordinate-product bumps,
// one bounded trigonometric field. All bounded with known sup norm and
// analytic gradient / Hessian.
inline FunctionBattery default_battery(int d) {
  FunctionBattery bat;
  VectorXd c0 = VectorXd::Zero(d);
  VectorXd c1 = VectorXd::Constant(d, 1.0);
  VectorXd c2 = VectorXd::Zero(d);
  c2[0] = -1.0;
  if (d > 1) c2[1] = 1.0;
  bat.members.push_back(gaussian_bump(c0, 1.0, "gauss0"));
  bat.members.push_back(gaussian_bump(c1, 1.5, "gauss1"));
  bat.members.push_back(gaussian_bump(c2, 0.8, "gauss2"));
  bat.members.push_back(box_bump(c0, 2.0, "bump0"));
  bat.members.push_back(box_bump(c1, 3.0, "bump1"));
  VectorXd a = VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) a[i] = 1.0 / (i + 1.0);
  bat.members.push_back(trig_field(a, "trig"));
  return bat;
}

struct LawPair {
  std::string f_id;
  double lambda = 0;
  ResolventEstimate a, b;
  double zscore = 0;
};

struct LawComparison {
  std::vector<LawPair> pairs;
  bool pass = true;
  double z_crit = 4.0;
  bool step_mismatch = false;  // caveat: schemes ran at different step sizes
};

inline LawComparison compare_laws(const PathEnsemble& ensA, const PathEnsemble& ensB,
                                  const FunctionBattery& battery,
                                  const std::vector<double>& lambda_grid,
                                  double z_crit = 4.0) {
  require(!ensA.states.empty() && !ensB.states.empty(), "compare_laws: empty ensemble");
  require((ensA.states[0].row(0) - ensB.states[0].row(0)).norm() == 0.0,
          "compare_laws: ensembles must share z0");
  require(std::abs(ensA.horizon() - ensB.horizon()) < 1e-12,
          "compare_laws: ensembles must share the horizon");
  LawComparison cmp;
  cmp.z_crit = z_crit;
  cmp.step_mismatch = ensA.n_times() != ensB.n_times();
  for (const auto& f : battery.members)
    for (double lambda : lambda_grid) {
      LawPair pair;
      pair.f_id = f.label;
      pair.lambda = lambda;
      pair.a = resolvent_functional(ensA, f, lambda);
      pair.b = resolvent_functional(ensB, f, lambda);
      double se = std::sqrt(pair.a.stderr_ * pair.a.stderr_ +
                            pair.b.stderr_ * pair.b.stderr_);
      pair.zscore = se > 0 ? (pair.a.value - pair.b.value) / se : 0.0;
      if (std::abs(pair.zscore) > z_crit) cmp.pass = false;
      cmp.pairs.push_back(std::move(pair));
    }
  return cmp;
}

// Generator L f(z) = 1/2 Tr(Q0(z) D^2_x f(z)) + <Az, Df(z)> + <b0(z), D_x f(z)>.
inline double generator_apply(const SDEModel& m, const ScalarField& f,
                              const VectorXd& z) {
  MatrixXd H = f.hessian(z);
  VectorXd g = f.gradient(z);
  double v = 0.5 * (m.Q0_at(z) * H.topLeftCorner(m.d0, m.d0)).trace();
  v += (m.A * z).dot(g);
  if (m.b0) v += m.b0(z).dot(g.head(m.d0));
  return v;
}

struct TimedMark {
  int time_index = 0;  // must precede the pair's first index
  ScalarField h;
};

struct DefectEstimate {
  int i0 = 0, i1 = 0;
  double estimate = 0;
  double stderr_ = 0;
};

// Martingale-defect statistic
//   E[(f(Z_{t1}) - f(Z_{t0}) - int_{t0}^{t1} L f(Z_s) ds) * prod_k h_k(Z_{s_k})]
// with the time integral by trapezoid on the path grid. Zero (up to
// quadrature error) for an exact weak solution, O(h) for a scheme.
inline std::vector<DefectEstimate> martingale_defect(
    const PathEnsemble& ens, const ScalarField& f, const SDEModel& m,
    const std::vector<std::pair<int, int>>& index_pairs,
    const std::vector<TimedMark>& marks = {}) {
  if (!f.has_hessian() || !f.has_gradient())
    throw std::invalid_argument("martingale_defect: field needs gradient and Hessian");
  const int n = ens.n_paths();
  const int nt = ens.n_times();

  std::vector<DefectEstimate> out;
  for (auto [i0, i1] : index_pairs) {
    require(i0 >= 0 && i1 > i0 && i1 < nt, "martingale_defect: bad index pair");
    for (const auto& mk : marks)
      require(mk.time_index <= i0, "martingale_defect: marks must precede the pair");
    double sum = 0, sumsq = 0;
    for (int p = 0; p < n; ++p) {
      const Eigen::MatrixXd& path = ens.states[p];
      double integral = 0;
      double prev = generator_apply(m, f, path.row(i0).transpose());
      for (int i = i0; i < i1; ++i) {
        double next = generator_apply(m, f, path.row(i + 1).transpose());
        integral += 0.5 * (ens.times[i + 1] - ens.times[i]) * (prev + next);
        prev = next;
      }
      double v = f(path.row(i1).transpose()) - f(path.row(i0).transpose()) - integral;
      for (const auto& mk : marks) v *= mk.h(path.row(mk.time_index).transpose());
      sum += v;
      sumsq += v * v;
    }
    DefectEstimate de;
    de.i0 = i0;
    de.i1 = i1;
    de.estimate = sum / n;
    de.stderr_ = std::sqrt(std::max(0.0, sumsq / n - de.estimate * de.estimate) /
                           (n - 1));
    out.push_back(de);
  }
  return out;
}

struct ResidualEstimate {
  double residual = 0;
  double stderr_ = 0;
  double tail_bound = 0;
};

// Residual of lambda G f = f(z0) + G(L f), estimated pathwise (paired, so
// the Monte Carlo errors of the two functionals cancel where correlated).
inline ResidualEstimate resolvent_identity_check(const PathEnsemble& ens,
                                                 const ScalarField& f,
                                                 const SDEModel& m, double lambda) {
  if (!f.has_hessian() || !f.has_gradient())
    throw std::invalid_argument(
        "resolvent_identity_check: field needs gradient and Hessian");
  const int n = ens.n_paths();
  const int nt = ens.n_times();
  const VectorXd z0 = ens.states[0].row(0).transpose();

  std::vector<double> w = detail::laplace_path_weights(ens.times, lambda);
  double f0 = f(z0);
  std::vector<double> vals(n, 0.0);
  for (int p = 0; p < n; ++p) {
    double gf = 0, glf = 0;
    for (int i = 0; i < nt; ++i) {
      VectorXd z = ens.states[p].row(i).transpose();
      gf += w[i] * f(z);
      glf += w[i] * generator_apply(m, f, z);
    }
    vals[p] = lambda * gf - f0 - glf;
  }
  ResidualEstimate est;
  double sum = 0;
  for (double v : vals) sum += v;
  est.residual = sum / n;
  est.stderr_ = detail::two_pass_stderr(vals, est.residual);
  est.tail_bound = std::exp(-lambda * ens.horizon()) * f.sup_norm;
  return est;
}

struct SupLpProbe {
  double sup_estimate = 0;
  double lp_norm = 0;
  double ratio = 0;
  bool ratio_defined = true;
};

// Empirical constant of sup_z |R(lambda) f(z)| <= C ||f||_p: sup over a
// z-grid of resolvent magnitudes against the Monte Carlo L^p norm.
inline SupLpProbe probe_sup_lp(const OUModel& m, const ScalarField& f,
                               double lambda, double p,
                               const std::vector<VectorXd>& z_grid, int mc_budget,
                               std::uint64_t seed) {
  double threshold = (2.0 * m.k + 1.0) / 2.0;
  if (p <= threshold)
    throw std::invalid_argument(
        "probe_sup_lp: require p > (2k+1)/2 = " + std::to_string(threshold));
  require(lambda > lambda_min(m), "probe_sup_lp: lambda below lambda_min");

  SupLpProbe probe;
  for (std::size_t i = 0; i < z_grid.size(); ++i) {
    RngStream stream(seed, i);
    auto est = resolvent_apply(m, f, lambda, z_grid[i], mc_budget, stream);
    probe.sup_estimate = std::max(probe.sup_estimate, std::abs(est.value));
  }
  RngStream lp_stream(seed, 1u << 20);
  probe.lp_norm = lp_norm_mc(f, m.d, p, 4 * mc_budget, lp_stream).value;
  if (probe.lp_norm > 0) {
    probe.ratio = probe.sup_estimate / probe.lp_norm;
  } else {
    probe.ratio_defined = false;
  }
  return probe;
}

struct SecondDerivativeProbe {
  double lp_of_hessian_x = 0;
  double lp_of_f = 0;
  double ratio = 0;
  bool conclusive = true;
};

// Central second difference of the resolvent in coordinate a with common
// random numbers: the same Gaussian draw drives all three stencil points per
// sample, so the stderr is measured on per-sample differences where the
// Monte Carlo noise cancels.
inline McEstimate resolvent_second_difference(const OUModel& m, const ScalarField& f,
                                              double lambda, const VectorXd& z,
                                              int coord, double fd_step, int n,
                                              RngStream& stream, int n_nodes = 200) {
  const int nt = n_nodes;
  LaplaceGrid g = laplace_grid(lambda, 1e-4, nt);
  std::vector<VectorXd> stencil(3, z);
  stencil[0][coord] += fd_step;
  stencil[2][coord] -= fd_step;

  std::vector<std::vector<VectorXd>> means(3, std::vector<VectorXd>(nt));
  std::vector<MatrixXd> facs(nt);
  for (int j = 0; j < nt; ++j) {
    MatrixXd E = mat_exp(m.A, g.nodes[j]);
    facs[j] = psd_factor(gramian(m.A, m.Q, g.nodes[j]));
    for (int s = 0; s < 3; ++s) means[s][j] = E * stencil[s];
  }
  auto head = [&](const VectorXd& zz) {
    return f(zz) * (1.0 - std::exp(-lambda * g.t_min)) / lambda;
  };
  double head_d2 = head(stencil[0]) - 2 * head(z) + head(stencil[2]);

  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    VectorXd xi = stream.normal_vector(m.d);
    double acc[3] = {0, 0, 0};
    for (int j = 0; j < nt; ++j) {
      VectorXd noise = facs[j] * xi.head(facs[j].cols());
      double wj = g.weights[j] * std::exp(-lambda * g.nodes[j]);
      for (int s = 0; s < 3; ++s) acc[s] += wj * f(means[s][j] + noise);
    }
    double v = (acc[0] - 2 * acc[1] + acc[2] + head_d2) / (fd_step * fd_step);
    sum += v;
    sumsq += v * v;
  }
  McEstimate e;
  e.value = sum / n;
  e.stderr_ = std::sqrt(std::max(0.0, sumsq / n - e.value * e.value) / (n - 1));
  return e;
}

// Empirical constant of ||D^2_x R(lambda) f||_p <= C ||f||_p: central second
// differences of the resolvent in the first d0 coordinates on a z-grid,
// aggregated in L^p, against the Monte Carlo L^p norm of f.
inline SecondDerivativeProbe probe_second_derivative(
    const OUModel& m, const ScalarField& f, double lambda, double p,
    const std::vector<VectorXd>& z_grid, double fd_step, int mc_budget,
    std::uint64_t seed) {
  require(fd_step >= 1e-3 && fd_step <= 1e-1, "probe_second_derivative: bad fd_step");
  require(lambda > lambda_min(m), "probe_second_derivative: lambda below lambda_min");

  double acc = 0, noise = 0, signal = 0;
  for (std::size_t i = 0; i < z_grid.size(); ++i) {
    double hess_sq = 0;
    for (int a = 0; a < m.d0; ++a) {
      RngStream stream(seed, i * 64 + a);
      auto d2 = resolvent_second_difference(m, f, lambda, z_grid[i], a, fd_step,
                                            mc_budget, stream);
      hess_sq += d2.value * d2.value;
      signal += std::abs(d2.value);
      noise += d2.stderr_;
    }
    acc += std::pow(std::sqrt(hess_sq), p);
  }
  SecondDerivativeProbe probe;
  probe.lp_of_hessian_x = std::pow(acc / z_grid.size(), 1.0 / p);
  RngStream lp_stream(seed, 1u << 21);
  probe.lp_of_f = lp_norm_mc(f, m.d, p, 4 * mc_budget, lp_stream).value;
  probe.ratio = probe.lp_of_f > 0 ? probe.lp_of_hessian_x / probe.lp_of_f : 0.0;
  if (signal > 0 && noise > 0.5 * signal) probe.conclusive = false;
  return probe;
}

}  // namespace hyposde
