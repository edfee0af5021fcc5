#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hyposde/models.hpp>
#include <hyposde/sdesim.hpp>

using namespace hyposde;

namespace {

SDEModel cubic_model() { return builtin_paper_ex1().to_sde(); }

SDEModel driftless_cubic_model() {
  SDEModel m = cubic_model();
  m.b0 = nullptr;
  return m;
}

SDEModel brownian_model(int d) {
  SDEModel m;
  m.d = m.d0 = m.r = d;
  m.A = MatrixXd::Zero(d, d);
  m.B0 = [d](const VectorXd&) { return MatrixXd::Identity(d, d); };
  return m;
}

std::pair<VectorXd, MatrixXd> terminal_moments(const PathEnsemble& ens) {
  const int n = ens.n_paths(), last = ens.n_times() - 1, d = ens.dim();
  VectorXd mean = VectorXd::Zero(d);
  for (int p = 0; p < n; ++p) mean += ens.states[p].row(last).transpose();
  mean /= n;
  MatrixXd cov = MatrixXd::Zero(d, d);
  for (int p = 0; p < n; ++p) {
    VectorXd v = ens.states[p].row(last).transpose() - mean;
    cov += v * v.transpose();
  }
  cov /= n - 1;
  return {mean, cov};
}

}  // namespace

TEST_CASE("euler_maruyama: zero-noise zero-drift is forward Euler for z' = Az") {
  SDEModel m;
  m.d = 3;
  m.d0 = 1;
  m.r = 1;
  m.A = MatrixXd{{0, 0, 0}, {1, 1, 0}, {0, 1, 1}};
  m.B0 = [](const VectorXd&) { return MatrixXd::Zero(1, 1); };
  VectorXd z0(3);
  z0 << 1, 1, 1;
  const double T = 1.0;
  VectorXd exact = mat_exp(m.A, T) * z0;

  auto end_state = [&](double h) {
    auto ens = euler_maruyama(m, z0, h, T, 1, 7);
    return VectorXd(ens.states[0].row(ens.n_times() - 1).transpose());
  };
  double e1 = (end_state(1.0 / 64) - exact).norm();
  double e2 = (end_state(1.0 / 128) - exact).norm();
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.05));  // first-order scheme
}

TEST_CASE("euler_maruyama: pure Brownian marginal is N(z0, T I)") {
  SDEModel m = brownian_model(2);
  VectorXd z0(2);
  z0 << 1.0, -0.5;
  const int n = 100000;
  auto ens = euler_maruyama(m, z0, 0.1, 1.0, n, 11);
  auto [mean, cov] = terminal_moments(ens);
  for (int i = 0; i < 2; ++i)
    CHECK(std::abs(mean[i] - z0[i]) < 4.0 / std::sqrt(double(n)));
  CHECK((cov - MatrixXd::Identity(2, 2)).norm() < 0.04);
}

TEST_CASE("euler_maruyama: cubic-drift model runs clean; degenerate rows are smooth") {
  SDEModel m = cubic_model();
  VectorXd z0(3);
  z0 << 1, 1, 1;
  const double h = std::ldexp(1.0, -10);
  double max_inc = 0;
  bool all_finite = true;
  auto div = run_euler(m, z0, h, 1 << 10, 10000, 13, 1,
                       [&](std::size_t, int i, double, const VectorXd& z) {
                         all_finite = all_finite && z.allFinite();
                         static thread_local VectorXd prev;
                         if (i == 0) {
                           prev = z;
                           return;
                         }
                         max_inc = std::max(
                             max_inc, (z.tail(2) - prev.tail(2)).cwiseAbs().maxCoeff());
                         prev = z;
                       });
  CHECK(all_finite);
  for (bool d : div) CHECK_FALSE(d);
  // lower block carries no noise: increments are O(h), not O(sqrt(h))
  CHECK(max_inc < 50 * h);
}

TEST_CASE("exp_euler: constant unit Q0, b0 = 0 reproduces the exact OU path bitwise") {
  ModelSpec spec = builtin_paper_ex1();
  SDEModel m = spec.to_sde();
  m.b0 = nullptr;
  m.B0 = [](const VectorXd&) { return MatrixXd::Identity(1, 1); };
  VectorXd z0(3);
  z0 << 1, 1, 1;
  MatrixXd Q0 = MatrixXd::Identity(1, 1);
  OUModel ou(m.A, Q0);

  const double h = 0.25, T = 1.0;
  auto a = exp_euler(m, z0, h, T, 50, 99);
  std::vector<double> grid;
  for (int i = 0; i <= 4; ++i) grid.push_back(i * h);
  auto b = ou_sample_path(ou, z0, grid, 50, 99);
  for (int p = 0; p < 50; ++p) CHECK(a.states[p] == b.states[p]);
}

TEST_CASE("exp_euler step operator: noise factor squares to the Gramian") {
  MatrixXd A{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  detail::FrozenStepOp op(A, 2, 0.3);
  MatrixXd Q0{{2.0, 0.5}, {0.5, 1.0}};
  MatrixXd F = op.noise_factor(Q0);
  MatrixXd Q = MatrixXd::Zero(3, 3);
  Q.topLeftCorner(2, 2) = Q0;
  MatrixXd ref = gramian(A, Q, 0.3);
  CHECK((F * F.transpose() - ref).norm() < 1e-12 * ref.norm());
  CHECK((op.exp_hA - mat_exp(A, 0.3)).norm() == 0.0);
}

TEST_CASE("exp_euler: constant drift, zero noise gives variation of constants") {
  SDEModel m;
  m.d = 3;
  m.d0 = 1;
  m.r = 1;
  m.A = MatrixXd{{0, 0, 0}, {1, 1, 0}, {0, 1, 1}};
  VectorXd c(1);
  c << 0.8;
  m.b0 = [c](const VectorXd&) { return c; };
  m.B0 = [](const VectorXd&) { return MatrixXd::Zero(1, 1); };
  VectorXd z0(3);
  z0 << 0.5, -0.2, 1.0;
  const double T = 1.0;
  auto ens = exp_euler(m, z0, 0.125, T, 1, 3);
  VectorXd lifted = VectorXd::Zero(3);
  lifted[0] = c[0];
  VectorXd exact = mat_exp(m.A, T) * z0 + exp_integral(m.A, T) * lifted;
  CHECK((ens.states[0].row(ens.n_times() - 1).transpose() - exact).norm() < 1e-8);
}

TEST_CASE("exp_euler: one step of size T vs T/h steps agree in law") {
  SDEModel m = driftless_cubic_model();
  // freeze coefficients: constant B0 so the scheme is exact at any step size
  m.B0 = [](const VectorXd&) {
    return MatrixXd::Constant(1, 1, std::sqrt(2.0));
  };
  VectorXd z0(3);
  z0 << 1, 1, 1;
  const int n = 40000;
  auto coarse = exp_euler(m, z0, 1.0, 1.0, n, 21);
  auto fine = exp_euler(m, z0, 0.125, 1.0, n, 22);
  auto [m1, c1] = terminal_moments(coarse);
  auto [m2, c2] = terminal_moments(fine);
  OUModel ou(m.A, MatrixXd::Constant(1, 1, 2.0));
  auto [mex, cex] = ou_transition(ou, z0, 1.0);
  double scale = std::sqrt(cex.diagonal().maxCoeff() / n);
  CHECK((m1 - mex).cwiseAbs().maxCoeff() < 4 * scale);
  CHECK((m2 - mex).cwiseAbs().maxCoeff() < 4 * scale);
  CHECK((c1 - cex).norm() < 0.05 * cex.norm());
  CHECK((c2 - cex).norm() < 0.05 * cex.norm());
}

TEST_CASE("frozen_dyadic_scheme: constant Q0 has exactly the OU law") {
  SDEModel m = driftless_cubic_model();
  m.B0 = [](const VectorXd&) { return MatrixXd::Identity(1, 1); };
  VectorXd z0(3);
  z0 << 1, 1, 1;
  const int n = 30000;
  OUModel ou(m.A, MatrixXd::Identity(1, 1));
  auto [mex, cex] = ou_transition(ou, z0, 1.0);
  for (int level : {2, 4}) {
    auto ens = frozen_dyadic_scheme(m, level, z0, 1.0, n, 300 + level);
    auto [mean, cov] = terminal_moments(ens);
    double scale = std::sqrt(cex.diagonal().maxCoeff() / n);
    CHECK((mean - mex).cwiseAbs().maxCoeff() < 4 * scale);
    CHECK((cov - cex).norm() < 0.06 * cex.norm());
  }
}

TEST_CASE("frozen_dyadic_scheme: refinement stabilizes the terminal law") {
  SDEModel m = driftless_cubic_model();
  VectorXd z0(3);
  z0 << 1, 1, 1;
  const int n = 20000;
  auto a = frozen_dyadic_scheme(m, 5, z0, 1.0, n, 41);
  auto b = frozen_dyadic_scheme(m, 7, z0, 1.0, n, 43);
  auto [ma, ca] = terminal_moments(a);
  auto [mb, cb] = terminal_moments(b);
  for (int i = 0; i < 3; ++i) {
    double se = std::sqrt(ca(i, i) / n + cb(i, i) / n);
    CHECK(std::abs(ma[i] - mb[i]) < 4 * se);
  }
}

TEST_CASE("frozen_dyadic_scheme: levels agree in law, not pathwise") {
  SDEModel m = driftless_cubic_model();
  VectorXd z0(3);
  z0 << 1, 1, 1;
  const int n = 20000;
  auto lo = frozen_dyadic_scheme(m, 3, z0, 1.0, n, 55);
  auto hi = frozen_dyadic_scheme(m, 4, z0, 1.0, n, 55);
  // same seed, shared dyadic grid points: still different paths
  CHECK(lo.states[0].row(lo.n_times() - 1) != hi.states[0].row(hi.n_times() - 1));
  auto [ma, ca] = terminal_moments(lo);
  auto [mb, cb] = terminal_moments(hi);
  for (int i = 0; i < 3; ++i) {
    double se = std::sqrt(ca(i, i) / n + cb(i, i) / n);
    CHECK(std::abs(ma[i] - mb[i]) < 4 * se);
  }
}

TEST_CASE("frozen_dyadic_scheme: rejects drift and bad grids") {
  SDEModel with_drift = cubic_model();
  VectorXd z0 = VectorXd::Zero(3);
  CHECK_THROWS_AS(frozen_dyadic_scheme(with_drift, 3, z0, 1.0, 2, 1),
                  std::invalid_argument);
  SDEModel m = driftless_cubic_model();
  CHECK_THROWS_AS(frozen_dyadic_scheme(m, 0, z0, 1.0, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(frozen_dyadic_scheme(m, 3, z0, 0.3, 2, 1), std::invalid_argument);
}

TEST_CASE("stop_on_exit: huge radius stops nothing; outside start stops at 0") {
  SDEModel m = cubic_model();
  VectorXd z0(3);
  z0 << 1, 1, 1;
  auto ens = euler_maruyama(m, z0, 1.0 / 64, 1.0, 200, 77);
  auto unstopped = stop_on_exit(ens, VectorXd::Zero(3), 1e9);
  for (int p = 0; p < 200; ++p) {
    CHECK_FALSE(unstopped.stopped[p]);
    CHECK(unstopped.exit_time[p] == kNoExit);
  }

  VectorXd far_center(3);
  far_center << 100, 100, 100;
  auto all_out = stop_on_exit(ens, far_center, 0.5);
  for (int p = 0; p < 200; ++p) {
    CHECK(all_out.exit_time[p] == 0.0);
    CHECK(all_out.stopped[p]);
    for (int i = 1; i < all_out.n_times(); ++i)
      CHECK(all_out.states[p].row(i) == all_out.states[p].row(0));
  }
}

TEST_CASE("stop_on_exit: frozen after first grid exit, bitwise") {
  SDEModel m = brownian_model(1);
  VectorXd z0 = VectorXd::Zero(1);
  auto ens = euler_maruyama(m, z0, 0.05, 3.0, 500, 88);
  auto stopped = stop_on_exit(ens, z0, 1.0);
  int n_stopped = 0;
  for (int p = 0; p < 500; ++p) {
    if (!stopped.stopped[p]) continue;
    ++n_stopped;
    int idx = int(std::llround(stopped.exit_time[p] / 0.05));
    CHECK(std::abs(stopped.states[p](idx, 0)) >= 1.0);
    for (int i = idx + 1; i < stopped.n_times(); ++i)
      CHECK(stopped.states[p](i, 0) == stopped.states[p](idx, 0));
    // never outside before the recorded exit
    for (int i = 0; i < idx; ++i) CHECK(std::abs(stopped.states[p](i, 0)) < 1.0);
  }
  CHECK(n_stopped > 0);
  CHECK(n_stopped < 500);
}

TEST_CASE("lyapunov_monitor: stable deterministic flow decays, no violations") {
  SDEModel m;
  m.d = 2;
  m.d0 = 1;
  m.r = 1;
  m.A = MatrixXd{{-1, 0}, {0.5, -2}};
  m.B0 = [](const VectorXd&) { return MatrixXd::Zero(1, 1); };
  VectorXd z0(2);
  z0 << 2, -1;
  auto ens = euler_maruyama(m, z0, 0.01, 2.0, 1, 5);
  auto rep = lyapunov_monitor(ens, quadratic_lyapunov(2), 0.0);
  CHECK(rep.violations.empty());
  for (std::size_t i = 1; i < rep.means.size(); ++i)
    CHECK(rep.means[i] <= rep.means[i - 1] + 1e-12);
}

TEST_CASE("lyapunov_monitor: cubic-drift model respects the sampled growth bound") {
  ModelSpec spec = builtin_paper_ex1();
  SDEModel m = spec.to_sde();
  VectorXd z0(3);
  z0 << 1, 1, 1;
  // growth constant from maximizing (Tr Q0 + 2<Az,z> + 2<b0, x>)/phi over a cloud
  RngStream cloud(123);
  double C = 0;
  const ScalarField phi = quadratic_lyapunov(3);
  for (int i = 0; i < 20000; ++i) {
    VectorXd z = 2.0 * cloud.normal_vector(3);
    double num = m.Q0_at(z).trace() + 2 * z.dot(m.A * z) + 2 * m.drift_block(z)[0] * z[0];
    C = std::max(C, num / phi(z));
  }
  CHECK(C > 0);
  CHECK(C < spec.lyapunov->growth_C);  // declared constant has margin
  auto ens = euler_maruyama(m, z0, std::ldexp(1.0, -6), 1.0, 10000, 99);
  auto rep = lyapunov_monitor(ens, phi, C);
  CHECK(rep.violations.empty());
}

TEST_CASE("lyapunov_monitor: phi = 1 with C = 0 is exactly tight") {
  SDEModel m = brownian_model(1);
  auto ens = euler_maruyama(m, VectorXd::Zero(1), 0.1, 1.0, 100, 6);
  auto rep = lyapunov_monitor(ens, constant_field(1.0, 1), 0.0);
  CHECK(rep.violations.empty());
  for (double v : rep.means) CHECK(v == 1.0);
  for (double b : rep.bounds) CHECK(b == 1.0);
}

TEST_CASE("exit_prob_curve: unreachable radii give zero; cubic model is monotone") {
  SDEModel m = cubic_model();
  VectorXd z0(3);
  z0 << 1, 1, 1;
  auto far = exit_prob_curve(m, z0, {1e3, 1e4}, 1.0, 1.0 / 64, 500, 8);
  for (auto& pt : far) CHECK(pt.estimate == 0.0);

  auto curve = exit_prob_curve(m, z0, {3, 5, 8, 13}, 1.0, 1.0 / 256, 4000, 9);
  for (std::size_t i = 1; i < curve.size(); ++i)
    CHECK(curve[i].estimate <= curve[i - 1].estimate);
  CHECK(curve[0].estimate > 0.0);
  CHECK(curve.back().estimate < 1.0);

  // Chebyshev-style bound from the Lyapunov pair: P(tau_R <= t) <=
  // phi(z0) e^{Ct} / min_{|y| = R} phi(y)
  ModelSpec spec = builtin_paper_ex1();
  const ScalarField phi = quadratic_lyapunov(3);
  double C = spec.lyapunov->growth_C;
  for (auto& pt : curve) {
    double bound = phi(z0) * std::exp(C * 1.0) / (pt.radius * pt.radius + 1);
    CHECK(pt.estimate <= bound + 3 * pt.stderr_);
  }

  CHECK_THROWS_AS(exit_prob_curve(m, z0, {1.0}, 1.0, 0.1, 10, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(exit_prob_curve(m, z0, {5.0, 4.0}, 1.0, 0.1, 10, 1),
                  std::invalid_argument);
}

TEST_CASE("degenerate-block purity: lower rows update deterministically") {
  SDEModel m = cubic_model();
  VectorXd z0(3);
  z0 << 1, 1, 1;
  const double h = 1.0 / 32;
  auto ens = euler_maruyama(m, z0, h, 0.5, 20, 31);
  for (int p = 0; p < 20; ++p)
    for (int i = 0; i + 1 < ens.n_times(); ++i) {
      VectorXd z = ens.states[p].row(i).transpose();
      VectorXd znext = ens.states[p].row(i + 1).transpose();
      VectorXd det_part = z + h * (m.A * z);
      CHECK(znext[1] == det_part[1]);
      CHECK(znext[2] == det_part[2]);
    }
}

TEST_CASE("determinism: identical seeds give bitwise-equal ensembles at any thread count") {
  SDEModel m = cubic_model();
  VectorXd z0(3);
  z0 << 1, 1, 1;
  for (auto scheme : {0, 1}) {
    auto run = [&](unsigned nt) {
      return scheme == 0 ? euler_maruyama(m, z0, 0.05, 1.0, 64, 1234, nt)
                         : exp_euler(m, z0, 0.05, 1.0, 64, 1234, nt);
    };
    auto a = run(1);
    auto b = run(3);
    for (int p = 0; p < 64; ++p) CHECK(a.states[p] == b.states[p]);
  }
  SDEModel df = driftless_cubic_model();
  auto a = frozen_dyadic_scheme(df, 4, z0, 1.0, 64, 9, 1);
  auto b = frozen_dyadic_scheme(df, 4, z0, 1.0, 64, 9, 4);
  for (int p = 0; p < 64; ++p) CHECK(a.states[p] == b.states[p]);
}

TEST_CASE("divergence policy: exploding drift flags paths instead of crashing") {
  SDEModel m;
  m.d = 1;
  m.d0 = 1;
  m.r = 1;
  m.A = MatrixXd::Zero(1, 1);
  m.b0 = [](const VectorXd& z) {
    VectorXd v(1);
    v << z[0] * z[0] * z[0];  // explosive
    return v;
  };
  m.B0 = [](const VectorXd&) { return MatrixXd::Identity(1, 1); };
  VectorXd z0(1);
  z0 << 5.0;
  auto ens = euler_maruyama(m, z0, 0.5, 20.0, 50, 2);
  int n_div = 0;
  for (int p = 0; p < 50; ++p) {
    if (!ens.diverged[p]) continue;
    ++n_div;
    CHECK(ens.states[p].allFinite());  // frozen at last good state
  }
  CHECK(n_div == 50);
}
