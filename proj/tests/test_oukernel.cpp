#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hyposde/oukernel.hpp>

#include "oracles.hpp"

using namespace hyposde;

namespace {

OUModel kolmogorov() {
  MatrixXd A{{0, 0}, {1, 0}};
  MatrixXd Q0(1, 1);
  Q0(0, 0) = 1.0;
  return OUModel(A, Q0);
}

OUModel paper_example(double q = 1.0) {
  MatrixXd A{{0, 0, 0}, {1, 1, 0}, {0, 1, 1}};
  MatrixXd Q0(1, 1);
  Q0(0, 0) = q;
  return OUModel(A, Q0);
}

}  // namespace

TEST_CASE("OUModel derives k, eta, omega; rejects non-hypoelliptic pairs") {
  OUModel m = paper_example();
  CHECK(m.k == 2);
  CHECK(m.eta == doctest::Approx(1.0));
  CHECK(m.omega == doctest::Approx(1.0));  // eigenvalues 0, 1, 1

  MatrixXd Q0(1, 1);
  Q0(0, 0) = 1.0;
  CHECK_THROWS_AS(OUModel(MatrixXd::Zero(2, 2), Q0), std::invalid_argument);

  MatrixXd bad(1, 1);
  bad(0, 0) = -1.0;
  CHECK_THROWS_AS(OUModel(MatrixXd{{0, 0}, {1, 0}}, bad), std::invalid_argument);
}

TEST_CASE("p_default and lambda_min floors") {
  OUModel m = kolmogorov();       // k = 1
  CHECK(p_default(m) == 3);       // ceil(3/2) + 1
  CHECK(lambda_min(m) >= 1.0);    // omega = 0, tr A = 0 -> floor is 1

  OUModel ex = paper_example();   // k = 2, omega = 1, tr A = 2
  CHECK(p_default(ex) == 4);
  CHECK(lambda_min(ex) == doctest::Approx(2.0));
}

TEST_CASE("ou_transition: A = 0 gives (z, tI); Kolmogorov closed form") {
  MatrixXd Q0 = MatrixXd::Identity(2, 2);
  OUModel m(MatrixXd::Zero(2, 2), Q0);
  VectorXd z(2);
  z << 1.0, -2.0;
  auto [mean, cov] = ou_transition(m, z, 0.7);
  CHECK((mean - z).norm() < 1e-14);
  CHECK((cov - 0.7 * MatrixXd::Identity(2, 2)).norm() < 1e-12);

  OUModel km = kolmogorov();
  VectorXd z0(2);
  z0 << 1.0, 0.0;
  double t = 0.6;
  auto [km_mean, km_cov] = ou_transition(km, z0, t);
  CHECK(km_mean[0] == doctest::Approx(1.0));
  CHECK(km_mean[1] == doctest::Approx(t));
  MatrixXd ref{{t, t * t / 2}, {t * t / 2, t * t * t / 3}};
  CHECK((km_cov - ref).norm() < 1e-12);

  CHECK_THROWS_AS(ou_transition(km, z0, 0.0), std::invalid_argument);
}

TEST_CASE("ou_transition matches ODE-propagated moments on the paper example") {
  OUModel m = paper_example();
  VectorXd z0(3);
  z0 << 1, 1, 1;
  auto [mean, cov] = ou_transition(m, z0, 0.5);
  VectorXd ref_mean;
  MatrixXd ref_cov;
  oracle::ou_moments_ode(m.A, m.Q, z0, 0.5, 20000, ref_mean, ref_cov);
  CHECK((mean - ref_mean).norm() < 1e-9);
  CHECK((cov - ref_cov).norm() < 1e-9);
}

TEST_CASE("ou_sample_path: Q = 0 cannot arise, but grid validation works") {
  OUModel m = kolmogorov();
  VectorXd z0 = VectorXd::Zero(2);
  CHECK_THROWS_AS(ou_sample_path(m, z0, {0.0, 0.5, 0.4}, 2, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(ou_sample_path(m, z0, {0.1, 0.5}, 2, 1), std::invalid_argument);
}

TEST_CASE("ou_sample_path: one-step marginal moments at CLT tolerance") {
  MatrixXd Q0 = MatrixXd::Identity(2, 2);
  OUModel m(MatrixXd::Zero(2, 2), Q0);
  const int n = 200000;
  auto ens = ou_sample_path(m, VectorXd::Zero(2), {0.0, 1.0}, n, 31);

  VectorXd mean = VectorXd::Zero(2);
  for (int p = 0; p < n; ++p) mean += ens.states[p].row(1).transpose();
  mean /= n;
  for (int i = 0; i < 2; ++i) CHECK(std::abs(mean[i]) < 4.0 / std::sqrt(double(n)));

  MatrixXd cov = MatrixXd::Zero(2, 2);
  for (int p = 0; p < n; ++p) {
    VectorXd v = ens.states[p].row(1).transpose() - mean;
    cov += v * v.transpose();
  }
  cov /= n - 1;
  CHECK((cov - MatrixXd::Identity(2, 2)).norm() < 0.05 * MatrixXd::Identity(2, 2).norm());
}

TEST_CASE("ou_sample_path: 10 steps vs 1 step agree in law at t = 1") {
  OUModel m = paper_example();
  VectorXd z0(3);
  z0 << 1, 1, 1;
  const int n = 50000;
  std::vector<double> fine;
  for (int i = 0; i <= 10; ++i) fine.push_back(i / 10.0);
  auto multi = ou_sample_path(m, z0, fine, n, 100);
  auto single = ou_sample_path(m, z0, {0.0, 1.0}, n, 200);

  for (int c = 0; c < 3; ++c) {
    double ma = 0, mb = 0, va = 0, vb = 0;
    for (int p = 0; p < n; ++p) {
      ma += multi.states[p](10, c);
      mb += single.states[p](1, c);
    }
    ma /= n;
    mb /= n;
    for (int p = 0; p < n; ++p) {
      va += std::pow(multi.states[p](10, c) - ma, 2);
      vb += std::pow(single.states[p](1, c) - mb, 2);
    }
    va /= n - 1;
    vb /= n - 1;
    double se = std::sqrt(va / n + vb / n);
    CHECK(std::abs(ma - mb) < 4.0 * se);
  }
}

TEST_CASE("semigroup_apply: constants, linear fields, |z|^2 identity") {
  OUModel m = kolmogorov();
  VectorXd z(2);
  z << 0.5, -0.3;
  RngStream s(5);
  auto c = semigroup_apply(m, constant_field(3.5, 2), 0.4, z, 1000, s);
  CHECK(c.value == doctest::Approx(3.5));
  CHECK(c.stderr_ == doctest::Approx(0.0));

  VectorXd a(2);
  a << 1.0, 2.0;
  auto lin = semigroup_apply(m, linear_field(a), 0.4, z, 50000, s);
  double expect = a.dot(mat_exp(m.A, 0.4) * z);
  CHECK(std::abs(lin.value - expect) < 4 * lin.stderr_ + 1e-12);

  // A = 0, Q = I: E|Z_t|^2 = |z|^2 + t d
  OUModel flat(MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2));
  ScalarField sq;
  sq.label = "sq";
  sq.value = [](const VectorXd& v) { return v.squaredNorm(); };
  auto q = semigroup_apply(flat, sq, 0.7, z, 100000, s);
  CHECK(std::abs(q.value - (z.squaredNorm() + 0.7 * 2)) < 4 * q.stderr_);
}

TEST_CASE("resolvent_apply: f = 1 gives 1/lambda; Abelian limit") {
  OUModel m = kolmogorov();
  VectorXd z(2);
  z << 0.4, 0.1;
  RngStream s(17);
  for (double lambda : {2.0, 8.0}) {
    auto est = resolvent_apply(m, constant_field(1.0, 2), lambda, z, 100, s);
    CHECK(std::abs(est.value - 1.0 / lambda) < est.tail_bound + 1e-3);
  }

  // lambda R(lambda) f -> f(z) monotonically in the error
  ScalarField f = gaussian_bump(VectorXd::Zero(2), 1.0);
  double fz = f(z);
  double prev_err = std::numeric_limits<double>::infinity();
  for (double lambda : {2.0, 8.0, 32.0}) {
    RngStream sl(23);
    auto est = resolvent_apply(m, f, lambda, z, 20000, sl);
    double err = std::abs(lambda * est.value - fz);
    CHECK(err < prev_err + 4 * lambda * est.stderr_);
    prev_err = err;
  }

  CHECK_THROWS_AS(resolvent_apply(m, f, 0.5, z, 100, s), std::invalid_argument);
}

TEST_CASE("resolvent_apply matches a refined-grid oracle on a Gaussian bump") {
  OUModel m = kolmogorov();
  VectorXd z(2);
  z << 1.0, 0.0;
  ScalarField f = gaussian_bump(VectorXd::Zero(2), 1.0);
  RngStream s1(404), s2(505);
  auto coarse = resolvent_apply(m, f, 4.0, z, 4000, s1, 200);
  auto fine = resolvent_apply(m, f, 4.0, z, 40000, s2, 2000);
  double se = std::sqrt(coarse.stderr_ * coarse.stderr_ + fine.stderr_ * fine.stderr_);
  CHECK(std::abs(coarse.value - fine.value) <
        4 * se + coarse.tail_bound + fine.tail_bound + 1e-3);
}

TEST_CASE("semigroup_gradient: constant, linear (zero variance), FD agreement") {
  OUModel m = kolmogorov();
  VectorXd z(2), h(2);
  z << 0.2, -0.1;
  h << 1.0, 0.5;
  RngStream s(8);

  auto zero = semigroup_gradient(m, constant_field(2.0, 2), 0.5, z, h, 100, s);
  CHECK(zero.value == doctest::Approx(0.0));
  CHECK(zero.stderr_ == doctest::Approx(0.0));

  VectorXd a(2);
  a << 0.7, -1.3;
  auto lin = semigroup_gradient(m, linear_field(a), 0.5, z, h, 100, s);
  CHECK(lin.value == doctest::Approx(a.dot(mat_exp(m.A, 0.5) * h)).epsilon(1e-12));
  CHECK(lin.stderr_ == doctest::Approx(0.0));

  // finite-difference cross-check with common sample budget
  ScalarField f = gaussian_bump(VectorXd::Zero(2), 1.2);
  RngStream sg(9);
  auto grad = semigroup_gradient(m, f, 0.5, z, h, 200000, sg);
  double step = 1e-3;
  RngStream sp(10), sm(10);  // common random numbers for the FD pair
  auto up = semigroup_apply(m, f, 0.5, z + step * h, 200000, sp);
  auto dn = semigroup_apply(m, f, 0.5, z - step * h, 200000, sm);
  double fd = (up.value - dn.value) / (2 * step);
  double se = std::sqrt(grad.stderr_ * grad.stderr_ +
                        std::pow((up.stderr_ + dn.stderr_) / (2 * step) * 0.05, 2));
  CHECK(std::abs(grad.value - fd) < 4 * grad.stderr_ + 1e-2);

  ScalarField nograd;
  nograd.label = "nograd";
  nograd.value = [](const VectorXd&) { return 1.0; };
  CHECK_THROWS_AS(semigroup_gradient(m, nograd, 0.5, z, h, 100, s),
                  std::invalid_argument);
}

TEST_CASE("det_smalltime_fit: heat, Kolmogorov, paper example slopes") {
  MatrixXd A1 = MatrixXd::Zero(1, 1);
  MatrixXd Q1 = MatrixXd::Identity(1, 1);
  OUModel heat(A1, Q1);
  auto fit1 = det_smalltime_fit(heat);
  CHECK(fit1.slope == doctest::Approx(1.0).epsilon(0.02));

  auto fit2 = det_smalltime_fit(kolmogorov());
  CHECK(fit2.slope == doctest::Approx(4.0).epsilon(0.0125));
  CHECK(fit2.slope >= 2 * 1 + 1 - 0.05);

  auto fit3 = det_smalltime_fit(paper_example());
  CHECK(std::abs(fit3.slope - 9.0) < 0.1);
  CHECK(fit3.slope >= 2 * 2 + 1 - 0.05);
}

TEST_CASE("Chapman-Kolmogorov mean composition") {
  OUModel m = paper_example();
  VectorXd z(3);
  z << 0.3, -0.2, 0.9;
  auto [m1, c1] = ou_transition(m, z, 0.4);
  auto [m2, c2] = ou_transition(m, m1, 0.6);
  auto [mfull, cfull] = ou_transition(m, z, 1.0);
  CHECK((m2 - mfull).norm() < 1e-10);
  // covariance flow: Q_{s+t} = Q_t + e^{tA} Q_s e^{tA^T} (propagate earlier cov)
  MatrixXd E = mat_exp(m.A, 0.6);
  CHECK((cfull - (c2 + E * c1 * E.transpose())).norm() < 1e-10 * cfull.norm());
}

TEST_CASE("Lp contraction probe: ||P_t f||_p <= e^{-t Tr(A)/p} ||f||_p") {
  OUModel m = kolmogorov();  // Tr(A) = 0, so the bound is ||f||_p
  ScalarField f = gaussian_bump(VectorXd::Zero(2), 1.0);
  const double p = 3.0;
  RngStream sf(61);
  double fnorm = lp_norm_mc(f, 2, p, 400000, sf).value;
  for (double t : {0.25, 0.5, 1.0}) {
    // ||P_t f||_p by importance sampling with nested MC for P_t f
    RngStream sz(62);
    const int nz = 4000, ni = 400;
    double acc = 0;
    const double sigma = 3.0;
    const double log_norm = -0.5 * 2 * std::log(2 * M_PI * sigma * sigma);
    for (int i = 0; i < nz; ++i) {
      VectorXd zz = sigma * sz.normal_vector(2);
      double log_pdf = log_norm - 0.5 * zz.squaredNorm() / (sigma * sigma);
      auto pt = semigroup_apply(m, f, t, zz, ni, sz);
      acc += std::pow(std::abs(pt.value), p) * std::exp(-log_pdf);
    }
    double ptf_norm = std::pow(acc / nz, 1.0 / p);
    double bound = std::exp(-(t / p) * m.A.trace()) * fnorm;
    CHECK(ptf_norm <= bound * 1.05);
  }
}

TEST_CASE("resolvent scaling and maximum principle over a small battery") {
  OUModel m = kolmogorov();
  VectorXd z(2);
  z << 0.5, 0.5;
  ScalarField f = gaussian_bump(VectorXd::Zero(2), 1.0);
  RngStream sf(71);
  double fnorm = lp_norm_mc(f, 2, 3.0, 200000, sf).value;
  for (double lambda : {4.0, 16.0, 64.0}) {
    RngStream s(72);
    auto est = resolvent_apply(m, f, lambda, z, 8000, s);
    // lambda ||R(lambda) f|| stays bounded (here: against C ||f||_p with a
    // generous empirical C)
    CHECK(lambda * std::abs(est.value) < 20.0 * fnorm);
    // maximum principle
    CHECK(std::abs(est.value) <=
          f.sup_norm / lambda + est.tail_bound + 5 * est.stderr_ + 1e-12);
  }
}
