#pragma once

// Test functions f : R^d -> R with optional analytic gradient / Hessian,
// standing in for C^2 compactly supported (or bounded) test functions.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace hyposde {

struct ScalarField {
  std::string label;
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;  // may be null
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hessian;   // may be null
  double sup_norm = std::numeric_limits<double>::infinity();

  double operator()(const Eigen::VectorXd& z) const { return value(z); }
  bool has_gradient() const { return static_cast<bool>(gradient); }
  bool has_hessian() const { return static_cast<bool>(hessian); }
};

inline ScalarField constant_field(double c, int d) {
  ScalarField f;
  f.label = "const";
  f.value = [c](const Eigen::VectorXd&) { return c; };
  f.gradient = [d](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(d).eval(); };
  f.hessian = [d](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(d, d).eval(); };
  f.sup_norm = std::abs(c);
  return f;
}

inline ScalarField linear_field(const Eigen::VectorXd& a) {
  ScalarField f;
  f.label = "linear";
  const int d = static_cast<int>(a.size());
  f.value = [a](const Eigen::VectorXd& z) { return a.dot(z); };
  f.gradient = [a](const Eigen::VectorXd&) { return a; };
  f.hessian = [d](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(d, d).eval(); };
  return f;  // unbounded: sup_norm stays infinite
}

// exp(-|z - c|^2 / (2 s^2)), sup norm 1.
inline ScalarField gaussian_bump(const Eigen::VectorXd& c, double s,
                                 std::string label = "gauss") {
  ScalarField f;
  f.label = std::move(label);
  const double inv_s2 = 1.0 / (s * s);
  f.value = [c, inv_s2](const Eigen::VectorXd& z) {
    return std::exp(-0.5 * inv_s2 * (z - c).squaredNorm());
  };
  f.gradient = [c, inv_s2](const Eigen::VectorXd& z) {
    double v = std::exp(-0.5 * inv_s2 * (z - c).squaredNorm());
    return (-inv_s2 * v * (z - c)).eval();
  };
  f.hessian = [c, inv_s2](const Eigen::VectorXd& z) {
    Eigen::VectorXd w = z - c;
    double v = std::exp(-0.5 * inv_s2 * w.squaredNorm());
    Eigen::MatrixXd H = inv_s2 * inv_s2 * v * (w * w.transpose());
    H.diagonal().array() -= inv_s2 * v;
    return H.eval();
  };
  f.sup_norm = 1.0;
  return f;
}

// Product over coordinates of (1 - ((z_i - c_i)/r)^2)^3 on the open box,
// zero outside. C^2 with compact support; sup norm 1.
inline ScalarField box_bump(const Eigen::VectorXd& c, double r,
                            std::string label = "box") {
  ScalarField f;
  f.label = std::move(label);
  const int d = static_cast<int>(c.size());
  auto u = [c, r](const Eigen::VectorXd& z, int i) { return (z[i] - c[i]) / r; };
  auto g =  [](double t) { double s = 1 - t * t; return s > 0 ? s * s * s : 0.0; };
  auto gp = [](double t) { double s = 1 - t * t; return s > 0 ? -6 * t * s * s : 0.0; };
  auto gpp = [](double t) {
    double s = 1 - t * t;
    return s > 0 ? -6 * s * s + 24 * t * t * s : 0.0;
  };
  f.value = [=](const Eigen::VectorXd& z) {
    double v = 1;
    for (int i = 0; i < d; ++i) v *= g(u(z, i));
    return v;
  };
  f.gradient = [=](const Eigen::VectorXd& z) {
    Eigen::VectorXd grad(d);
    for (int i = 0; i < d; ++i) {
      double v = gp(u(z, i)) / r;
      for (int j = 0; j < d; ++j)
        if (j != i) v *= g(u(z, j));
      grad[i] = v;
    }
    return grad;
  };
  f.hessian = [=](const Eigen::VectorXd& z) {
    Eigen::MatrixXd H(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j) {
        double v = 1;
        if (i == j) {
          v = gpp(u(z, i)) / (r * r);
          for (int l = 0; l < d; ++l)
            if (l != i) v *= g(u(z, l));
        } else {
          v = gp(u(z, i)) * gp(u(z, j)) / (r * r);
          for (int l = 0; l < d; ++l)
            if (l != i && l != j) v *= g(u(z, l));
        }
        H(i, j) = v;
        H(j, i) = v;
      }
    return H;
  };
  f.sup_norm = 1.0;
  return f;
}

// sin(<a, z>), bounded with all derivatives bounded.
inline ScalarField trig_field(const Eigen::VectorXd& a, std::string label = "trig") {
  ScalarField f;
  f.label = std::move(label);
  f.value = [a](const Eigen::VectorXd& z) { return std::sin(a.dot(z)); };
  f.gradient = [a](const Eigen::VectorXd& z) {
    return (std::cos(a.dot(z)) * a).eval();
  };
  f.hessian = [a](const Eigen::VectorXd& z) {
    return (-std::sin(a.dot(z)) * (a * a.transpose())).eval();
  };
  f.sup_norm = 1.0;
  return f;
}

inline ScalarField scaled_field(const ScalarField& f, double c) {
  ScalarField g = f;
  g.label = f.label + "*c";
  g.value = [f, c](const Eigen::VectorXd& z) { return c * f.value(z); };
  if (f.gradient)
    g.gradient = [f, c](const Eigen::VectorXd& z) { return (c * f.gradient(z)).eval(); };
  if (f.hessian)
    g.hessian = [f, c](const Eigen::VectorXd& z) { return (c * f.hessian(z)).eval(); };
  g.sup_norm = std::abs(c) * f.sup_norm;
  return g;
}

}  // namespace hyposde
