#pragma once

// Dense kernels shared by every module: matrix exponentials, controllability
// Gramians Q_t = int_0^t e^{sA} Q e^{sA^T} ds, the Kalman index of (A, d0),
// and Gaussian sampling from possibly degenerate covariances.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "hyposde/rng.hpp"

namespace hyposde {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

// exp(tA) by scaling-and-squaring with the degree-13 Pade approximant
// (Eigen's MatrixFunctions implementation).
inline MatrixXd mat_exp(const MatrixXd& A, double t) {
  require(A.rows() == A.cols(), "mat_exp: matrix must be square");
  require(all_finite(A) && std::isfinite(t), "mat_exp: non-finite input");
  return (t * A).exp();
}

struct KalmanReport {
  std::optional<int> k;  // empty = not hypoelliptic
  std::vector<int> rank_sequence;  // rank after appending A^j e_1..e_{d0}, j = 0..d-1
};

// Smallest j such that {e_1..e_{d0}, Ae_1.., ..., A^j e_1..} span R^d.
// Cayley-Hamilton makes j = d-1 sufficient.
inline KalmanReport kalman_index(const MatrixXd& A, int d0) {
  const int d = static_cast<int>(A.rows());
  require(A.cols() == d, "kalman_index: matrix must be square");
  require(d0 >= 1 && d0 <= d, "kalman_index: require 1 <= d0 <= d");
  require(all_finite(A), "kalman_index: non-finite input");

  KalmanReport rep;
  MatrixXd block = MatrixXd::Identity(d, d).leftCols(d0);
  MatrixXd stacked(d, d * d0);
  int cols = 0;
  for (int j = 0; j < d; ++j) {
    stacked.middleCols(cols, d0) = block;
    cols += d0;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(stacked.leftCols(cols));
    qr.setThreshold(1e-12);
    int rank = static_cast<int>(qr.rank());
    rep.rank_sequence.push_back(rank);
    if (rank == d && !rep.k) rep.k = j;
    block = A * block;
  }
  return rep;
}

// Columns of the augmented matrix take this block arrangement (Van Loan):
//   C = [[-A, Q], [0, A^T]],  e^{Ct} = [[e^{-At}, E12], [0, e^{A^T t}]],
//   Q_t = (e^{A^T t})^T * E12.
inline MatrixXd gramian(const MatrixXd& A, const MatrixXd& Q, double t) {
  const int d = static_cast<int>(A.rows());
  require(Q.rows() == d && Q.cols() == d, "gramian: dimension mismatch");
  require(t > 0, "gramian: require t > 0");
  require(all_finite(A) && all_finite(Q), "gramian: non-finite input");
  MatrixXd C = MatrixXd::Zero(2 * d, 2 * d);
  C.topLeftCorner(d, d) = -A;
  C.topRightCorner(d, d) = Q;
  C.bottomRightCorner(d, d) = A.transpose();
  MatrixXd E = (t * C).exp();
  MatrixXd Qt = E.bottomRightCorner(d, d).transpose() * E.topRightCorner(d, d);
  return 0.5 * (Qt + Qt.transpose());
}

// int_0^t e^{sA} ds by the same augmented-block device:
//   C = [[A, I], [0, 0]],  e^{Ct} = [[e^{At}, int_0^t e^{sA} ds], [0, I]].
inline MatrixXd exp_integral(const MatrixXd& A, double t) {
  const int d = static_cast<int>(A.rows());
  require(all_finite(A) && std::isfinite(t), "exp_integral: non-finite input");
  MatrixXd C = MatrixXd::Zero(2 * d, 2 * d);
  C.topLeftCorner(d, d) = A;
  C.topRightCorner(d, d) = MatrixXd::Identity(d, d);
  return (t * C).exp().topRightCorner(d, d);
}

// Rectangular F with F F^T = S, one column per eigenvalue above
// 1e-12 * lambda_max. Eigenvalues in [-1e-10 * lambda_max, 0] are clamped to
// zero (round-off in Gramians at tiny t); anything below that is an error.
inline MatrixXd psd_factor(const MatrixXd& S) {
  require(S.rows() == S.cols(), "psd_factor: matrix must be square");
  require(all_finite(S), "psd_factor: non-finite input");
  const int d = static_cast<int>(S.rows());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()));
  VectorXd ev = es.eigenvalues();
  double lmax = std::max(ev.maxCoeff(), 0.0);
  if (ev.minCoeff() < -1e-10 * std::max(lmax, 1e-300))
    throw std::invalid_argument("psd_factor: matrix is not positive semidefinite");
  std::vector<int> keep;
  for (int i = 0; i < d; ++i)
    if (ev[i] > 1e-12 * lmax) keep.push_back(i);
  MatrixXd F(d, static_cast<int>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j)
    F.col(static_cast<int>(j)) = es.eigenvectors().col(keep[j]) * std::sqrt(ev[keep[j]]);
  return F;
}

// mean + F * xi with xi standard normal of dimension rank(cov).
inline std::vector<VectorXd> gaussian_sample(const VectorXd& mean, const MatrixXd& cov,
                                             int n, RngStream& stream) {
  require(n >= 1, "gaussian_sample: require n >= 1");
  require(cov.rows() == mean.size(), "gaussian_sample: dimension mismatch");
  MatrixXd F = psd_factor(cov);
  std::vector<VectorXd> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(mean + F * stream.normal_vector(F.cols()));
  return out;
}

// log det of an SPD matrix as the sum of log eigenvalues; avoids underflow
// for Gramians at tiny t.
inline double logdet_spd(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  double acc = 0.0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    double ev = es.eigenvalues()[i];
    if (ev <= 0) throw std::range_error("logdet_spd: non-positive eigenvalue");
    acc += std::log(ev);
  }
  return acc;
}

struct GramianReport {
  std::vector<double> times;
  std::vector<MatrixXd> gramians;
  std::vector<double> log_dets;
  std::vector<double> min_eigs;
  double fitted_slope = 0.0;
  double fitted_intercept = 0.0;
  double fit_residual = 0.0;
};

inline void fit_line(const std::vector<double>& x, const std::vector<double>& y,
                     double& slope, double& intercept, double& residual) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
  mx /= n; my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  slope = sxy / sxx;
  intercept = my - slope * mx;
  residual = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = y[i] - slope * x[i] - intercept;
    residual += r * r;
  }
  residual = std::sqrt(residual / n);
}

// Q_t, log det, min eigenvalue over a time grid, plus the log-log slope of
// det over the grid (times below 1e-8 are excluded from the fit).
inline GramianReport gramian_report(const MatrixXd& A, const MatrixXd& Q,
                                    const std::vector<double>& times) {
  GramianReport rep;
  std::vector<double> lt, ld;
  for (double t : times) {
    require(t > 0, "gramian_report: times must be positive");
    MatrixXd Qt = gramian(A, Q, t);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Qt);
    rep.times.push_back(t);
    rep.gramians.push_back(Qt);
    rep.min_eigs.push_back(es.eigenvalues().minCoeff());
    rep.log_dets.push_back(logdet_spd(Qt));
    if (t >= 1e-8) {
      lt.push_back(std::log(t));
      ld.push_back(rep.log_dets.back());
    }
  }
  if (lt.size() >= 2)
    fit_line(lt, ld, rep.fitted_slope, rep.fitted_intercept, rep.fit_residual);
  return rep;
}

}  // namespace hyposde
