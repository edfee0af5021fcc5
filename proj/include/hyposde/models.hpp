#pragma once

// Model registry and validation: built-in models, JSON-defined models with
// expression coefficients, and sampled renderings of the structural
// hypotheses (ellipticity, Kalman condition, local boundedness, Lyapunov
// drift bound).

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyposde/expr.hpp"
#include "hyposde/matcore.hpp"
#include "hyposde/oukernel.hpp"
#include "hyposde/sdesim.hpp"

namespace hyposde {

struct ModelSpec {
  std::string name;
  int d = 0, d0 = 0, r = 0;
  MatrixXd A;
  std::function<VectorXd(const VectorXd&)> b0;  // null = zero drift
  std::function<MatrixXd(const VectorXd&)> B0;
  std::optional<LyapunovSpec> lyapunov;

  SDEModel to_sde() const {
    SDEModel m;
    m.d = d;
    m.d0 = d0;
    m.r = r;
    m.A = A;
    m.b0 = b0;
    m.B0 = B0;
    m.lyapunov = lyapunov;
    return m;
  }
  // Frozen-coefficient OU model at a point (default: the origin).
  OUModel frozen_ou(const VectorXd& at) const {
    MatrixXd B = B0(at);
    return OUModel(A, B * B.transpose());
  }
  OUModel frozen_ou() const { return frozen_ou(VectorXd::Zero(d)); }
};

// |z|^2 + 1 with analytic derivatives.
inline ScalarField quadratic_lyapunov(int d) {
  ScalarField phi;
  phi.label = "|z|^2+1";
  phi.value = [](const VectorXd& z) { return z.squaredNorm() + 1.0; };
  phi.gradient = [](const VectorXd& z) { return (2.0 * z).eval(); };
  phi.hessian = [d](const VectorXd&) {
    return (2.0 * MatrixXd::Identity(d, d)).eval();
  };
  return phi;
}

// The three-dimensional example: dx = (-x^3 + y/|y|) dt + a(x,y,z) dW,
// dy = (x+y) dt, dz = (y+z) dt, with a = sqrt(2 + tanh(x)) as the concrete
// bounded representative and y/|y| := 0 at y = 0. Kalman index 2,
// Lyapunov function x^2+y^2+z^2+1.
inline ModelSpec builtin_paper_ex1() {
  ModelSpec s;
  s.name = "paper-ex1";
  s.d = 3;
  s.d0 = 1;
  s.r = 1;
  s.A = MatrixXd{{0, 0, 0}, {1, 1, 0}, {0, 1, 1}};
  s.b0 = [](const VectorXd& z) {
    double y = z[1];
    double sgn = y > 0 ? 1.0 : (y < 0 ? -1.0 : 0.0);
    VectorXd b(1);
    b[0] = -z[0] * z[0] * z[0] + sgn;
    return b;
  };
  s.B0 = [](const VectorXd& z) {
    MatrixXd B(1, 1);
    B(0, 0) = std::sqrt(2.0 + std::tanh(z[0]));
    return B;
  };
  // C is the sampled max of (L phi)/phi over B(0, R) at validation time;
  // 12 leaves ample headroom over the sampled value (~3.3 on B(0,3)).
  s.lyapunov = LyapunovSpec{quadratic_lyapunov(3), 12.0};
  return s;
}

// Kolmogorov's minimal hypoelliptic example: d = 2, d0 = 1,
// A = [[0,0],[1,0]], unit diffusion, no drift perturbation.
inline ModelSpec builtin_kolmogorov_2d() {
  ModelSpec s;
  s.name = "kolmogorov-2d";
  s.d = 2;
  s.d0 = 1;
  s.r = 1;
  s.A = MatrixXd{{0, 0}, {1, 0}};
  s.B0 = [](const VectorXd&) { return MatrixXd::Identity(1, 1).eval(); };
  return s;
}

// Constant-coefficient OU with full-rank noise: A = -I, Q0 = I.
inline ModelSpec builtin_ou_constant(int d = 2) {
  ModelSpec s;
  s.name = "ou-constant";
  s.d = d;
  s.d0 = d;
  s.r = d;
  s.A = -MatrixXd::Identity(d, d);
  s.B0 = [d](const VectorXd&) { return MatrixXd::Identity(d, d).eval(); };
  s.lyapunov = LyapunovSpec{quadratic_lyapunov(d), static_cast<double>(d)};
  return s;
}

inline ModelSpec builtin(const std::string& name) {
  if (name == "paper-ex1") return builtin_paper_ex1();
  if (name == "kolmogorov-2d") return builtin_kolmogorov_2d();
  if (name == "ou-constant") return builtin_ou_constant();
  throw std::invalid_argument("unknown builtin model '" + name +
                              "'; valid: paper-ex1, kolmogorov-2d, ou-constant");
}

// JSON schema: { "d", "d0", "r", "A": [[..]], "b0": [expr per component],
// "B0": [[expr]], "phi": expr (optional), "C": number (optional),
// "vars": ["x","y",...] }.
inline ModelSpec model_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.name = j.value("name", "user-model");
  s.d = j.at("d").get<int>();
  s.d0 = j.at("d0").get<int>();
  s.r = j.value("r", s.d0);
  require(s.d >= 1 && s.d0 >= 1 && s.d0 <= s.d && s.r >= 1,
          "model: require 1 <= d0 <= d and r >= 1");
  std::vector<std::string> vars = j.value("vars", std::vector<std::string>{});
  if (vars.empty())
    for (int i = 0; i < s.d; ++i) vars.push_back("z" + std::to_string(i + 1));
  require(static_cast<int>(vars.size()) == s.d, "model: vars must have d entries");

  auto a_rows = j.at("A");
  require(static_cast<int>(a_rows.size()) == s.d, "model: A must be d x d");
  s.A.resize(s.d, s.d);
  for (int i = 0; i < s.d; ++i)
    for (int c = 0; c < s.d; ++c) s.A(i, c) = a_rows[i][c].get<double>();

  if (j.contains("b0") && !j["b0"].is_null()) {
    std::vector<CoeffExpr> exprs;
    for (const auto& e : j["b0"])
      exprs.push_back(parse_coeff_expr(e.get<std::string>(), vars));
    require(static_cast<int>(exprs.size()) == s.d0, "model: b0 must have d0 entries");
    s.b0 = [exprs](const VectorXd& z) {
      VectorXd b(exprs.size());
      for (std::size_t i = 0; i < exprs.size(); ++i) b[i] = exprs[i].eval(z);
      return b;
    };
  }

  std::vector<std::vector<CoeffExpr>> bexprs;
  for (const auto& row : j.at("B0")) {
    std::vector<CoeffExpr> r;
    for (const auto& e : row) r.push_back(parse_coeff_expr(e.get<std::string>(), vars));
    require(static_cast<int>(r.size()) == s.r, "model: B0 rows must have r entries");
    bexprs.push_back(std::move(r));
  }
  require(static_cast<int>(bexprs.size()) == s.d0, "model: B0 must have d0 rows");
  int d0 = s.d0, r = s.r;
  s.B0 = [bexprs, d0, r](const VectorXd& z) {
    MatrixXd B(d0, r);
    for (int i = 0; i < d0; ++i)
      for (int c = 0; c < r; ++c) B(i, c) = bexprs[i][c].eval(z);
    return B;
  };

  if (j.contains("phi") && !j["phi"].is_null()) {
    CoeffExpr phi_expr = parse_coeff_expr(j["phi"].get<std::string>(), vars);
    ScalarField phi;
    phi.label = "phi";
    phi.value = [phi_expr](const VectorXd& z) { return phi_expr.eval(z); };
    s.lyapunov = LyapunovSpec{phi, j.value("C", 1.0)};
  }
  return s;
}

struct OscillationSample {
  double dist = 0;
  double q_diff = 0;  // Hilbert-Schmidt distance of Q0 between the two points
};

struct HypothesisReport {
  KalmanReport kalman;
  double min_ellipticity = 0;
  std::optional<VectorXd> ellipticity_witness;  // point where Q0 failed PD
  std::vector<OscillationSample> continuity_modulus;
  double b0_sup = 0;  // sampled sup of |b0| over the probed ball
  std::optional<double> lyapunov_max_ratio;  // sampled max of L phi / phi
  std::optional<double> lyapunov_declared_C;
  bool lyapunov_violation = false;
  int n_probes = 0;
  double region_radius = 0;

  bool has_violation() const {
    return ellipticity_witness.has_value() || !kalman.k.has_value() ||
           lyapunov_violation;
  }
};

namespace detail {

// Generator applied to phi with derivatives by central differences when
// analytic ones are absent. Expressions are not differentiated symbolically.
inline double generator_apply_fd(const SDEModel& m, const ScalarField& phi,
                                 const VectorXd& z, double step = 1e-4) {
  VectorXd grad(m.d);
  MatrixXd hess = MatrixXd::Zero(m.d, m.d);
  if (phi.has_gradient() && phi.has_hessian()) {
    grad = phi.gradient(z);
    hess = phi.hessian(z);
  } else {
    double f0 = phi(z);
    for (int i = 0; i < m.d; ++i) {
      VectorXd zp = z, zm = z;
      zp[i] += step;
      zm[i] -= step;
      grad[i] = (phi(zp) - phi(zm)) / (2 * step);
      hess(i, i) = (phi(zp) - 2 * f0 + phi(zm)) / (step * step);
    }
    for (int i = 0; i < m.d; ++i)
      for (int c = i + 1; c < m.d; ++c) {
        VectorXd zpp = z, zpm = z, zmp = z, zmm = z;
        zpp[i] += step; zpp[c] += step;
        zpm[i] += step; zpm[c] -= step;
        zmp[i] -= step; zmp[c] += step;
        zmm[i] -= step; zmm[c] -= step;
        hess(i, c) = hess(c, i) =
            (phi(zpp) - phi(zpm) - phi(zmp) + phi(zmm)) / (4 * step * step);
      }
  }
  double v = 0.5 * (m.Q0_at(z) * hess.topLeftCorner(m.d0, m.d0)).trace();
  v += (m.A * z).dot(grad);
  if (m.b0) v += m.b0(z).dot(grad.head(m.d0));
  return v;
}

}  // namespace detail

// Sample n_probes points of B(0, R) and record what can be checked from
// samples: ellipticity witnesses, an oscillation table (a continuity
// heuristic -- never a continuity verdict), the exact Kalman report, the
// sampled sup of |b0|, and the sampled max of L phi / phi when phi is
// declared.
inline HypothesisReport validate(const ModelSpec& spec, double R, int n_probes,
                                 std::uint64_t seed = 424242) {
  require(R > 0, "validate: require R > 0");
  require(n_probes >= 100, "validate: require n_probes >= 100");
  SDEModel m = spec.to_sde();
  HypothesisReport rep;
  rep.n_probes = n_probes;
  rep.region_radius = R;
  rep.kalman = kalman_index(spec.A, spec.d0);
  rep.min_ellipticity = std::numeric_limits<double>::infinity();

  RngStream stream(seed);
  std::vector<VectorXd> pts;
  for (int i = 0; i < n_probes; ++i) {
    VectorXd dir = stream.normal_vector(spec.d);
    dir.normalize();
    double u = std::pow(stream.uniform(), 1.0 / spec.d);
    pts.push_back(R * u * dir);
  }
  std::vector<MatrixXd> qs;
  for (const auto& z : pts) {
    MatrixXd q = m.Q0_at(z);
    double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(q).eigenvalues().minCoeff();
    if (lmin <= 0 && !rep.ellipticity_witness) rep.ellipticity_witness = z;
    rep.min_ellipticity = std::min(rep.min_ellipticity, lmin);
    qs.push_back(std::move(q));
    if (m.b0) rep.b0_sup = std::max(rep.b0_sup, m.b0(z).norm());
  }
  // oscillation table over consecutive sample pairs
  for (std::size_t i = 0; i + 1 < pts.size() && i < 512; ++i)
    rep.continuity_modulus.push_back(
        {(pts[i] - pts[i + 1]).norm(), (qs[i] - qs[i + 1]).norm()});

  if (spec.lyapunov) {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& z : pts) {
      double ratio =
          detail::generator_apply_fd(m, spec.lyapunov->phi, z) / spec.lyapunov->phi(z);
      worst = std::max(worst, ratio);
    }
    rep.lyapunov_max_ratio = worst;
    rep.lyapunov_declared_C = spec.lyapunov->growth_C;
    rep.lyapunov_violation = worst > spec.lyapunov->growth_C;
  }
  return rep;
}

}  // namespace hyposde
