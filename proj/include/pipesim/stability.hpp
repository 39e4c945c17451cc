#pragma once

// Stability analysis of delayed gradient updates on the quadratic model:
// characteristic polynomials for each delay configuration, spectral radii via
// companion-matrix eigenvalues, empirical stability thresholds, and the
// closed-form bounds they are tested against.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace pipesim {

struct StabilityFeatures {
  bool momentum = false;
  bool discrepancy = false;
  bool correction = false;
  bool recompute = false;
};

// One delayed-update configuration. Enabled features decide which of
// delta/phi/beta/gamma participate; disabled sensitivities are treated as 0.
struct StabilityProblem {
  double lambda = 1.0;
  double alpha = 0.0;
  double delta = 0.0;
  double phi = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  int tau_fwd = 0;
  int tau_bkwd = 0;
  int tau_recomp = 0;
  StabilityFeatures features;

  StabilityProblem with_alpha(double a) const {
    StabilityProblem p = *this;
    p.alpha = a;
    return p;
  }
};

// Monic polynomial; coeffs[0] is the leading (highest-degree) coefficient.
struct CharPoly {
  std::vector<double> coeffs;
  int degree() const { return (int)coeffs.size() - 1; }
};

namespace detail {

// ascending representation: p[k] multiplies omega^k
using Asc = std::vector<double>;

inline void add_scaled(Asc& dst, const Asc& src, double s, int shift) {
  if ((int)dst.size() < (int)src.size() + shift) dst.resize(src.size() + shift, 0.0);
  for (size_t k = 0; k < src.size(); ++k) dst[k + shift] += s * src[k];
}

inline void validate_problem(const StabilityProblem& p) {
  if (!(p.lambda > 0)) throw std::invalid_argument("StabilityProblem: lambda must be > 0");
  if (p.alpha < 0) throw std::invalid_argument("StabilityProblem: alpha must be >= 0");
  if (p.tau_fwd < 0 || p.tau_bkwd < 0 || p.tau_recomp < 0)
    throw std::invalid_argument("StabilityProblem: delays must be >= 0");
  if (p.tau_bkwd > p.tau_fwd)
    throw std::invalid_argument("StabilityProblem: tau_bkwd must be <= tau_fwd");
  const auto& f = p.features;
  if (f.momentum && (f.discrepancy || f.correction || f.recompute))
    throw std::invalid_argument("StabilityProblem: momentum cannot combine with other features");
  if (f.momentum && !(p.beta >= 0 && p.beta < 1))
    throw std::invalid_argument("StabilityProblem: beta must be in [0,1)");
  if (f.correction && !(p.gamma >= 0 && p.gamma < 1))
    throw std::invalid_argument("StabilityProblem: gamma must be in [0,1)");
  if (f.recompute && (p.tau_recomp < p.tau_bkwd || p.tau_recomp > p.tau_fwd))
    throw std::invalid_argument("StabilityProblem: need tau_bkwd <= tau_recomp <= tau_fwd");
}

}  // namespace detail

// Companion polynomial of the selected update rule. Feature map:
//   (none)       omega^(t+1) - omega^t + a*l
//   momentum     omega^(t+1) - (1+b)omega^t + b*omega^(t-1) + a*l
//   discrepancy  (omega-1)omega^tf + a(l+D) - a*D*omega^(tf-tb)
//   correction   (omega-1)(omega-g)omega^tf + a(l+D)(omega-g)
//                  - a*D*omega^(tf-tb)(omega-g)
//                  + a*D*omega^(tf-tb)(tf-tb)(1-g)(omega-1)
//   recompute    the correction form with D -> (D-F) on the omega^(tf-tb)
//                terms plus the two analogous F terms at omega^(tf-tr);
//                without correction, the direct expansion with g absent.
inline CharPoly build_char_poly(const StabilityProblem& p) {
  detail::validate_problem(p);
  const auto& f = p.features;
  const double a = p.alpha, l = p.lambda;
  const double D = f.discrepancy ? p.delta : 0.0;
  const double F = f.recompute ? p.phi : 0.0;
  const int tf = p.tau_fwd;
  const int db = tf - p.tau_bkwd;
  const int dr = f.recompute ? tf - p.tau_recomp : 0;

  detail::Asc c;
  if (f.momentum) {
    const double b = p.beta;
    if (tf == 0) {
      // multiply the tau=0 form through by omega to clear omega^(-1)
      c = {b, -(1.0 + b) + a * l, 1.0};
    } else {
      c.assign(tf + 2, 0.0);
      c[tf + 1] = 1.0;
      c[tf] = -(1.0 + b);
      c[tf - 1] += b;
      c[0] += a * l;
    }
  } else if (f.correction) {
    const double g = p.gamma;
    const detail::Asc om_1 = {-1.0, 1.0};          // omega - 1
    const detail::Asc om_g = {-g, 1.0};            // omega - gamma
    const detail::Asc quad = {g, -(1.0 + g), 1.0}; // (omega-1)(omega-gamma)
    const double Db = D - F;                       // sensitivity on the tau_bkwd path
    c.assign(tf + 3, 0.0);
    detail::add_scaled(c, quad, 1.0, tf);
    detail::add_scaled(c, om_g, a * (l + D), 0);
    detail::add_scaled(c, om_g, -a * Db, db);
    detail::add_scaled(c, om_1, a * Db * db * (1.0 - g), db);
    if (f.recompute) {
      detail::add_scaled(c, om_g, -a * F, dr);
      detail::add_scaled(c, om_1, a * F * dr * (1.0 - g), dr);
    }
    while ((int)c.size() > 1 && c.back() == 0.0) c.pop_back();
  } else {
    // discrepancy / recompute-without-correction / plain all share this shape
    c.assign(tf + 2, 0.0);
    c[tf + 1] = 1.0;
    c[tf] += -1.0;
    c[0] += a * (l + D);
    c[db] += -a * (D - F);
    if (f.recompute) c[dr] += -a * F;
  }

  CharPoly poly;
  poly.coeffs.assign(c.rbegin(), c.rend());
  if (poly.coeffs.empty() || poly.coeffs.front() != 1.0)
    throw std::logic_error("build_char_poly: polynomial is not monic");
  return poly;
}

namespace detail {

// Parlett-Reinsch balancing: diagonal similarity with power-of-2 scales so
// row/column norms agree; improves eigenvalue accuracy without changing them.
inline void balance_in_place(Eigen::MatrixXd& A) {
  const int n = (int)A.rows();
  bool converged = false;
  while (!converged) {
    converged = true;
    for (int i = 0; i < n; ++i) {
      double c = 0, r = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(A(j, i));
        r += std::abs(A(i, j));
      }
      if (c == 0 || r == 0) continue;
      double f = 1.0;
      const double s = c + r;
      while (c < r / 2.0) {
        c *= 2.0;
        r /= 2.0;
        f *= 2.0;
      }
      while (c > r * 2.0) {
        c /= 2.0;
        r *= 2.0;
        f /= 2.0;
      }
      if (c + r < 0.95 * s) {
        converged = false;
        A.col(i) *= f;
        A.row(i) /= f;
      }
    }
  }
}

inline Eigen::MatrixXd balanced_companion(const CharPoly& poly, const char* who) {
  const int n = poly.degree();
  if (n < 1) throw std::invalid_argument(std::string(who) + ": degree must be >= 1");
  if (n > 200) throw std::invalid_argument(std::string(who) + ": degree > 200 unsupported");
  if (poly.coeffs.front() != 1.0) throw std::invalid_argument(std::string(who) + ": not monic");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  if (n > 1) A.diagonal(-1).setOnes();
  for (int i = 0; i < n; ++i) A(i, n - 1) = -poly.coeffs[(size_t)(n - i)];  // -c_i ascending
  balance_in_place(A);
  return A;
}

}  // namespace detail

// Max |root|, via eigenvalues of the balanced companion matrix.
inline double spectral_radius(const CharPoly& poly) {
  Eigen::MatrixXd A = detail::balanced_companion(poly, "spectral_radius");
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("spectral_radius: eigensolver failed to converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// All roots (companion-matrix eigenvalues), unordered.
inline std::vector<std::complex<double>> poly_roots(const CharPoly& poly) {
  Eigen::MatrixXd A = detail::balanced_companion(poly, "poly_roots");
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("poly_roots: eigensolver failed to converge");
  std::vector<std::complex<double>> roots((size_t)A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) roots[(size_t)i] = es.eigenvalues()[i];
  return roots;
}

inline double spectral_radius(const StabilityProblem& p) {
  return spectral_radius(build_char_poly(p));
}

// Radius <= 1 + eps counts as stable; alpha = 0 puts a root exactly at 1.
inline constexpr double kRadiusTol = 1e-9;

inline bool is_stable(const StabilityProblem& p) {
  return spectral_radius(p) <= 1.0 + kRadiusTol;
}

struct ThresholdResult {
  double alpha_star = 0.0;
  double radius_at_star = 0.0;
  int iterations = 0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
};

// Smallest alpha at which the spectral radius crosses 1, found by doubling
// from alpha_hi = 4/lambda and bisecting. tol is the relative bracket width.
inline ThresholdResult max_stable_alpha(const StabilityProblem& problem, double tol = 1e-7) {
  if (!(tol > 0)) throw std::invalid_argument("max_stable_alpha: tol must be > 0");
  auto stable = [&](double a) { return is_stable(problem.with_alpha(a)); };
  int iters = 0;
  double lo = 0.0;
  double hi = 4.0 / problem.lambda;
  const double cap = 1024.0 / problem.lambda;
  while (stable(hi)) {
    ++iters;
    lo = hi;
    hi *= 2.0;
    if (hi > cap)
      throw std::runtime_error("max_stable_alpha: no instability found below 1024/lambda");
  }
  while (hi - lo > tol * std::max(lo, 1e-300)) {
    ++iters;
    double mid = 0.5 * (lo + hi);
    if (stable(mid))
      lo = mid;
    else
      hi = mid;
    if (iters > 200) break;
  }
  ThresholdResult r;
  r.alpha_star = 0.5 * (lo + hi);
  r.radius_at_star = spectral_radius(problem.with_alpha(r.alpha_star));
  r.iterations = iters;
  r.bracket_lo = lo;
  r.bracket_hi = hi;
  return r;
}

// Exact stability threshold of the plain delayed update: (2/l)sin(pi/(4t+2)).
inline double lemma1_threshold(double lambda, int tau) {
  if (!(lambda > 0)) throw std::invalid_argument("lemma1_threshold: lambda must be > 0");
  if (tau < 0) throw std::invalid_argument("lemma1_threshold: tau must be >= 0");
  return (2.0 / lambda) * std::sin(std::numbers::pi / (4.0 * tau + 2.0));
}

// Some unstable alpha lies at or below this value under delay discrepancy.
inline double lemma2_bound(double lambda, double delta, int tau_fwd, int tau_bkwd) {
  if (!(lambda > 0)) throw std::invalid_argument("lemma2_bound: lambda must be > 0");
  if (!(delta > 0)) throw std::invalid_argument("lemma2_bound: delta must be > 0");
  if (tau_fwd <= tau_bkwd) throw std::invalid_argument("lemma2_bound: need tau_fwd > tau_bkwd");
  return std::min(2.0 / (delta * (tau_fwd - tau_bkwd)), lemma1_threshold(lambda, tau_fwd));
}

// For any momentum beta in (0,1], some unstable alpha lies at or below this.
inline double lemma3_bound(double lambda, int tau) {
  if (!(lambda > 0)) throw std::invalid_argument("lemma3_bound: lambda must be > 0");
  if (tau < 0) throw std::invalid_argument("lemma3_bound: tau must be >= 0");
  return (4.0 / lambda) * std::sin(std::numbers::pi / (4.0 * tau + 2.0));
}

// Per-stage correction decay gamma_i = D^(1/(tau_fwd - tau_bkwd)).
inline double gamma_for_decay(double D, int tau_fwd, int tau_bkwd) {
  if (!(D > 0 && D < 1)) throw std::invalid_argument("gamma_for_decay: D must be in (0,1)");
  if (tau_fwd <= tau_bkwd)
    throw std::invalid_argument("gamma_for_decay: need tau_fwd > tau_bkwd (caller skips equal)");
  return std::pow(D, 1.0 / (tau_fwd - tau_bkwd));
}

// Evaluate p, p' or p'' at a complex point (Horner on the derivative coeffs).
inline std::complex<double> poly_probe(const StabilityProblem& problem, int order,
                                       std::complex<double> at) {
  if (order < 0 || order > 2) throw std::invalid_argument("poly_probe: order must be 0, 1, or 2");
  CharPoly poly = build_char_poly(problem);
  std::vector<double> asc(poly.coeffs.rbegin(), poly.coeffs.rend());
  for (int d = 0; d < order; ++d) {
    for (size_t k = 1; k < asc.size(); ++k) asc[k - 1] = asc[k] * (double)k;
    asc.pop_back();
  }
  std::complex<double> v = 0.0;
  for (size_t k = asc.size(); k-- > 0;) v = v * at + asc[k];
  return v;
}

// Largest eigenvalue of (1/n) X^T X by power iteration (tol 1e-8, cap 1e5).
inline double largest_curvature(const Eigen::MatrixXd& X) {
  const auto n = X.rows();
  const auto d = X.cols();
  if (n < 1 || d < 1) throw std::invalid_argument("largest_curvature: matrix must be nonempty");
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = 1.0 + (double)i / (2.0 * (double)d);
  v.normalize();
  double lam = 0.0;
  const double inv_n = 1.0 / (double)n;
  bool retried = false;
  for (int it = 0; it < 100000; ++it) {
    Eigen::VectorXd Av = (X.transpose() * (X * v)) * inv_n;
    double nrm = Av.norm();
    if (nrm == 0.0) {
      if (retried) return 0.0;  // X^T X annihilates both starts: treat as null
      retried = true;           // deterministic restart off the null space
      for (Eigen::Index i = 0; i < d; ++i) v(i) = 0.5 + (double)((i * 2654435761ULL) % 1009) / 1009.0;
      v.normalize();
      continue;
    }
    double lam_next = v.dot(Av);
    v = Av / nrm;
    if (it > 0 && std::abs(lam_next - lam) <= 1e-8 * std::abs(lam_next)) return lam_next;
    lam = lam_next;
  }
  throw std::runtime_error("largest_curvature: power iteration did not converge in 1e5 steps");
}

}  // namespace pipesim
