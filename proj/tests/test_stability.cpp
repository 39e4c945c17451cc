#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "pipesim/stability.hpp"

using namespace pipesim;

namespace {

StabilityProblem plain(double lambda, double alpha, int tau) {
  StabilityProblem p;
  p.lambda = lambda;
  p.alpha = alpha;
  p.tau_fwd = tau;
  return p;
}

StabilityProblem with_discrepancy(double lambda, double alpha, double delta, int tf, int tb) {
  StabilityProblem p;
  p.lambda = lambda;
  p.alpha = alpha;
  p.delta = delta;
  p.tau_fwd = tf;
  p.tau_bkwd = tb;
  p.features.discrepancy = true;
  return p;
}

StabilityProblem with_momentum(double lambda, double alpha, double beta, int tau) {
  StabilityProblem p;
  p.lambda = lambda;
  p.alpha = alpha;
  p.beta = beta;
  p.tau_fwd = tau;
  p.features.momentum = true;
  return p;
}

StabilityProblem with_correction(double lambda, double alpha, double delta, double gamma, int tf,
                                 int tb) {
  StabilityProblem p = with_discrepancy(lambda, alpha, delta, tf, tb);
  p.gamma = gamma;
  p.features.correction = true;
  return p;
}

// monic polynomial with the given real roots, highest-degree first
CharPoly poly_from_roots(const std::vector<double>& roots) {
  std::vector<double> asc = {1.0};
  for (double r : roots) {
    std::vector<double> next(asc.size() + 1, 0.0);
    for (size_t k = 0; k < asc.size(); ++k) {
      next[k + 1] += asc[k];
      next[k] -= r * asc[k];
    }
    asc = next;
  }
  CharPoly p;
  p.coeffs.assign(asc.rbegin(), asc.rend());
  return p;
}

// an alpha known to sit strictly above the stability threshold yet at or
// below the closed-form bound, for "instability exists below the bound" checks
double probe_above(double alpha_star, double bound) {
  return std::min(bound, alpha_star * 1.02);
}

constexpr double kPi = std::numbers::pi;

}  // namespace

TEST_CASE("closed-form threshold values") {
  REQUIRE(lemma1_threshold(1, 10) == Catch::Approx(2.0 * std::sin(kPi / 42)).epsilon(1e-15));
  REQUIRE(lemma1_threshold(1, 0) == 2.0);
  REQUIRE(lemma1_threshold(10, 10) == Catch::Approx(0.0149459).margin(1e-6));
  REQUIRE(lemma2_bound(1, 5, 10, 6) == Catch::Approx(0.1).epsilon(1e-12));
  REQUIRE(lemma2_bound(1, 1e-9, 10, 6) == Catch::Approx(lemma1_threshold(1, 10)).epsilon(1e-12));
  REQUIRE(lemma2_bound(1, 100, 40, 10) == Catch::Approx(2.0 / 3000.0).epsilon(1e-12));
  REQUIRE(lemma3_bound(1, 10) == Catch::Approx(4.0 * std::sin(kPi / 42)).epsilon(1e-15));
  REQUIRE(lemma3_bound(1, 10) == Catch::Approx(0.298918).margin(1e-5));
  REQUIRE(lemma3_bound(1, 0) == 4.0);
  REQUIRE(lemma3_bound(2, 10) == Catch::Approx(0.149459).margin(1e-6));
  REQUIRE_THROWS_AS(lemma1_threshold(0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(lemma2_bound(1, 0, 10, 6), std::invalid_argument);
  REQUIRE_THROWS_AS(lemma2_bound(1, 5, 6, 6), std::invalid_argument);
  REQUIRE_THROWS_AS(lemma3_bound(-1, 1), std::invalid_argument);
}

TEST_CASE("correction decay per stage") {
  REQUIRE(gamma_for_decay(0.135, 4, 3) == 0.135);
  REQUIRE(gamma_for_decay(0.135, 5, 1) ==
          Catch::Approx(std::sqrt(std::sqrt(0.135))).epsilon(1e-14));
  REQUIRE(gamma_for_decay(0.135, 5, 1) == Catch::Approx(0.6055).margin(1e-3));
  REQUIRE_THROWS_AS(gamma_for_decay(0.135, 4, 4), std::invalid_argument);
  REQUIRE_THROWS_AS(gamma_for_decay(0.0, 4, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(gamma_for_decay(1.0, 4, 1), std::invalid_argument);
  // the theoretically motivated decay approaches e^-2 for long pipes
  const double g = 1.0 - 2.0 / (39 + 1);
  REQUIRE(std::abs(std::pow(g, 39) - std::exp(-2.0)) <= 0.01);
}

TEST_CASE("characteristic polynomial coefficients") {
  SECTION("plain delayed update") {
    REQUIRE(build_char_poly(plain(1, 0.1, 2)).coeffs == std::vector<double>{1, -1, 0, 0.1});
    REQUIRE(build_char_poly(plain(1, 0, 3)).coeffs == std::vector<double>{1, -1, 0, 0, 0});
    REQUIRE(build_char_poly(plain(2, 0.25, 0)).coeffs == std::vector<double>{1, -1 + 0.5});
  }
  SECTION("momentum") {
    StabilityProblem p = with_momentum(1, 0.1, 0.9, 2);
    REQUIRE(build_char_poly(p).coeffs == std::vector<double>{1, -1.9, 0.9, 0.1});
    StabilityProblem q = with_momentum(2, 0.25, 0.5, 0);
    REQUIRE(build_char_poly(q).coeffs == std::vector<double>{1, -(1.5) + 0.5, 0.5});
  }
  SECTION("momentum with beta=0 degenerates to the plain polynomial") {
    for (int tau : {0, 1, 3, 7}) {
      CharPoly a = build_char_poly(with_momentum(1.5, 0.2, 0.0, tau));
      CharPoly b = build_char_poly(plain(1.5, 0.2, tau));
      if (tau == 0) {
        // the tau=0 momentum form carries one extra root at zero
        REQUIRE(a.coeffs == std::vector<double>{1, b.coeffs[1], 0});
      } else {
        REQUIRE(a.coeffs == b.coeffs);
      }
    }
  }
  SECTION("forward-backward discrepancy") {
    CharPoly p = build_char_poly(with_discrepancy(1, 0.1, 5, 3, 1));
    REQUIRE(p.coeffs == std::vector<double>{1, -1, -(0.1 * 5), 0, 0.1 * (1 + 5.0)});
  }
  SECTION("correction with zero discrepancy adds only a root at gamma") {
    for (int tau : {1, 4, 9}) {
      StabilityProblem c = with_correction(1, 0.07, 0.0, 0.0, tau, 0);
      c.features.discrepancy = false;  // delta must not participate when disabled
      CharPoly corr = build_char_poly(c);
      CharPoly base = build_char_poly(plain(1, 0.07, tau));
      std::vector<double> shifted = base.coeffs;
      shifted.push_back(0.0);  // times omega: extra root at gamma = 0
      REQUIRE(corr.coeffs == shifted);
      REQUIRE(spectral_radius(corr) == Catch::Approx(spectral_radius(base)).epsilon(1e-12));
    }
  }
  SECTION("disabled features do not leak their sensitivities") {
    StabilityProblem p = plain(1, 0.1, 2);
    p.delta = 100;  // set but feature off
    p.beta = 0.9;
    REQUIRE(build_char_poly(p).coeffs == std::vector<double>{1, -1, 0, 0.1});
  }
  SECTION("malformed problems are rejected") {
    REQUIRE_THROWS_AS(build_char_poly(plain(0, 0.1, 2)), std::invalid_argument);
    REQUIRE_THROWS_AS(build_char_poly(plain(1, -0.1, 2)), std::invalid_argument);
    StabilityProblem p = with_discrepancy(1, 0.1, 5, 3, 4);
    REQUIRE_THROWS_AS(build_char_poly(p), std::invalid_argument);
    StabilityProblem m = with_momentum(1, 0.1, 1.0, 2);
    REQUIRE_THROWS_AS(build_char_poly(m), std::invalid_argument);
    m.beta = 0.5;
    m.features.discrepancy = true;
    REQUIRE_THROWS_AS(build_char_poly(m), std::invalid_argument);
    StabilityProblem c = with_correction(1, 0.1, 5, 1.0, 3, 1);
    REQUIRE_THROWS_AS(build_char_poly(c), std::invalid_argument);
    StabilityProblem r = with_discrepancy(1, 0.1, 5, 6, 2);
    r.features.recompute = true;
    r.phi = 1;
    r.tau_recomp = 7;  // outside [tau_bkwd, tau_fwd]
    REQUIRE_THROWS_AS(build_char_poly(r), std::invalid_argument);
  }
}

TEST_CASE("spectral radius of companion matrices") {
  CharPoly q;
  q.coeffs = {1, -1, 0, 0, 0};  // roots 0 and 1
  REQUIRE(spectral_radius(q) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(spectral_radius(plain(1, 0.2, 10)) > 1.0);
  REQUIRE(spectral_radius(plain(1, lemma1_threshold(1, 10), 10)) ==
          Catch::Approx(1.0).margin(1e-7));
  CharPoly deg0;
  deg0.coeffs = {1};
  REQUIRE_THROWS_AS(spectral_radius(deg0), std::invalid_argument);
  CharPoly nonmonic;
  nonmonic.coeffs = {2, 1};
  REQUIRE_THROWS_AS(spectral_radius(nonmonic), std::invalid_argument);
  CharPoly huge;
  huge.coeffs.assign(202, 0.0);
  huge.coeffs[0] = 1.0;
  REQUIRE_THROWS_AS(spectral_radius(huge), std::invalid_argument);
}

TEST_CASE("balancing keeps wide-spread roots accurate") {
  REQUIRE(spectral_radius(poly_from_roots({1e-6, 0.5, 1.0})) ==
          Catch::Approx(1.0).epsilon(1e-9));
  REQUIRE(spectral_radius(poly_from_roots({1e-8, 1e-4, 1.0, 100.0})) ==
          Catch::Approx(100.0).epsilon(1e-9));
  REQUIRE(spectral_radius(poly_from_roots({-3.0, 0.25, 2.0})) ==
          Catch::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("threshold root sits on the unit circle at the predicted angle") {
  for (int tau : {0, 1, 2, 5, 10, 21, 64}) {
    for (double lambda : {1.0, 10.0}) {
      const double astar = lemma1_threshold(lambda, tau);
      auto roots = poly_roots(build_char_poly(plain(lambda, astar, tau)));
      double best_mod = 1e9;
      std::complex<double> on_circle;
      for (auto r : roots) {
        double m = std::abs(std::abs(r) - 1.0);
        if (m < best_mod) {
          best_mod = m;
          on_circle = r;
        }
      }
      REQUIRE(best_mod <= 1e-7);
      const double want = kPi / (2.0 * tau + 1.0);
      const double got = std::abs(std::arg(on_circle));
      REQUIRE(got == Catch::Approx(want).margin(1e-6));
    }
  }
}

TEST_CASE("empirical threshold matches the closed form") {
  REQUIRE(max_stable_alpha(plain(1, 0, 10)).alpha_star == Catch::Approx(0.14946).margin(1e-5));
  REQUIRE(max_stable_alpha(plain(1, 0, 0)).alpha_star == Catch::Approx(2.0).epsilon(1e-6));
  REQUIRE(max_stable_alpha(plain(2, 0, 10)).alpha_star == Catch::Approx(0.07473).margin(1e-5));
  for (int tau : {1, 3, 10, 34}) {
    for (double lambda : {0.1, 1.0, 10.0}) {
      const double want = lemma1_threshold(lambda, tau);
      ThresholdResult r = max_stable_alpha(plain(lambda, 0, tau));
      REQUIRE(std::abs(r.alpha_star - want) <= 1e-5 * want);
      REQUIRE(r.bracket_lo <= r.alpha_star);
      REQUIRE(r.bracket_hi >= r.alpha_star);
      REQUIRE(r.bracket_hi - r.bracket_lo <= 1e-7 * r.bracket_lo * 1.0000001);
    }
  }
  REQUIRE_THROWS_AS(max_stable_alpha(plain(1, 0, 1), 0.0), std::invalid_argument);
}

TEST_CASE("threshold shrinks with delay and with discrepancy") {
  double prev = 1e9;
  for (int tau : {0, 1, 2, 3, 5, 8, 13, 21}) {
    double astar = max_stable_alpha(plain(1, 0, tau)).alpha_star;
    REQUIRE(astar < prev);
    prev = astar;
  }
  prev = 1e9;
  for (double delta : {0.0, 1.0, 5.0, 20.0, 100.0}) {
    double astar = max_stable_alpha(with_discrepancy(1, 0, delta, 10, 6)).alpha_star;
    REQUIRE(astar < prev);
    prev = astar;
  }
}

TEST_CASE("momentum widens the classical step-size window") {
  // no delay: the window is exactly 2(1+beta)/lambda
  for (double beta : {0.0, 0.5, 0.9}) {
    double astar = max_stable_alpha(with_momentum(1, 0, beta, 0)).alpha_star;
    REQUIRE(astar == Catch::Approx(2.0 * (1.0 + beta)).epsilon(1e-6));
  }
}

TEST_CASE("momentum cannot escape the delay barrier") {
  for (double beta : {0.5, 0.9, 0.99}) {
    for (int tau : {1, 5, 10}) {
      const double bound = lemma3_bound(1, tau);
      ThresholdResult r = max_stable_alpha(with_momentum(1, 0, beta, tau));
      REQUIRE(r.alpha_star <= bound + 1e-6);
      REQUIRE_FALSE(is_stable(with_momentum(1, probe_above(r.alpha_star, bound), beta, tau)));
    }
  }
}

TEST_CASE("discrepancy instability appears below the closed-form bound") {
  for (double delta : {1.0, 5.0, 20.0}) {
    for (int tf : {10, 20, 40}) {
      const int tb = tf / 2;
      const double bound = lemma2_bound(1, delta, tf, tb);
      ThresholdResult r = max_stable_alpha(with_discrepancy(1, 0, delta, tf, tb));
      REQUIRE(r.alpha_star <= bound * (1 + 1e-6));
      REQUIRE_FALSE(is_stable(with_discrepancy(1, probe_above(r.alpha_star, bound), delta, tf, tb)));
    }
  }
}

namespace {

void check_correction_helps(int tf, int tb, double delta) {
  StabilityProblem uncorr = with_discrepancy(1, 0, delta, tf, tb);
  const double gamma = 1.0 - 2.0 / (tf - tb + 1);
  StabilityProblem corr = with_correction(1, 0, delta, gamma, tf, tb);
  double a_un = max_stable_alpha(uncorr).alpha_star;
  double a_co = max_stable_alpha(corr).alpha_star;
  INFO("tf=" << tf << " tb=" << tb << " delta=" << delta << " gamma=" << gamma);
  REQUIRE(a_co >= a_un * (1 - 1e-5));
}

}  // namespace

TEST_CASE("discrepancy correction never shrinks the stable window (sampled grid)") {
  for (int tf : {1, 2, 3, 5, 8, 13, 21, 34, 40}) {
    std::vector<int> tbs = {0, tf / 4, tf / 2, (3 * tf) / 4, tf - 1};
    std::sort(tbs.begin(), tbs.end());
    tbs.erase(std::unique(tbs.begin(), tbs.end()), tbs.end());
    for (int tb : tbs) {
      if (tb >= tf) continue;
      for (double delta : {0.0, 1.0, 5.0, 20.0, 100.0}) check_correction_helps(tf, tb, delta);
    }
  }
}

TEST_CASE("discrepancy correction never shrinks the stable window (full grid)", "[.slow]") {
  for (int tf = 1; tf <= 40; ++tf)
    for (int tb = 0; tb < tf; ++tb)
      for (double delta : {0.0, 1.0, 5.0, 20.0, 100.0}) check_correction_helps(tf, tb, delta);
}

TEST_CASE("corrected polynomial probe identities at omega = 1") {
  std::mt19937 rng(20240817);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const int tf = 1 + (int)(U(rng) * 59.0);
    const int tb = (int)(U(rng) * tf);  // tb < tf
    StabilityProblem p = with_correction(0.1 + 4 * U(rng), 0.001 + 0.5 * U(rng), 50 * U(rng),
                                         U(rng) * 0.999, tf, tb);
    const double al = p.alpha * p.lambda;
    auto v0 = poly_probe(p, 0, 1.0);
    auto v1 = poly_probe(p, 1, 1.0);
    REQUIRE(std::abs(v0 - std::complex<double>(al * (1 - p.gamma))) <= 1e-9 * std::max(1.0, al));
    REQUIRE(std::abs(v1 - std::complex<double>(al + 1 - p.gamma)) <= 1e-9 * std::max(1.0, al));
    // with the theoretically motivated gamma, the curvature loses its delta term
    StabilityProblem q = p;
    q.gamma = 1.0 - 2.0 / (tf - tb + 1);
    auto v2a = poly_probe(q, 2, 1.0);
    q.delta = 50 * U(rng) + 1;
    auto v2b = poly_probe(q, 2, 1.0);
    REQUIRE(std::abs(v2a - v2b) <= 1e-9 * std::max(1.0, std::abs(v2a)));
  }
}

TEST_CASE("probe values against a hand-expanded polynomial") {
  StabilityProblem p = plain(1, 0.1, 2);  // omega^3 - omega^2 + 0.1
  REQUIRE(poly_probe(p, 0, 2.0) == std::complex<double>(4.1));
  REQUIRE(poly_probe(p, 1, 2.0) == std::complex<double>(8.0));
  REQUIRE(poly_probe(p, 2, 2.0) == std::complex<double>(10.0));
  std::complex<double> i(0.0, 1.0);
  REQUIRE(std::abs(poly_probe(p, 0, i) - std::complex<double>(1.1, -1.0)) <= 1e-15);
  REQUIRE_THROWS_AS(poly_probe(p, 3, 1.0), std::invalid_argument);
}

TEST_CASE("recompute polynomial reduces to the corrected one at zero recompute sensitivity") {
  for (int tf : {4, 9, 17}) {
    const int tb = tf / 3;
    const int tr = (tb + tf) / 2;
    StabilityProblem base = with_correction(1.3, 0.05, 7.0, 0.4, tf, tb);
    StabilityProblem rec = base;
    rec.features.recompute = true;
    rec.tau_recomp = tr;
    rec.phi = 0.0;
    REQUIRE(build_char_poly(rec).coeffs == build_char_poly(base).coeffs);
    // and without correction it reduces to the discrepancy polynomial
    StabilityProblem disc = with_discrepancy(1.3, 0.05, 7.0, tf, tb);
    StabilityProblem rec2 = disc;
    rec2.features.recompute = true;
    rec2.tau_recomp = tr;
    rec2.phi = 0.0;
    REQUIRE(build_char_poly(rec2).coeffs == build_char_poly(disc).coeffs);
  }
}

TEST_CASE("recompute sensitivity splits the backward path") {
  // tf=5, tb=1, tr=3: coefficients follow the two-path gradient model
  StabilityProblem p = with_discrepancy(1, 0.1, 6.0, 5, 1);
  p.features.recompute = true;
  p.tau_recomp = 3;
  p.phi = 2.0;
  CharPoly c = build_char_poly(p);
  // omega^6 - omega^5 + a(l+D) - a(D-F) omega^4 - a F omega^2
  std::vector<double> want = {1, -1, -0.1 * (6.0 - 2.0), 0, -0.1 * 2.0, 0, 0.1 * 7.0};
  REQUIRE(c.coeffs.size() == want.size());
  for (size_t k = 0; k < want.size(); ++k)
    REQUIRE(c.coeffs[k] == Catch::Approx(want[k]).margin(1e-15));
}

TEST_CASE("largest curvature by power iteration") {
  SECTION("identity rows") {
    for (int d : {1, 3, 8}) {
      Eigen::MatrixXd X = Eigen::MatrixXd::Identity(d, d);
      REQUIRE(largest_curvature(X) == Catch::Approx(1.0 / d).epsilon(1e-8));
    }
  }
  SECTION("single row gives its squared norm") {
    Eigen::MatrixXd X(1, 3);
    X << 1.0, 2.0, 2.0;
    REQUIRE(largest_curvature(X) == Catch::Approx(9.0).epsilon(1e-8));
  }
  SECTION("matches a dense eigendecomposition") {
    std::mt19937 rng(7);
    std::normal_distribution<double> N(0.0, 1.0);
    Eigen::MatrixXd X(50, 5);
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 5; ++j) X(i, j) = N(rng);
    Eigen::MatrixXd G = (X.transpose() * X) / 50.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    double want = es.eigenvalues().maxCoeff();
    REQUIRE(std::abs(largest_curvature(X) - want) <= 1e-6 * want);
  }
  SECTION("degenerate inputs") {
    REQUIRE(largest_curvature(Eigen::MatrixXd::Zero(4, 3)) == 0.0);
    REQUIRE_THROWS_AS(largest_curvature(Eigen::MatrixXd(0, 0)), std::invalid_argument);
  }
}
