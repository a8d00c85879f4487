#pragma once

// Finite-blocklength rate calculus for short-packet links.
//
// Working units are nats per channel use.  The achievable rate at SINR g is
//   R(g) = ln(1+g) - vartheta * sqrt(V(g)),   V(g) = 1 - (1+g)^-2,
// where vartheta = Qinv(eps) / sqrt(n) folds the decoding-error target eps
// and the blocklength n into one penalty coefficient.  vartheta = 0 recovers
// the Shannon rate.
//
// R is not monotone: it decreases on (0, nu0), increases afterwards, and is
// convex below / concave above a unique inflection point nu4.  The SINR
// thresholds nu0..nu4 drive every optimizer in this library, so they are
// solved here once per (eps, n, payload) configuration and cached in a
// RateRegime.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace urllc {

// Gaussian tail probability Q(x) = P[N(0,1) > x].
inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Inverse of q_function on eps in (0, 1), negative for eps > 1/2.
// Bisection narrows a bracket, Newton polishes to ~1 ulp of the argument.
inline double q_inv(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) {
    throw std::domain_error("q_inv: eps must lie in (0, 1)");
  }
  if (eps == 0.5) return 0.0;
  if (eps > 0.5) return -q_inv(1.0 - eps);
  double lo = 0.0;
  double hi = 2.0;
  while (q_function(hi) > eps) hi *= 2.0;  // Q(40) < 1e-300, loop is short
  for (int i = 0; i < 40; ++i) {
    const double mid = 0.5 * (lo + hi);
    (q_function(mid) > eps ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 8; ++i) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    if (pdf <= 0.0) break;
    x += (q_function(x) - eps) / pdf;  // Q' = -pdf
  }
  return x;
}

// Channel dispersion V(g) = 1 - (1+g)^-2, computed as g(2+g)/(1+g)^2 so tiny
// g does not cancel.
inline double dispersion(double gamma) {
  const double gp1 = 1.0 + gamma;
  return gamma * (2.0 + gamma) / (gp1 * gp1);
}

// Achievable rate in nats per channel use at SINR gamma >= 0.
inline double rate(double gamma, double vartheta) {
  if (gamma < 0.0) throw std::domain_error("rate: gamma must be >= 0");
  return std::log1p(gamma) - vartheta * std::sqrt(dispersion(gamma));
}

struct RateDerivs {
  double d1;         // R'(gamma)
  double d2;         // R''(gamma)
  double curvature;  // g(gamma) = (3(1+g)^2 - 2) / ((1+g) ((1+g)^2 - 1)^{3/2})
};

// First/second derivative of R at gamma > 0.  The strictly decreasing
// curvature factor g()
// makes vartheta * g(nu4) = 1 the inflection condition.
inline RateDerivs rate_derivs(double gamma, double vartheta) {
  if (!(gamma > 0.0)) throw std::domain_error("rate_derivs: gamma must be > 0");
  const double gp1 = 1.0 + gamma;
  const double s = gamma * (2.0 + gamma);  // (1+g)^2 - 1, no cancellation
  RateDerivs out;
  out.d1 = (1.0 - vartheta / (gp1 * std::sqrt(s))) / gp1;
  out.curvature = (3.0 * gp1 * gp1 - 2.0) / (gp1 * s * std::sqrt(s));
  out.d2 = -(1.0 - vartheta * out.curvature) / (gp1 * gp1);
  return out;
}

// Stationary point of R: nu0 = sqrt((1 + sqrt(1 + 4 vartheta^2))/2) - 1.
// R decreases before nu0 and increases after; R(nu0) <= 0.
inline double nu0(double vartheta) {
  return std::sqrt(0.5 * (1.0 + std::sqrt(1.0 + 4.0 * vartheta * vartheta))) - 1.0;
}

// Bessel polynomial B_m(z) = sum_{k=0..m} (m+k)! / (k! (m-k)!) (z/2)^k,
// accumulated with the multiplicative term recurrence to avoid factorials.
inline double bessel_poly(int m, double z) {
  if (m < 0) throw std::domain_error("bessel_poly: order must be >= 0");
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= m; ++k) {
    term *= static_cast<double>(m + k) * static_cast<double>(m - k + 1) / k * (0.5 * z);
    sum += term;
  }
  return sum;
}

// Argument convention for the generalized Lambert-W series below.  The two
// published forms of the expansion disagree on whether the Bessel argument
// carries a 1/m factor; per_term_scaled keeps it and is the form that
// reproduces the reference root table, so it is the default everywhere.
enum class BesselArg { fixed, per_term_scaled };

namespace detail {

// ln B_m(z) for z >= 0 (all summands positive).  The running term is kept as
// a scaled double so orders far beyond double range stay exact in the log.
inline double log_bessel_poly(int m, double z) {
  double t = 1.0;
  double sum = 1.0;
  long exp2_shift = 0;  // carries sum's binary exponent offset
  for (int k = 1; k <= m; ++k) {
    t *= static_cast<double>(m + k) * static_cast<double>(m - k + 1) / k * (0.5 * z);
    if (t > 1e280 || sum > 1e280) {
      t = std::ldexp(t, -1000);
      sum = std::ldexp(sum, -1000);
      exp2_shift += 1000;
    }
    sum += t;
  }
  return std::log(sum) + exp2_shift * M_LN2;
}

}  // namespace detail

// Truncated series for the generalized Lambert W function W(iota1, iota2; mu)
// solving e^x (x - iota1)(x - iota2) = mu.  Returns the branch near iota1:
//   x = iota1 - sum_{m>=1} (1/(m m!)) (mu m e^{-iota1} / (iota2-iota1))^m B_{m-1}(z_m)
// with z_m = -2/(m (iota2-iota1)) (per_term_scaled) or -2/(iota2-iota1) (fixed).
// The series is asymptotic over part of the parameter range, so summation
// stops at the smallest term (optimal truncation) or after `terms` entries,
// whichever comes first; the residual error of a truncated divergent tail is
// inherent to the expansion.  Term magnitudes are formed in log space, which
// keeps orders beyond double range out of the partial sums.
inline double gen_lambert_w(double iota1, double iota2, double mu, int terms = 60,
                            BesselArg arg = BesselArg::per_term_scaled) {
  if (iota1 == iota2) throw std::domain_error("gen_lambert_w: iota1 == iota2");
  const double c = mu * std::exp(-iota1) / (iota2 - iota1);
  if (c == 0.0) return iota1;
  const double z0 = -2.0 / (iota2 - iota1);
  double x = iota1;
  double prev_mag = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= terms; ++m) {
    const double z = (arg == BesselArg::per_term_scaled) ? z0 / m : z0;
    double log_mag = m * std::log(std::abs(c) * m) - std::log(static_cast<double>(m)) -
                     std::lgamma(m + 1.0);
    double sign = (c < 0.0 && (m & 1)) ? -1.0 : 1.0;
    if (z >= 0.0) {
      log_mag += detail::log_bessel_poly(m - 1, z);
    } else {
      const double b = bessel_poly(m - 1, z);  // alternating signs: no log form
      if (!std::isfinite(b)) {
        throw std::range_error("gen_lambert_w: Bessel factor exceeded double range");
      }
      if (b == 0.0) continue;
      log_mag += std::log(std::abs(b));
      sign *= (b < 0.0) ? -1.0 : 1.0;
    }
    if (log_mag > prev_mag) break;  // past the smallest term: tail diverges
    prev_mag = log_mag;
    x -= sign * std::exp(log_mag);
    if (!std::isfinite(x)) {
      throw std::range_error("gen_lambert_w: series diverged to non-finite values");
    }
    if (log_mag < std::log(1e-16 * std::abs(x))) break;
  }
  return x;
}

// Root of R(gamma) = alpha for gamma > nu0, by bisection.  This is the
// authoritative solver; the series route below must agree with it wherever
// the series converges.  Substituting kappa = 2 (ln(1+gamma) - alpha) turns
// R(gamma) = alpha into
//   e^kappa (kappa - 2 vartheta)(kappa + 2 vartheta) = -4 beta^2 vartheta^2,
// beta = e^-alpha, with exactly one root in (0, 2 vartheta]: the left side
// starts at or above the right side at kappa = 0, dips below, and rises back
// to 0, so the sign of (lhs - rhs) brackets the root.
inline double solve_rate_eq_bisect(double alpha, double vartheta) {
  if (alpha < 0.0) throw std::domain_error("solve_rate_eq_bisect: alpha must be >= 0");
  if (!(vartheta > 0.0)) throw std::domain_error("solve_rate_eq_bisect: vartheta must be > 0");
  const double beta = std::exp(-alpha);
  const double rhs = -4.0 * beta * beta * vartheta * vartheta;
  auto excess = [&](double kappa) {
    return std::exp(kappa) * (kappa - 2.0 * vartheta) * (kappa + 2.0 * vartheta) - rhs;
  };
  double lo = 0.0;
  double hi = 2.0 * vartheta;
  while (hi - lo > 1e-14) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // interval below representable spacing
    (excess(mid) <= 0.0 ? lo : hi) = mid;
  }
  return std::expm1(alpha + 0.25 * (lo + hi));
}

// Same root through the generalized Lambert W series.  Substituting
// kappa = 2 (ln(1+gamma) - alpha) turns R(gamma) = alpha into
//   e^kappa (kappa - 2 vartheta)(kappa + 2 vartheta) = -4 beta^2 vartheta^2,
// beta = e^-alpha, whose branch in (0, 2 vartheta] is W(2vt, -2vt; -4 beta^2 vt^2).
inline double solve_rate_eq_series(double alpha, double vartheta, int terms = 60,
                                   BesselArg arg = BesselArg::per_term_scaled) {
  if (alpha < 0.0) throw std::domain_error("solve_rate_eq_series: alpha must be >= 0");
  if (!(vartheta > 0.0)) throw std::domain_error("solve_rate_eq_series: vartheta must be > 0");
  const double beta = std::exp(-alpha);
  const double kappa =
      gen_lambert_w(2.0 * vartheta, -2.0 * vartheta, -4.0 * beta * beta * vartheta * vartheta,
                    terms, arg);
  return std::expm1(alpha + 0.5 * kappa);
}

// Inflection point of R: the unique root of vartheta * g(gamma) = 1.  The
// curvature factor g decreases strictly from +inf to 0, so plain bisection
// on a doubled bracket is safe.
inline double nu4(double vartheta) {
  if (!(vartheta > 0.0)) throw std::domain_error("nu4: vartheta must be > 0");
  auto excess = [vartheta](double gamma) {
    return vartheta * rate_derivs(gamma, vartheta).curvature - 1.0;
  };
  double lo = 1e-12;
  while (excess(lo) < 0.0) lo *= 0.5;  // curvature -> inf at 0+, rarely loops
  double hi = std::max(1.0, 2.0 * lo);
  while (excess(hi) > 0.0) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Frozen per-configuration constants shared by all solvers.
//  nu2: R(nu2) = 0 with nu2 > 0      (rate becomes positive)
//  nu3: R(nu3) = rate_min            (payload/blocklength QoS threshold)
//  nu4: inflection of R              (0 in Shannon mode, where R is concave)
struct RateRegime {
  double epsilon = 0.0;
  int blocklength = 0;
  int payload_bits = 0;
  bool shannon_mode = false;
  double vartheta = 0.0;
  double rate_min = 0.0;  // (payload/blocklength) ln 2, in nats per use
  double nu0 = 0.0;
  double nu2 = 0.0;
  double nu3 = 0.0;
  double nu4 = 0.0;
};

// Builds the regime for an (eps, blocklength, payload) configuration.
// shannon = true zeroes the dispersion penalty; nu3 then has the closed form
// 2^(payload/n) - 1 and the curvature thresholds degenerate to 0.
inline RateRegime make_regime(double epsilon, int blocklength, int payload_bits,
                              bool shannon = false) {
  if (blocklength < 1) throw std::domain_error("make_regime: blocklength must be >= 1");
  if (payload_bits < 1) throw std::domain_error("make_regime: payload_bits must be >= 1");
  if (!shannon && !(epsilon > 0.0 && epsilon < 0.5)) {
    throw std::domain_error("make_regime: epsilon must lie in (0, 1/2)");
  }
  RateRegime r;
  r.epsilon = epsilon;
  r.blocklength = blocklength;
  r.payload_bits = payload_bits;
  r.shannon_mode = shannon;
  r.rate_min = static_cast<double>(payload_bits) / blocklength * M_LN2;
  if (shannon) {
    r.nu3 = std::expm1(r.rate_min);  // 2^(payload/n) - 1
    return r;
  }
  r.vartheta = q_inv(epsilon) / std::sqrt(static_cast<double>(blocklength));
  r.nu0 = nu0(r.vartheta);
  r.nu2 = solve_rate_eq_bisect(0.0, r.vartheta);
  r.nu3 = solve_rate_eq_bisect(r.rate_min, r.vartheta);
  r.nu4 = nu4(r.vartheta);
  return r;
}

}  // namespace urllc
