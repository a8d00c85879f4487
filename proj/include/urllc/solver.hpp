#pragma once

// Convex optimization core.
//
// solve_ipm maximizes a smooth concave objective over sparse linear
// constraints, convex quadratic constraints of the form
// (c + d'x)^2 - (e + f'x) <= 0, and finite box bounds, using a log-barrier
// interior-point method with damped Newton centering.  Every variable must
// carry finite bounds: the box barrier keeps the Newton system positive
// definite even where the objective is locally linear.
//
// The power-control routines below it (fixed-point minimum power, max-min
// balancing feasibility, and its bisection) are the classical uplink tools
// the beamforming algorithms are built from.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "urllc/channel.hpp"

namespace urllc {

using Eigen::MatrixXd;

struct LinTerm {
  int idx;
  double coef;
};

// sum(terms) <= bound
struct LinearConstraint {
  std::vector<LinTerm> terms;
  double bound;
};

// (c + d'x)^2 - (e + f'x) <= 0; convex since the Hessian 2dd' is PSD.
struct QuadConstraint {
  double c;
  std::vector<LinTerm> d;
  double e;
  std::vector<LinTerm> f;
};

struct SmoothConvexProgram {
  int dim = 0;
  VectorXd lo, hi;  // finite box bounds, lo < hi elementwise
  std::vector<LinearConstraint> linear;
  std::vector<QuadConstraint> quad;
};

// Concave objective to maximize, with exact derivatives.
struct ObjectiveOracle {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> grad;
  std::function<MatrixXd(const VectorXd&)> hess;
};

enum class SolveStatus { optimal, max_iterations, infeasible };

struct SolverReport {
  VectorXd x;
  double objective = 0.0;
  int newton_iterations = 0;
  SolveStatus status = SolveStatus::infeasible;
  double kkt_residual = std::numeric_limits<double>::infinity();
};

struct IpmOptions {
  double t0 = 1.0;          // initial barrier weight
  double t_factor = 10.0;   // barrier growth per stage
  double gap_tol = 1e-9;    // stop when m / t falls below this
  double armijo = 0.25;     // sufficient-decrease fraction
  double backtrack = 0.5;   // step shrink factor
  int max_newton_per_stage = 200;
  double newton_tol = 1e-18;      // half squared Newton decrement
  std::ostream* trace = nullptr;  // one JSON line per barrier stage
};

inline SolverReport solve_ipm(const SmoothConvexProgram& prog,
                              const ObjectiveOracle& oracle, VectorXd x0,
                              const IpmOptions& opt = {});

namespace detail {

inline double lin_value(const std::vector<LinTerm>& terms, const VectorXd& x) {
  double v = 0.0;
  for (const auto& t : terms) v += t.coef * x[t.idx];
  return v;
}

// Values of every inequality g_i(x) <= 0, boxes included.
inline void constraint_values(const SmoothConvexProgram& prog, const VectorXd& x,
                              std::vector<double>& g) {
  g.clear();
  for (const auto& c : prog.linear) g.push_back(lin_value(c.terms, x) - c.bound);
  for (const auto& c : prog.quad) {
    const double u = c.c + lin_value(c.d, x);
    g.push_back(u * u - c.e - lin_value(c.f, x));
  }
  for (int i = 0; i < prog.dim; ++i) {
    g.push_back(prog.lo[i] - x[i]);
    g.push_back(x[i] - prog.hi[i]);
  }
}

inline bool strictly_feasible(const SmoothConvexProgram& prog, const VectorXd& x) {
  std::vector<double> g;
  constraint_values(prog, x, g);
  for (double v : g)
    if (!(v < 0.0)) return false;
  return true;
}

// Phase one: maximize -s subject to g_i(x) <= s over the original box.  The
// anchor (the box center) with s above its worst violation is strictly
// feasible for this program by construction, so the recursion terminates.
// A solution with s < 0 is a strictly interior point of the original set.
inline std::optional<VectorXd> phase_one(const SmoothConvexProgram& prog,
                                         const VectorXd& anchor) {
  std::vector<double> g;
  constraint_values(prog, anchor, g);
  double worst = 0.0;
  for (std::size_t i = 0; i < prog.linear.size() + prog.quad.size(); ++i)
    worst = std::max(worst, g[i]);
  const double s0 = worst + 1.0;

  SmoothConvexProgram aug;
  aug.dim = prog.dim + 1;
  aug.lo.resize(aug.dim);
  aug.hi.resize(aug.dim);
  aug.lo.head(prog.dim) = prog.lo;
  aug.hi.head(prog.dim) = prog.hi;
  aug.lo[prog.dim] = -(s0 + 10.0);
  aug.hi[prog.dim] = s0 + 10.0;
  aug.linear = prog.linear;
  for (auto& c : aug.linear) c.terms.push_back({prog.dim, -1.0});
  aug.quad = prog.quad;
  for (auto& c : aug.quad) c.f.push_back({prog.dim, 1.0});

  ObjectiveOracle slack;
  slack.value = [dim = prog.dim](const VectorXd& x) { return -x[dim]; };
  slack.grad = [dim = prog.dim](const VectorXd& x) {
    return (-VectorXd::Unit(x.size(), dim)).eval();
  };
  slack.hess = [](const VectorXd& x) {
    return MatrixXd::Zero(x.size(), x.size()).eval();
  };

  VectorXd start(aug.dim);
  start.head(prog.dim) = anchor;
  start[prog.dim] = s0;
  const SolverReport rep = solve_ipm(aug, slack, start, IpmOptions{});
  if (rep.x.size() == aug.dim && rep.x[prog.dim] < 0.0) {
    VectorXd x = rep.x.head(prog.dim);
    if (strictly_feasible(prog, x)) return x;
  }
  return std::nullopt;
}

}  // namespace detail

// Log-barrier interior-point maximization.  An x0 that is not strictly
// feasible is pulled toward the box center with an escalating blend factor
// (1e-6, 1e-5, ..., 1); if even the center violates a constraint the report
// comes back infeasible.  Status optimal is only claimed when the stationarity
// residual of the KKT system is below 1e-8.
inline SolverReport solve_ipm(const SmoothConvexProgram& prog,
                              const ObjectiveOracle& oracle, VectorXd x0,
                              const IpmOptions& opt) {
  if (prog.dim < 1) throw std::invalid_argument("solve_ipm: empty program");
  if (prog.lo.size() != prog.dim || prog.hi.size() != prog.dim)
    throw std::invalid_argument("solve_ipm: box bounds must match dim");
  for (int i = 0; i < prog.dim; ++i) {
    if (!std::isfinite(prog.lo[i]) || !std::isfinite(prog.hi[i]) ||
        !(prog.lo[i] < prog.hi[i]))
      throw std::invalid_argument("solve_ipm: every variable needs finite lo < hi");
  }

  SolverReport report;
  const VectorXd center = 0.5 * (prog.lo + prog.hi);
  if (x0.size() != prog.dim) x0 = center;
  if (!detail::strictly_feasible(prog, x0)) {
    // Blending toward the box center repairs box violations cheaply; when a
    // linear or quadratic constraint still blocks, fall back to phase one.
    double tau = 1e-6;
    while (tau <= 1.0 && !detail::strictly_feasible(prog, x0))
      x0 += tau * (center - x0), tau *= 10.0;
    if (!detail::strictly_feasible(prog, x0)) {
      const auto interior = detail::phase_one(prog, center);
      if (!interior) {
        report.status = SolveStatus::infeasible;
        return report;
      }
      x0 = *interior;
    }
  }

  const int m = static_cast<int>(prog.linear.size() + prog.quad.size()) +
                2 * prog.dim;
  VectorXd x = x0;
  std::vector<double> g;

  // Barrier potential: t f(x) + sum ln(-g_i); -inf outside the domain.
  auto potential = [&](const VectorXd& xx, double t) {
    detail::constraint_values(prog, xx, g);
    double phi = t * oracle.value(xx);
    for (double v : g) {
      if (!(v < 0.0)) return -std::numeric_limits<double>::infinity();
      phi += std::log(-v);
    }
    return phi;
  };

  double t = opt.t0;
  bool ridge_failure = false;
  for (;;) {
    // Centering: damped Newton on the barrier potential.  A line search that
    // cannot verify progress (potential differences drown in rounding once
    // t * f is large) ends the stage; the final KKT residual is the judge of
    // whether centering actually succeeded.
    bool stage_done = false;
    int iter = 0;
    double prev_decrement = std::numeric_limits<double>::infinity();
    for (; iter < opt.max_newton_per_stage && !stage_done; ++iter) {
      VectorXd grad = t * oracle.grad(x);
      MatrixXd hess = t * oracle.hess(x);

      for (const auto& c : prog.linear) {
        const double gv = detail::lin_value(c.terms, x) - c.bound;
        // d/dx ln(-g) = grad_g / g ; d2 = -outer(grad_g)/g^2 for linear g.
        for (const auto& a : c.terms) {
          grad[a.idx] += a.coef / gv;
          for (const auto& b : c.terms)
            hess(a.idx, b.idx) -= a.coef * b.coef / (gv * gv);
        }
      }
      for (const auto& c : prog.quad) {
        const double u = c.c + detail::lin_value(c.d, x);
        const double gv = u * u - c.e - detail::lin_value(c.f, x);
        // grad_g = 2u d - f (sparse union), hess_g = 2 dd'.
        std::vector<LinTerm> gg;
        gg.reserve(c.d.size() + c.f.size());
        for (const auto& a : c.d) gg.push_back({a.idx, 2.0 * u * a.coef});
        for (const auto& a : c.f) gg.push_back({a.idx, -a.coef});
        for (const auto& a : gg) {
          grad[a.idx] += a.coef / gv;
          for (const auto& b : gg)
            hess(a.idx, b.idx) -= a.coef * b.coef / (gv * gv);
        }
        for (const auto& a : c.d)
          for (const auto& b : c.d)
            hess(a.idx, b.idx) += 2.0 * a.coef * b.coef / gv;  // gv < 0
      }
      for (int i = 0; i < prog.dim; ++i) {
        const double glo = prog.lo[i] - x[i];
        const double ghi = x[i] - prog.hi[i];
        grad[i] += -1.0 / glo + 1.0 / ghi;
        hess(i, i) -= 1.0 / (glo * glo) + 1.0 / (ghi * ghi);
      }

      // Solve (-hess) dx = grad; the barrier makes -hess PD, but guard with
      // an escalating ridge against near-singular Hessians.
      VectorXd dx;
      double ridge = 0.0;
      for (;;) {
        Eigen::LDLT<MatrixXd> ldlt(
            (-hess + ridge * MatrixXd::Identity(prog.dim, prog.dim)).eval());
        dx = ldlt.solve(grad);
        if (ldlt.info() == Eigen::Success && dx.allFinite()) break;
        ridge = ridge == 0.0 ? 1e-12 : ridge * 100.0;
        if (ridge > 1.0) {
          ridge_failure = true;
          break;
        }
      }
      if (ridge_failure) break;

      const double decrement = grad.dot(dx);  // squared Newton decrement
      if (!(decrement > 0.0) || 0.5 * decrement < opt.newton_tol) break;

      double step = 1.0;
      if (decrement > 0.1) {
        // Damped phase: Armijo backtracking on the barrier potential.
        const double phi0 = potential(x, t);
        while (potential(x + step * dx, t) <
               phi0 + opt.armijo * step * decrement) {
          step *= opt.backtrack;
          if (step < 1e-16) {
            stage_done = true;
            break;
          }
        }
      } else {
        // Quadratic phase: the potential difference of a near-converged step
        // drowns in rounding once t * f is large, while self-concordance
        // guarantees full Newton steps converge.  Take them, retreating only
        // if a step would exit the domain, and stop at the rounding floor.
        if (decrement >= prev_decrement) break;
        while (!std::isfinite(potential(x + step * dx, t))) {
          step *= opt.backtrack;
          if (step < 1e-16) {
            stage_done = true;
            break;
          }
        }
      }
      if (stage_done) break;
      x += step * dx;
      prev_decrement = decrement;
    }

    report.newton_iterations += iter;
    if (opt.trace) {
      *opt.trace << "{\"t\":" << t << ",\"newton\":" << iter
                 << ",\"objective\":" << oracle.value(x)
                 << ",\"gap\":" << m / t << "}\n";
    }
    if (ridge_failure || m / t < opt.gap_tol) break;
    t *= opt.t_factor;
  }

  // Stationarity residual.  The barrier estimate lambda_i = -1/(t g_i) only
  // classifies which constraints are active: at the final t an active slack
  // is ~1e-10, so that estimate is ulp-limited and cannot certify 1e-8
  // stationarity.  Instead fit nonnegative multipliers on the near-active
  // gradients by least squares (complementarity already holds to 1/t).
  detail::constraint_values(prog, x, g);
  std::vector<VectorXd> grads;
  grads.reserve(g.size());
  for (const auto& c : prog.linear) {
    VectorXd gg = VectorXd::Zero(prog.dim);
    for (const auto& a : c.terms) gg[a.idx] += a.coef;
    grads.push_back(std::move(gg));
  }
  for (const auto& c : prog.quad) {
    const double u = c.c + detail::lin_value(c.d, x);
    VectorXd gg = VectorXd::Zero(prog.dim);
    for (const auto& a : c.d) gg[a.idx] += 2.0 * u * a.coef;
    for (const auto& a : c.f) gg[a.idx] -= a.coef;
    grads.push_back(std::move(gg));
  }
  for (int i = 0; i < prog.dim; ++i) {
    grads.push_back((-VectorXd::Unit(prog.dim, i)).eval());
    grads.push_back(VectorXd::Unit(prog.dim, i));
  }
  std::vector<double> lam_hat(g.size());
  double lam_max = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    lam_hat[i] = -1.0 / (t * g[i]);
    lam_max = std::max(lam_max, lam_hat[i]);
  }
  std::vector<int> act;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (lam_hat[i] >= 1e-6 * lam_max) act.push_back(static_cast<int>(i));

  const VectorXd grad_f = oracle.grad(x);
  VectorXd resid = grad_f;
  while (!act.empty()) {
    MatrixXd a_mat(prog.dim, act.size());
    for (std::size_t j = 0; j < act.size(); ++j) a_mat.col(j) = grads[act[j]];
    const VectorXd lam = a_mat.colPivHouseholderQr().solve(grad_f);
    int worst = -1;
    double most_negative = -1e-12;
    for (int j = 0; j < lam.size(); ++j)
      if (lam[j] < most_negative) most_negative = lam[j], worst = j;
    if (worst < 0) {
      resid = grad_f - a_mat * lam;
      break;
    }
    act.erase(act.begin() + worst);  // enforce dual feasibility
  }

  report.x = x;
  report.objective = oracle.value(x);
  report.kkt_residual = resid.cwiseAbs().maxCoeff();
  report.status = report.kkt_residual < 1e-8 ? SolveStatus::optimal
                                             : SolveStatus::max_iterations;
  return report;
}

// --- Classical power control -------------------------------------------

struct MinPowerResult {
  MatrixXcd w;  // MMSE receive filters at the fixed point
  VectorXd q;   // uplink powers meeting the target with equality
  int iterations = 0;
};

// Joint power/filter fixed point: alternate MMSE filters with the target-SINR
// power update q_k <- q_k * target / sinr_k.  Standard interference-function
// iteration: converges to the componentwise-minimal power when the target is
// jointly feasible, diverges otherwise (caught by the power cap).
inline MinPowerResult min_power_fixed_point(const ChannelSet& ch, double target,
                                            double p_max, double tol = 1e-10,
                                            int max_iter = 10000) {
  if (!(target > 0.0))
    throw std::invalid_argument("min_power_fixed_point: target must be > 0");
  MinPowerResult res;
  res.q.resize(ch.k_users);
  for (int k = 0; k < ch.k_users; ++k)
    res.q[k] = target / ch.h_bar.col(k).squaredNorm();  // single-user floor
  for (int it = 0; it < max_iter; ++it) {
    res.w = mmse_beamformers(ch, res.q);
    const VectorXd sinr = uplink_sinr(ch, res.w, res.q);
    double delta = 0.0;
    for (int k = 0; k < ch.k_users; ++k) {
      const double next = res.q[k] * target / sinr[k];
      delta = std::max(delta, std::abs(next - res.q[k]) / next);
      res.q[k] = next;
    }
    if (res.q.sum() > 1e6 * p_max)
      throw std::runtime_error(
          "min_power_fixed_point: SINR target jointly infeasible");
    if (delta < tol) {
      res.iterations = it + 1;
      res.w = mmse_beamformers(ch, res.q);
      return res;
    }
  }
  throw std::runtime_error("min_power_fixed_point: no convergence");
}

// Can fixed filters w balance every uplink SINR at mu within the power
// budget?  The update starts from zero and is monotone nondecreasing, so the
// first iterate whose total exceeds p_max certifies infeasibility.
inline std::optional<VectorXd> maxmin_feasible(const ChannelSet& ch,
                                               const MatrixXcd& w, double mu,
                                               double p_max, double tol = 1e-12,
                                               int max_iter = 20000) {
  const Eigen::MatrixXd g = detail::cross_gains(ch, w);
  VectorXd q = VectorXd::Zero(ch.k_users);
  for (int it = 0; it < max_iter; ++it) {
    double delta = 0.0, total = 0.0;
    for (int k = 0; k < ch.k_users; ++k) {
      double interference = 1.0;
      for (int l = 0; l < ch.k_users; ++l)
        if (l != k) interference += q[l] * g(l, k);
      const double next = mu * interference / g(k, k);
      delta = std::max(delta, std::abs(next - q[k]) / next);
      q[k] = next;
      total += next;
    }
    if (total > p_max) return std::nullopt;
    if (delta < tol) return q;
  }
  return std::nullopt;  // not converged within the cap: treat as infeasible
}

struct MaxMinResult {
  double mu = 0.0;
  VectorXd q;
};

// Largest balanced uplink SINR achievable with filters w and total power
// p_max, located by bisection on [lo, hi] to relative tolerance rel_tol.
// Returns nullopt when even lo cannot be balanced within budget.
inline std::optional<MaxMinResult> bisect_maxmin(const ChannelSet& ch,
                                                 const MatrixXcd& w,
                                                 double p_max, double lo,
                                                 double hi,
                                                 double rel_tol = 1e-8) {
  if (!(lo > 0.0) || !(hi >= lo))
    throw std::invalid_argument("bisect_maxmin: need 0 < lo <= hi");
  if (auto q = maxmin_feasible(ch, w, hi, p_max)) return MaxMinResult{hi, *q};
  auto q_lo = maxmin_feasible(ch, w, lo, p_max);
  if (!q_lo) return std::nullopt;
  while (hi - lo > rel_tol * lo) {
    const double mid = 0.5 * (lo + hi);
    if (auto q = maxmin_feasible(ch, w, mid, p_max)) {
      lo = mid;
      q_lo = std::move(q);
    } else {
      hi = mid;
    }
  }
  return MaxMinResult{lo, *q_lo};
}

}  // namespace urllc
