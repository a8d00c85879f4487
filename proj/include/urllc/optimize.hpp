#pragma once

// Beamforming design by successive convex approximation (SCA).
//
// Each algorithm alternates two levels.  The outer level fixes unit-norm
// receive filters for the virtual uplink (MMSE at the current powers) and
// the inner level maximizes a concave surrogate of the short-packet rate
// over uplink powers q and per-user SINR proxies.  The surrogate splits the
// SINR into a lower proxy phi (used by the rate term) and an upper proxy
// phi_hat (feeding the dispersion penalty through psi and theta), couples
// them to q through McCormick envelopes of the bilinear products, and
// linearizes the two nonconvex dispersion links at the previous iterate.
// Every lower proxy remains a true bound: any feasible subproblem point
// satisfies phi_k <= uplink SINR_k <= phi_hat_k exactly, so quality-of-
// service floors survive the relaxation, and relinearizing at the previous
// solution keeps it feasible, making the surrogate value nondecreasing.
//
// The final step moves the converged uplink targets to the downlink through
// the exact power transfer, so reported SINRs hit the proxies exactly.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "urllc/channel.hpp"
#include "urllc/rate.hpp"
#include "urllc/solver.hpp"

namespace urllc {

struct SolveOptions {
  VectorXd alpha;          // rate weights; empty means 1/K each
  double eps_conv = 1e-4;  // relative convergence tolerance at every level
  int max_inner = 50;      // SCA rounds per filter update
  int max_outer = 30;      // filter updates (and Dinkelbach rounds)
  PowerModel power;        // consumption model for energy efficiency
  std::vector<double>* varsigma_trace = nullptr;  // surrogate per SCA round
  std::vector<double>* lambda_trace = nullptr;    // Dinkelbach ratio sequence
  std::vector<double>* mu_trace = nullptr;        // balanced SINR sequence
};

namespace detail {

// Box top for the dispersion proxy.  Halfway between its largest meaningful
// value and 1 on purpose: a cap at exactly V(gamma_cap) coincides with where
// the linearized dispersion link pushes psi while the proxies saturate, and
// a warm start pinned in that corner has barrier slacks at rounding level.
// The headroom keeps converged iterates strictly interior and bounds the
// next tangent's 1/(1-psi_t) away from overflow; theta >= mu(psi) already
// prices any psi inflation, so no looseness leaks into the design.
inline double psi_box_top(double gamma_cap) {
  return 0.5 * (1.0 + dispersion(gamma_cap));
}

// Flat variable layout: q | phi | psi | phi_hat | theta | a pairs | b pairs.
struct ScaLayout {
  int k;
  int dim() const { return 5 * k + 2 * k * (k - 1); }
  int q(int i) const { return i; }
  int phi(int i) const { return k + i; }
  int psi(int i) const { return 2 * k + i; }
  int phi_hat(int i) const { return 3 * k + i; }
  int theta(int i) const { return 4 * k + i; }
  int pair(int kk, int l) const { return kk * (k - 1) + (l < kk ? l : l - 1); }
  int a(int kk, int l) const { return 5 * k + pair(kk, l); }
  int b(int kk, int l) const { return 5 * k + k * (k - 1) + pair(kk, l); }
};

}  // namespace detail

// One SCA iterate plus the instance constants the envelopes are built from.
struct ScaState {
  VectorXd q;        // uplink powers
  VectorXd phi;      // lower SINR proxies (rate side)
  VectorXd psi;      // dispersion proxies, >= V(phi_hat)
  VectorXd phi_hat;  // upper SINR proxies (dispersion side)
  VectorXd theta;    // sqrt-dispersion proxies, >= sqrt(psi)
  Eigen::MatrixXd a;  // product proxies a(k,l) ~ q_l * phi_k, diagonal unused
  Eigen::MatrixXd b;  // product proxies b(k,l) ~ q_l * phi_hat_k
  VectorXd gamma_tilde;  // per-user SINR ceilings p_max * |h_bar_k|^2
  VectorXd q_tilde;      // minimum powers meeting the SINR floor

  VectorXd flatten() const {
    const detail::ScaLayout lay{static_cast<int>(q.size())};
    VectorXd x(lay.dim());
    for (int k = 0; k < lay.k; ++k) {
      x[lay.q(k)] = q[k];
      x[lay.phi(k)] = phi[k];
      x[lay.psi(k)] = psi[k];
      x[lay.phi_hat(k)] = phi_hat[k];
      x[lay.theta(k)] = theta[k];
      for (int l = 0; l < lay.k; ++l) {
        if (l == k) continue;
        x[lay.a(k, l)] = a(k, l);
        x[lay.b(k, l)] = b(k, l);
      }
    }
    return x;
  }

  static ScaState unflatten(const VectorXd& x, const ScaState& like) {
    ScaState s = like;
    const detail::ScaLayout lay{static_cast<int>(like.q.size())};
    for (int k = 0; k < lay.k; ++k) {
      s.q[k] = x[lay.q(k)];
      s.phi[k] = x[lay.phi(k)];
      s.psi[k] = x[lay.psi(k)];
      s.phi_hat[k] = x[lay.phi_hat(k)];
      s.theta[k] = x[lay.theta(k)];
      for (int l = 0; l < lay.k; ++l) {
        if (l == k) continue;
        s.a(k, l) = x[lay.a(k, l)];
        s.b(k, l) = x[lay.b(k, l)];
      }
    }
    return s;
  }
};

struct InitResult {
  MatrixXcd w;        // MMSE filters at the minimum-power point
  VectorXd p0;        // downlink powers meeting the floor exactly
  VectorXd q_tilde;   // uplink minimum powers
  bool feasible = false;
  double power_deficit = 0.0;  // how far the floor overshoots the budget
};

// Smallest power meeting the SINR floor for every user; the instance is
// feasible when that fits the budget.  The uplink fixed point doubles as the
// lower corner of the McCormick boxes.
inline InitResult initialize(const ChannelSet& ch, const RateRegime& regime,
                             double p_max) {
  InitResult res;
  try {
    auto mp = min_power_fixed_point(ch, regime.nu3, p_max);
    res.w = std::move(mp.w);
    res.q_tilde = std::move(mp.q);
    res.p0 = duality_transfer(ch, res.w,
                              VectorXd::Constant(ch.k_users, regime.nu3),
                              Direction::downlink);
  } catch (const std::runtime_error&) {
    res.feasible = false;
    res.power_deficit = std::numeric_limits<double>::infinity();
    return res;
  }
  res.feasible = res.p0.sum() <= p_max;
  res.power_deficit = std::max(0.0, res.p0.sum() - p_max);
  return res;
}

// Starting iterate: the minimum-power point with both proxies at the floor.
inline ScaState initial_sca_state(const ChannelSet& ch,
                                  const RateRegime& regime, double p_max,
                                  const VectorXd& q_tilde) {
  const int k_users = ch.k_users;
  ScaState s;
  s.q = q_tilde;
  s.phi = VectorXd::Constant(k_users, regime.nu3);
  s.phi_hat = s.phi;
  s.psi = VectorXd::Constant(k_users, dispersion(regime.nu3));
  s.theta = s.psi.cwiseSqrt();
  s.a.resize(k_users, k_users);
  s.b.resize(k_users, k_users);
  for (int k = 0; k < k_users; ++k)
    for (int l = 0; l < k_users; ++l) {
      s.a(k, l) = q_tilde[l] * regime.nu3;
      s.b(k, l) = s.a(k, l);
    }
  s.gamma_tilde.resize(k_users);
  for (int k = 0; k < k_users; ++k)
    s.gamma_tilde[k] = p_max * ch.h_bar.col(k).squaredNorm();
  s.q_tilde = q_tilde;
  return s;
}

// Surrogate objective at a state: weighted surrogate rates, minus the scaled
// consumed power when a Dinkelbach weight is active.
inline double surrogate_value(const ScaState& s, const RateRegime& regime,
                              const VectorXd& alpha, double lambda_ee,
                              const PowerModel& pm, int n_tx) {
  double v = 0.0;
  for (int k = 0; k < s.q.size(); ++k) {
    v += alpha[k] * std::log1p(s.phi[k]);
    if (!regime.shannon_mode) v -= alpha[k] * regime.vartheta * s.theta[k];
  }
  if (lambda_ee != 0.0)
    v -= lambda_ee * (pm.eta * s.q.sum() + n_tx * pm.p_c + pm.p_0);
  return v;
}

struct ScaSubproblem {
  SmoothConvexProgram prog;
  ObjectiveOracle objective;
};

// Builds the convex inner program at the linearization point `state`.
// Constraint families, per user k and interferer l != k:
//   rate side:   sum_l G(l,k) a_{k,l} + phi_k - G(k,k) q_k <= 0
//   dispersion:  G(k,k) q_k - sum_l G(l,k) b_{k,l} - phi_hat_k <= 0
//                (1 + phi_hat_k)^2 <= tangent of 1/(1-psi) at psi_t
//                tangent of sqrt(psi) at psi_t <= theta_k
//   envelopes:   four McCormick cuts tying a (and b) to q_l * proxy_k over
//                [q_tilde_l, p_max] x [nu3, gamma_tilde_k]
// plus the power budget and variable boxes.  In Shannon mode the dispersion
// machinery is inert: those variables stay boxed but unconstrained and the
// objective reduces to weighted log rates.
inline ScaSubproblem build_sca_subproblem(const ChannelSet& ch,
                                          const MatrixXcd& w,
                                          const ScaState& state,
                                          const RateRegime& regime,
                                          double p_max, const VectorXd& alpha,
                                          double lambda_ee = 0.0,
                                          const PowerModel& pm = {}) {
  const int k_users = ch.k_users;
  const detail::ScaLayout lay{k_users};
  const bool fb = !regime.shannon_mode;
  const double nu3 = regime.nu3;
  const Eigen::MatrixXd g = detail::cross_gains(ch, w);

  ScaSubproblem sub;
  SmoothConvexProgram& prog = sub.prog;
  prog.dim = lay.dim();
  prog.lo.resize(prog.dim);
  prog.hi.resize(prog.dim);

  for (int k = 0; k < k_users; ++k) {
    const double gt = state.gamma_tilde[k];
    if (!(gt > nu3 * (1.0 + 1e-12)))
      throw std::runtime_error(
          "build_sca_subproblem: SINR ceiling at or below the floor");
    prog.lo[lay.q(k)] = state.q_tilde[k];
    prog.hi[lay.q(k)] = p_max;
    prog.lo[lay.phi(k)] = nu3;
    prog.hi[lay.phi(k)] = gt;
    prog.lo[lay.phi_hat(k)] = nu3;
    prog.hi[lay.phi_hat(k)] = gt;
    prog.lo[lay.psi(k)] = dispersion(nu3);
    prog.hi[lay.psi(k)] = detail::psi_box_top(gt);
    const double psi_t = state.psi[k];
    const double mu_max = 0.5 * std::sqrt(psi_t) +
                          detail::psi_box_top(gt) / (2.0 * std::sqrt(psi_t));
    prog.lo[lay.theta(k)] = 0.0;
    prog.hi[lay.theta(k)] = 1.5 * std::max(1.0, mu_max) + 0.1;
    for (int l = 0; l < k_users; ++l) {
      if (l == k) continue;
      prog.lo[lay.a(k, l)] = 0.0;
      prog.hi[lay.a(k, l)] = p_max * gt + 1.0;
      prog.lo[lay.b(k, l)] = 0.0;
      prog.hi[lay.b(k, l)] = p_max * gt + 1.0;
    }
  }

  for (int k = 0; k < k_users; ++k) {
    const double gt = state.gamma_tilde[k];

    LinearConstraint rate_side;
    rate_side.terms.push_back({lay.phi(k), 1.0});
    rate_side.terms.push_back({lay.q(k), -g(k, k)});
    for (int l = 0; l < k_users; ++l)
      if (l != k) rate_side.terms.push_back({lay.a(k, l), g(l, k)});
    rate_side.bound = 0.0;
    prog.linear.push_back(std::move(rate_side));

    if (fb) {
      LinearConstraint disp_side;
      disp_side.terms.push_back({lay.q(k), g(k, k)});
      disp_side.terms.push_back({lay.phi_hat(k), -1.0});
      for (int l = 0; l < k_users; ++l)
        if (l != k) disp_side.terms.push_back({lay.b(k, l), -g(l, k)});
      disp_side.bound = 0.0;
      prog.linear.push_back(std::move(disp_side));

      // (1 + phi_hat)^2 <= T(psi), the tangent of 1/(1 - psi) at psi_t,
      // which underestimates it, keeping the true dispersion link enforced.
      const double psi_t = state.psi[k];
      const double denom = (1.0 - psi_t) * (1.0 - psi_t);
      QuadConstraint disp_link;
      disp_link.c = 1.0;
      disp_link.d = {{lay.phi_hat(k), 1.0}};
      disp_link.e = (1.0 - 2.0 * psi_t) / denom;
      disp_link.f = {{lay.psi(k), 1.0 / denom}};
      prog.quad.push_back(std::move(disp_link));

      // Tangent of sqrt(psi) at psi_t overestimates it: theta stays an
      // upper bound on the true penalty.
      const double root = std::sqrt(psi_t);
      LinearConstraint sqrt_link;
      sqrt_link.terms = {{lay.psi(k), 1.0 / (2.0 * root)}, {lay.theta(k), -1.0}};
      sqrt_link.bound = -0.5 * root;
      prog.linear.push_back(std::move(sqrt_link));
    }

    for (int l = 0; l < k_users; ++l) {
      if (l == k) continue;
      const double ql = state.q_tilde[l];
      const auto mccormick = [&](int prod, int proxy) {
        prog.linear.push_back(
            {{{lay.q(l), nu3}, {proxy, ql}, {prod, -1.0}}, nu3 * ql});
        prog.linear.push_back(
            {{{lay.q(l), gt}, {proxy, p_max}, {prod, -1.0}}, p_max * gt});
        prog.linear.push_back(
            {{{prod, 1.0}, {lay.q(l), -gt}, {proxy, -ql}}, -gt * ql});
        prog.linear.push_back(
            {{{prod, 1.0}, {proxy, -p_max}, {lay.q(l), -nu3}}, -p_max * nu3});
      };
      mccormick(lay.a(k, l), lay.phi(k));
      if (fb) mccormick(lay.b(k, l), lay.phi_hat(k));
    }
  }

  LinearConstraint budget;
  for (int l = 0; l < k_users; ++l) budget.terms.push_back({lay.q(l), 1.0});
  budget.bound = p_max;
  prog.linear.push_back(std::move(budget));

  const double vt = fb ? regime.vartheta : 0.0;
  const int n_tx = ch.n_tx;
  sub.objective.value = [lay, alpha, vt, lambda_ee, pm, n_tx](const VectorXd& x) {
    double v = 0.0;
    for (int k = 0; k < lay.k; ++k) {
      v += alpha[k] * std::log1p(x[lay.phi(k)]);
      if (vt != 0.0) v -= alpha[k] * vt * x[lay.theta(k)];
    }
    if (lambda_ee != 0.0) {
      double total = 0.0;
      for (int k = 0; k < lay.k; ++k) total += x[lay.q(k)];
      v -= lambda_ee * (pm.eta * total + n_tx * pm.p_c + pm.p_0);
    }
    return v;
  };
  sub.objective.grad = [lay, alpha, vt, lambda_ee, pm](const VectorXd& x) {
    VectorXd grad = VectorXd::Zero(x.size());
    for (int k = 0; k < lay.k; ++k) {
      grad[lay.phi(k)] = alpha[k] / (1.0 + x[lay.phi(k)]);
      if (vt != 0.0) grad[lay.theta(k)] = -alpha[k] * vt;
      if (lambda_ee != 0.0) grad[lay.q(k)] = -lambda_ee * pm.eta;
    }
    return grad;
  };
  sub.objective.hess = [lay, alpha](const VectorXd& x) {
    MatrixXd h = MatrixXd::Zero(x.size(), x.size());
    for (int k = 0; k < lay.k; ++k) {
      const double d = 1.0 + x[lay.phi(k)];
      h(lay.phi(k), lay.phi(k)) = -alpha[k] / (d * d);
    }
    return h;
  };
  return sub;
}

namespace detail {

// Strictly interior subproblem point assembled from first principles: powers
// slightly above the minimum-power corner, proxies strictly between the floor
// and the achieved SINRs, dispersion variables with room against their
// linearized links, and exact bilinear products (strictly inside the
// McCormick envelopes whenever (q, proxy) is strictly inside its box).
inline std::optional<VectorXd> interior_anchor(const ChannelSet& ch,
                                               const MatrixXcd& w,
                                               const ScaState& state,
                                               const RateRegime& regime,
                                               double p_max) {
  const int k_users = ch.k_users;
  const ScaLayout lay{k_users};
  const bool fb = !regime.shannon_mode;
  const double nu3 = regime.nu3;
  const double total_tilde = state.q_tilde.sum();
  if (!(total_tilde < p_max)) return std::nullopt;

  double rho = std::min(1e-2, 0.5 * (p_max - total_tilde) / total_tilde);
  for (int attempt = 0; attempt < 8 && rho > 0.0; ++attempt, rho *= 0.1) {
    const VectorXd q_int = state.q_tilde * (1.0 + rho);
    const VectorXd sinr = uplink_sinr(ch, w, q_int);
    bool ok = true;
    VectorXd x(lay.dim());
    for (int k = 0; k < k_users && ok; ++k) {
      const double gt = state.gamma_tilde[k];
      if (!(sinr[k] > nu3) || !(sinr[k] < gt)) {
        ok = false;
        break;
      }
      const double phi_int = 0.5 * (nu3 + sinr[k]);
      x[lay.q(k)] = q_int[k];
      x[lay.phi(k)] = phi_int;
      if (fb) {
        // Cap phi_hat so the linearized dispersion link still has room
        // inside the psi box; the cap exceeds the floor whenever the box is
        // nondegenerate, and shrinking rho pulls the SINR back toward it.
        const double psi_t = state.psi[k];
        const double denom = (1.0 - psi_t) * (1.0 - psi_t);
        const double psi_hi = psi_box_top(gt);
        const double t_at = (1.0 - 2.0 * psi_t + psi_hi) / denom;
        if (!(t_at > 0.0)) {
          ok = false;
          break;
        }
        const double cap = std::min(std::sqrt(t_at) - 1.0, gt * (1.0 - 1e-9));
        if (!(cap > sinr[k])) {
          ok = false;
          break;
        }
        const double hat_int = sinr[k] + 0.5 * (cap - sinr[k]);
        const double psi_eq = ((1.0 + hat_int) * (1.0 + hat_int)) * denom -
                              (1.0 - 2.0 * psi_t);
        if (!(psi_eq < psi_hi)) {
          ok = false;
          break;
        }
        const double psi_int =
            std::max(psi_eq, dispersion(nu3)) +
            0.25 * (psi_hi - std::max(psi_eq, dispersion(nu3)));
        const double theta_int =
            (0.5 * std::sqrt(psi_t) + psi_int / (2.0 * std::sqrt(psi_t))) *
            (1.0 + 1e-6);
        x[lay.phi_hat(k)] = hat_int;
        x[lay.psi(k)] = psi_int;
        x[lay.theta(k)] = theta_int;
      } else {
        x[lay.phi_hat(k)] = 0.5 * (nu3 + gt);
        x[lay.psi(k)] = 0.5 * (dispersion(nu3) + dispersion(gt));
        x[lay.theta(k)] = 0.5;
      }
    }
    if (!ok) continue;
    for (int k = 0; k < k_users; ++k)
      for (int l = 0; l < k_users; ++l) {
        if (l == k) continue;
        x[lay.a(k, l)] = x[lay.q(l)] * x[lay.phi(k)];
        x[lay.b(k, l)] = x[lay.q(l)] * x[lay.phi_hat(k)];
      }
    return x;
  }
  return std::nullopt;
}

struct InnerResult {
  ScaState state;
  double varsigma = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Inner SCA loop at fixed filters: rebuild the subproblem at the previous
// iterate, warm start from a blend of that iterate with a strictly interior
// anchor, and stop when the surrogate value settles.
inline InnerResult run_inner_sca(const ChannelSet& ch, const MatrixXcd& w,
                                 const ScaState& start,
                                 const RateRegime& regime, double p_max,
                                 const VectorXd& alpha, double lambda_ee,
                                 const SolveOptions& opts) {
  InnerResult res;
  res.state = start;
  double vs_prev = surrogate_value(start, regime, alpha, lambda_ee, opts.power,
                                   ch.n_tx);
  for (int r = 0; r < opts.max_inner; ++r) {
    auto sub = build_sca_subproblem(ch, w, res.state, regime, p_max, alpha,
                                    lambda_ee, opts.power);
    VectorXd x0 = res.state.flatten();
    if (const auto anchor = interior_anchor(ch, w, res.state, regime, p_max)) {
      // Always pull toward the interior anchor: a converged iterate sits on
      // active faces with rounding-level slack, and by convexity the blend
      // inherits at least tau times the anchor's clearance on every face.
      double tau = 1e-3;
      VectorXd blend = x0 + tau * (*anchor - x0);
      while (tau <= 1.0 && !strictly_feasible(sub.prog, blend)) {
        tau *= 10.0;
        blend += tau * (*anchor - blend);
      }
      x0 = strictly_feasible(sub.prog, blend) ? blend : *anchor;
    }
    const SolverReport rep = solve_ipm(sub.prog, sub.objective, x0);
    if (rep.status == SolveStatus::infeasible) break;
    // Relinearizing at the previous iterate keeps it feasible, so the exact
    // subproblem optimum cannot be lower; a decrease means the solver hit
    // its noise floor and the previous iterate is the one to keep.  The
    // first round is exempt: a filter update can leave the carried-over
    // iterate slightly infeasible, making the stale value incomparable.
    if (r > 0 && rep.objective < vs_prev) break;
    res.state = ScaState::unflatten(rep.x, res.state);
    res.iterations = r + 1;
    if (opts.varsigma_trace) opts.varsigma_trace->push_back(rep.objective);
    if (std::abs(rep.objective - vs_prev) <=
        opts.eps_conv * std::max(1.0, std::abs(vs_prev))) {
      vs_prev = rep.objective;
      res.converged = true;
      break;
    }
    vs_prev = rep.objective;
  }
  res.varsigma = vs_prev;
  return res;
}

inline VectorXd resolve_alpha(const SolveOptions& opts, int k_users) {
  if (opts.alpha.size() == 0)
    return VectorXd::Constant(k_users, 1.0 / k_users);
  if (opts.alpha.size() != k_users)
    throw std::invalid_argument("SolveOptions.alpha: size mismatch");
  return opts.alpha;
}

inline BeamSolution infeasible_solution(const ChannelSet& ch) {
  BeamSolution sol;
  sol.w = MatrixXcd::Zero(ch.n_tx, ch.k_users);
  sol.p = VectorXd::Zero(ch.k_users);
  sol.gamma = VectorXd::Zero(ch.k_users);
  sol.rates = VectorXd::Zero(ch.k_users);
  sol.objective = 0.0;
  sol.feasible = false;
  sol.status = "infeasible";
  return sol;
}

// Converged uplink targets -> downlink powers -> reported solution.
inline BeamSolution finish_from_targets(const ChannelSet& ch,
                                        const MatrixXcd& w,
                                        const VectorXd& targets,
                                        const RateRegime& regime) {
  const VectorXd p = duality_transfer(ch, w, targets, Direction::downlink);
  return evaluate(ch, w, p, regime);
}

// The McCormick envelopes under-estimate the bilinear products, so the
// converged lower proxies can sit slightly above what the powers deliver.
// The downlink design therefore targets the SINRs the uplink actually
// achieves: the transfer then conserves total power exactly and the
// reported rates are the true ones.
inline BeamSolution finish_from_powers(const ChannelSet& ch,
                                       const MatrixXcd& w, const VectorXd& q,
                                       const RateRegime& regime) {
  return finish_from_targets(ch, w, uplink_sinr(ch, w, q), regime);
}

}  // namespace detail

// Weighted sum-rate maximization under per-user rate floors and a total
// power budget.
inline BeamSolution srmax(const ChannelSet& ch, const RateRegime& regime,
                          double p_max, const SolveOptions& opts = {}) {
  const VectorXd alpha = detail::resolve_alpha(opts, ch.k_users);
  const InitResult init = initialize(ch, regime, p_max);
  if (!init.feasible) return detail::infeasible_solution(ch);

  MatrixXcd w = init.w;
  ScaState state = initial_sca_state(ch, regime, p_max, init.q_tilde);
  double xi_prev = surrogate_value(state, regime, alpha, 0.0, opts.power,
                                   ch.n_tx);
  int inner_total = 0;
  int outer = 0;
  bool converged = false;
  while (outer < opts.max_outer) {
    ++outer;
    const auto ir = detail::run_inner_sca(ch, w, state, regime, p_max, alpha,
                                          0.0, opts);
    state = ir.state;
    inner_total += ir.iterations;
    if (std::abs(ir.varsigma - xi_prev) <=
        opts.eps_conv * std::max(1.0, std::abs(xi_prev))) {
      converged = true;
      break;
    }
    xi_prev = ir.varsigma;
    w = mmse_beamformers(ch, state.q);
  }

  BeamSolution sol = detail::finish_from_powers(ch, w, state.q, regime);
  sol.objective = alpha.dot(sol.rates);
  sol.status = converged ? "optimal" : "max-iterations";
  sol.inner_iterations = inner_total;
  sol.outer_iterations = outer;
  return sol;
}

// Energy-efficiency maximization: Dinkelbach's method on the surrogate-rate
// to consumed-power ratio, with the SCA loop solving each parametrized
// subproblem and filter updates outermost.  The ratio never decreases.
inline BeamSolution eemax(const ChannelSet& ch, const RateRegime& regime,
                          double p_max, const SolveOptions& opts = {}) {
  const VectorXd alpha = detail::resolve_alpha(opts, ch.k_users);
  const InitResult init = initialize(ch, regime, p_max);
  if (!init.feasible) return detail::infeasible_solution(ch);

  MatrixXcd w = init.w;
  ScaState state = initial_sca_state(ch, regime, p_max, init.q_tilde);
  double lambda = 0.0;
  int inner_total = 0;
  int outer = 0;
  bool converged = false;
  while (outer < opts.max_outer) {
    ++outer;
    const double lambda_before = lambda;
    for (int m = 0; m < opts.max_outer; ++m) {
      const auto ir = detail::run_inner_sca(ch, w, state, regime, p_max,
                                            alpha, lambda, opts);
      state = ir.state;
      inner_total += ir.iterations;
      const double consumed = opts.power.eta * state.q.sum() +
                              ch.n_tx * opts.power.p_c + opts.power.p_0;
      double rate_bar = 0.0;
      for (int k = 0; k < ch.k_users; ++k) {
        rate_bar += alpha[k] * std::log1p(state.phi[k]);
        if (!regime.shannon_mode)
          rate_bar -= alpha[k] * regime.vartheta * state.theta[k];
      }
      const double f_val = rate_bar - lambda * consumed;
      lambda = rate_bar / consumed;
      if (opts.lambda_trace) opts.lambda_trace->push_back(lambda);
      if (std::abs(f_val) < opts.eps_conv) break;
    }
    if (std::abs(lambda - lambda_before) <=
        opts.eps_conv * std::max(1.0, std::abs(lambda_before))) {
      converged = true;
      break;
    }
    w = mmse_beamformers(ch, state.q);
  }

  BeamSolution sol = detail::finish_from_powers(ch, w, state.q, regime);
  const double consumed = opts.power.eta * sol.p.sum() +
                          ch.n_tx * opts.power.p_c + opts.power.p_0;
  sol.objective = alpha.dot(sol.rates) / consumed;
  sol.status = converged ? "optimal" : "max-iterations";
  sol.inner_iterations = inner_total;
  sol.outer_iterations = outer;
  return sol;
}

// Max-min rate: balance the uplink SINRs by bisection at fixed filters, then
// update the filters at the balancing powers.  The balanced level never
// decreases across updates, and the final power transfer equalizes the
// downlink SINRs at it exactly.
inline BeamSolution maxmin(const ChannelSet& ch, const RateRegime& regime,
                           double p_max, const SolveOptions& opts = {}) {
  const InitResult init = initialize(ch, regime, p_max);
  if (!init.feasible) return detail::infeasible_solution(ch);

  MatrixXcd w = init.w;
  double mu_prev = regime.nu3;
  double gamma_cap = std::numeric_limits<double>::infinity();
  for (int k = 0; k < ch.k_users; ++k)
    gamma_cap = std::min(gamma_cap, p_max * ch.h_bar.col(k).squaredNorm());

  int outer = 0;
  bool converged = false;
  while (outer < opts.max_outer) {
    ++outer;
    const auto res = bisect_maxmin(ch, w, p_max, std::max(regime.nu3, mu_prev),
                                   gamma_cap);
    if (!res) break;  // should not happen once initialized feasible
    if (opts.mu_trace) opts.mu_trace->push_back(res->mu);
    const bool settled = std::abs(res->mu - mu_prev) <=
                         opts.eps_conv * std::max(1.0, std::abs(mu_prev));
    mu_prev = res->mu;
    if (settled && outer > 1) {
      converged = true;
      break;
    }
    w = mmse_beamformers(ch, res->q);
  }

  BeamSolution sol = detail::finish_from_targets(
      ch, w, VectorXd::Constant(ch.k_users, mu_prev), regime);
  sol.objective = sol.rates.minCoeff();
  sol.status = converged ? "optimal" : "max-iterations";
  sol.outer_iterations = outer;
  return sol;
}

// Fixed zero-forcing beamformers with an even power split.  Rates below zero
// are clamped; the point is marked infeasible when any user misses the SINR
// floor (this baseline cannot steer power toward weak users).
inline BeamSolution zfbf_baseline(const ChannelSet& ch,
                                  const RateRegime& regime, double p_max) {
  MatrixXcd w;
  try {
    w = zf_beamformers(ch);
  } catch (const std::runtime_error&) {
    return detail::infeasible_solution(ch);
  }
  const VectorXd p = VectorXd::Constant(ch.k_users, p_max / ch.k_users);
  BeamSolution sol = evaluate(ch, w, p, regime, /*relu_clamp=*/true);
  sol.status = "baseline";
  return sol;
}

}  // namespace urllc
