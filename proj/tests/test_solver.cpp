// Unit tests for the interior-point solver and the classical power-control
// routines.  Quadratic programs are cross-checked against an exact active-set
// enumeration oracle; the log-rate programs against hand-derived optima.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "urllc/rate.hpp"
#include "urllc/rng.hpp"
#include "urllc/solver.hpp"

using Catch::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using urllc::IpmOptions;
using urllc::LinearConstraint;
using urllc::ObjectiveOracle;
using urllc::SmoothConvexProgram;
using urllc::SolveStatus;

namespace {

// Exact maximizer of -(x-z)'A(x-z)/2 under a'x <= b rows, found by
// enumerating candidate active sets and checking the KKT system directly.
// A is positive definite, so the first KKT-consistent candidate is optimal.
std::optional<VectorXd> active_set_oracle(const MatrixXd& a_mat,
                                          const VectorXd& z,
                                          const std::vector<VectorXd>& rows,
                                          const std::vector<double>& rhs) {
  const int dim = static_cast<int>(z.size());
  const int m = static_cast<int>(rows.size());
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> active;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) active.push_back(i);
    if (static_cast<int>(active.size()) > dim) continue;

    const int na = static_cast<int>(active.size());
    MatrixXd kkt = MatrixXd::Zero(dim + na, dim + na);
    VectorXd rhs_v(dim + na);
    kkt.topLeftCorner(dim, dim) = a_mat;
    rhs_v.head(dim) = a_mat * z;
    for (int j = 0; j < na; ++j) {
      kkt.block(0, dim + j, dim, 1) = rows[active[j]];
      kkt.block(dim + j, 0, 1, dim) = rows[active[j]].transpose();
      rhs_v[dim + j] = rhs[active[j]];
    }
    Eigen::FullPivLU<MatrixXd> lu(kkt);
    if (!lu.isInvertible()) continue;
    const VectorXd sol = lu.solve(rhs_v);
    const VectorXd x = sol.head(dim);
    bool ok = true;
    for (int j = 0; j < na && ok; ++j)
      ok = sol[dim + j] >= -1e-10;  // dual feasibility
    for (int i = 0; i < m && ok; ++i)
      ok = rows[i].dot(x) - rhs[i] <= 1e-10;  // primal feasibility
    if (ok) return x;
  }
  return std::nullopt;
}

ObjectiveOracle quadratic_objective(const MatrixXd& a_mat, const VectorXd& z) {
  ObjectiveOracle o;
  o.value = [a_mat, z](const VectorXd& x) {
    return -0.5 * (x - z).dot(a_mat * (x - z));
  };
  o.grad = [a_mat, z](const VectorXd& x) { return (-a_mat * (x - z)).eval(); };
  o.hess = [a_mat](const VectorXd&) { return (-a_mat).eval(); };
  return o;
}

ObjectiveOracle sum_log_objective() {
  ObjectiveOracle o;
  o.value = [](const VectorXd& x) {
    double v = 0.0;
    for (int i = 0; i < x.size(); ++i) v += std::log1p(x[i]);
    return v;
  };
  o.grad = [](const VectorXd& x) {
    VectorXd g(x.size());
    for (int i = 0; i < x.size(); ++i) g[i] = 1.0 / (1.0 + x[i]);
    return g;
  };
  o.hess = [](const VectorXd& x) {
    MatrixXd h = MatrixXd::Zero(x.size(), x.size());
    for (int i = 0; i < x.size(); ++i) h(i, i) = -1.0 / ((1.0 + x[i]) * (1.0 + x[i]));
    return h;
  };
  return o;
}

}  // namespace

TEST_CASE("single log objective saturates its rate cap") {
  SmoothConvexProgram prog;
  prog.dim = 1;
  prog.lo = VectorXd::Zero(1);
  prog.hi = VectorXd::Constant(1, 10.0);
  prog.linear.push_back({{{0, 1.0}}, 5.0});

  const auto rep = urllc::solve_ipm(prog, sum_log_objective(), VectorXd());
  REQUIRE(rep.status == SolveStatus::optimal);
  REQUIRE(rep.x[0] == Approx(5.0).margin(1e-6));
  REQUIRE(rep.objective == Approx(std::log(6.0)).margin(1e-8));
  REQUIRE(rep.kkt_residual < 1e-8);
}

TEST_CASE("sum of logs splits a power budget evenly") {
  SmoothConvexProgram prog;
  prog.dim = 3;
  prog.lo = VectorXd::Zero(3);
  prog.hi = VectorXd::Constant(3, 3.0);
  prog.linear.push_back({{{0, 1.0}, {1, 1.0}, {2, 1.0}}, 3.0});

  const auto rep = urllc::solve_ipm(prog, sum_log_objective(), VectorXd());
  REQUIRE(rep.status == SolveStatus::optimal);
  for (int i = 0; i < 3; ++i) REQUIRE(rep.x[i] == Approx(1.0).margin(1e-6));
}

TEST_CASE("quadratic constraint binds at the hand-solved corner") {
  // max x + y subject to x^2 <= y <= 4: optimum (2, 4), value 6.
  SmoothConvexProgram prog;
  prog.dim = 2;
  prog.lo = VectorXd::Zero(2);
  prog.hi = (VectorXd(2) << 3.0, 4.0).finished();
  prog.quad.push_back({0.0, {{0, 1.0}}, 0.0, {{1, 1.0}}});

  ObjectiveOracle o;
  o.value = [](const VectorXd& x) { return x[0] + x[1]; };
  o.grad = [](const VectorXd& x) { return VectorXd::Ones(x.size()).eval(); };
  o.hess = [](const VectorXd& x) {
    return MatrixXd::Zero(x.size(), x.size()).eval();
  };
  const auto rep = urllc::solve_ipm(prog, o, VectorXd());
  REQUIRE(rep.status == SolveStatus::optimal);
  REQUIRE(rep.x[0] == Approx(2.0).margin(1e-6));
  REQUIRE(rep.x[1] == Approx(4.0).margin(1e-6));
  REQUIRE(rep.objective == Approx(6.0).margin(1e-7));
}

TEST_CASE("random quadratic programs match the active-set oracle") {
  urllc::Rng rng(314, 0);
  for (int dim = 2; dim <= 4; ++dim) {
    for (int inst = 0; inst < 10; ++inst) {
      MatrixXd b(dim, dim);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) b(i, j) = rng.normal();
      const MatrixXd a_mat = b.transpose() * b + 0.5 * MatrixXd::Identity(dim, dim);
      VectorXd z(dim);
      for (int i = 0; i < dim; ++i) z[i] = rng.uniform(-1.0, 3.0);

      SmoothConvexProgram prog;
      prog.dim = dim;
      prog.lo = VectorXd::Zero(dim);
      prog.hi = VectorXd::Constant(dim, 2.0);
      const VectorXd box_center = VectorXd::Constant(dim, 1.0);

      std::vector<VectorXd> rows;
      std::vector<double> rhs;
      const int nlin = 1 + inst % 3;
      for (int c = 0; c < nlin; ++c) {
        VectorXd a(dim);
        LinearConstraint lc;
        for (int i = 0; i < dim; ++i) {
          a[i] = rng.normal();
          lc.terms.push_back({i, a[i]});
        }
        lc.bound = a.dot(box_center) + rng.uniform(0.1, 1.5);
        prog.linear.push_back(lc);
        rows.push_back(a);
        rhs.push_back(lc.bound);
      }
      // Fold box faces into the oracle's constraint list.
      for (int i = 0; i < dim; ++i) {
        rows.push_back(-VectorXd::Unit(dim, i));
        rhs.push_back(0.0);
        rows.push_back(VectorXd::Unit(dim, i));
        rhs.push_back(2.0);
      }

      const auto expect = active_set_oracle(a_mat, z, rows, rhs);
      REQUIRE(expect.has_value());
      const auto rep = urllc::solve_ipm(prog, quadratic_objective(a_mat, z), VectorXd());
      REQUIRE(rep.status == SolveStatus::optimal);
      REQUIRE((rep.x - *expect).cwiseAbs().maxCoeff() < 1e-4);
      const auto obj = quadratic_objective(a_mat, z);
      REQUIRE(rep.objective == Approx(obj.value(*expect)).margin(1e-6));
    }
  }
}

TEST_CASE("interiorization and infeasibility handling") {
  SmoothConvexProgram prog;
  prog.dim = 2;
  prog.lo = VectorXd::Zero(2);
  prog.hi = VectorXd::Constant(2, 2.0);

  // Start far outside the box: the solver pulls toward the center and
  // still reaches the interior optimum.
  const MatrixXd a_mat = MatrixXd::Identity(2, 2);
  const VectorXd z = VectorXd::Constant(2, 0.75);
  VectorXd bad_start = VectorXd::Constant(2, 100.0);
  const auto rep = urllc::solve_ipm(prog, quadratic_objective(a_mat, z), bad_start);
  REQUIRE(rep.status == SolveStatus::optimal);
  REQUIRE((rep.x - z).cwiseAbs().maxCoeff() < 1e-6);

  // x + y <= -1 excludes the whole box.
  prog.linear.push_back({{{0, 1.0}, {1, 1.0}}, -1.0});
  const auto bad = urllc::solve_ipm(prog, quadratic_objective(a_mat, z), VectorXd());
  REQUIRE(bad.status == SolveStatus::infeasible);

  SmoothConvexProgram malformed;
  malformed.dim = 2;
  malformed.lo = VectorXd::Zero(2);
  malformed.hi = VectorXd::Zero(1);
  REQUIRE_THROWS_AS(urllc::solve_ipm(malformed, quadratic_objective(a_mat, z), VectorXd()),
                    std::invalid_argument);
}

TEST_CASE("barrier trace shows monotone objective and closing gap") {
  SmoothConvexProgram prog;
  prog.dim = 3;
  prog.lo = VectorXd::Zero(3);
  prog.hi = VectorXd::Constant(3, 3.0);
  prog.linear.push_back({{{0, 1.0}, {1, 1.0}, {2, 1.0}}, 3.0});

  std::ostringstream trace;
  IpmOptions opt;
  opt.trace = &trace;
  const auto rep = urllc::solve_ipm(prog, sum_log_objective(), VectorXd(), opt);
  REQUIRE(rep.status == SolveStatus::optimal);

  std::istringstream lines(trace.str());
  std::string line;
  double prev = -1e300, gap = 1e300;
  int stages = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    const double obj = j.at("objective").get<double>();
    REQUIRE(obj >= prev - 1e-9);  // central path objective is nondecreasing
    prev = obj;
    gap = j.at("gap").get<double>();
    ++stages;
  }
  REQUIRE(stages >= 10);
  REQUIRE(gap < 1e-9);
}

TEST_CASE("minimum-power fixed point closed forms") {
  const auto regime = urllc::make_regime(1e-5, 128, 256);

  // Single user: q = target / |h|^2 and the MMSE filter is the matched filter.
  urllc::ChannelSet ch;
  ch.k_users = 1;
  ch.n_tx = 2;
  ch.d = {50.0};
  ch.rho = {1.0};
  ch.sigma2 = {1.0};
  ch.h.resize(2, 1);
  ch.h(0, 0) = std::complex<double>(1.0, 1.0);
  ch.h(1, 0) = std::complex<double>(1.0, 0.0);
  ch.h_bar = ch.h;
  const auto res = urllc::min_power_fixed_point(ch, regime.nu3, 100.0);
  REQUIRE(res.q[0] == Approx(regime.nu3 / 3.0).epsilon(1e-10));
  REQUIRE(urllc::uplink_sinr(ch, res.w, res.q)[0] == Approx(regime.nu3).epsilon(1e-9));

  // Orthonormal channels decouple: q_k = target exactly.
  urllc::ChannelSet orth;
  orth.k_users = 3;
  orth.n_tx = 3;
  orth.d.assign(3, 50.0);
  orth.rho.assign(3, 1.0);
  orth.sigma2.assign(3, 1.0);
  orth.h = Eigen::MatrixXcd::Identity(3, 3);
  orth.h_bar = orth.h;
  const auto ores = urllc::min_power_fixed_point(orth, regime.nu3, 100.0);
  for (int k = 0; k < 3; ++k)
    REQUIRE(ores.q[k] == Approx(regime.nu3).epsilon(1e-10));
}

TEST_CASE("minimum-power fixed point on random channels") {
  const urllc::GeometryConfig geom;
  const double target = 2.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int k_users = 2 + trial % 5;
    const auto ch = urllc::sample_channels(geom, k_users, k_users + 2, 404, trial);
    const auto res = urllc::min_power_fixed_point(ch, target, 1e4);
    const VectorXd sinr = urllc::uplink_sinr(ch, res.w, res.q);
    for (int k = 0; k < k_users; ++k)
      REQUIRE(sinr[k] == Approx(target).epsilon(1e-8));

    // Zero-forcing filters need at least as much total power for the same
    // targets; the fixed point is the joint minimum.
    const auto w_zf = urllc::zf_beamformers(ch);
    double zf_total = 0.0;
    for (int k = 0; k < k_users; ++k) {
      const double gain = std::norm(ch.h_bar.col(k).dot(w_zf.col(k)));
      zf_total += target / gain;
    }
    REQUIRE(res.q.sum() <= zf_total * (1.0 + 1e-9));
  }
}

TEST_CASE("minimum-power fixed point rejects infeasible targets") {
  urllc::ChannelSet ch;
  ch.k_users = 2;
  ch.n_tx = 2;
  ch.d.assign(2, 50.0);
  ch.rho.assign(2, 1.0);
  ch.sigma2.assign(2, 1.0);
  ch.h.resize(2, 2);
  ch.h.col(0) << std::complex<double>(1.0, 0.0), std::complex<double>(0.5, 0.5);
  ch.h.col(1) = ch.h.col(0);  // identical users: balanced SINR < 1
  ch.h_bar = ch.h;
  REQUIRE_THROWS_AS(urllc::min_power_fixed_point(ch, 2.0, 10.0), std::runtime_error);
  REQUIRE_THROWS_AS(urllc::min_power_fixed_point(ch, -1.0, 10.0), std::invalid_argument);
}

TEST_CASE("max-min bisection brackets the balanced optimum") {
  const urllc::GeometryConfig geom;
  const double p_max = 10.0;
  for (int trial = 0; trial < 6; ++trial) {
    const int k_users = 2 + trial % 4;
    const auto ch = urllc::sample_channels(geom, k_users, k_users + 3, 808, trial);
    const auto w = urllc::mmse_beamformers(ch, VectorXd::Ones(k_users));
    double hi = 1e300;
    for (int k = 0; k < k_users; ++k)
      hi = std::min(hi, p_max * ch.h_bar.col(k).squaredNorm());

    const auto res = urllc::bisect_maxmin(ch, w, p_max, 1e-6, hi);
    REQUIRE(res.has_value());
    REQUIRE(res->q.sum() <= p_max * (1.0 + 1e-12));
    const VectorXd sinr = urllc::uplink_sinr(ch, w, res->q);
    for (int k = 0; k < k_users; ++k)
      REQUIRE(sinr[k] == Approx(res->mu).epsilon(1e-8));

    // 1e-5 above the returned level must be infeasible (tolerance is 1e-8).
    REQUIRE_FALSE(urllc::maxmin_feasible(ch, w, res->mu * (1.0 + 1e-5), p_max).has_value());
  }
}

TEST_CASE("max-min bisection boundary cases") {
  // Single user on a unit channel: every quantity is exact in floating
  // point, so the top of the bracket is itself feasible at q = p_max and
  // the shortcut returns it without bisecting.
  urllc::ChannelSet ch;
  ch.k_users = 1;
  ch.n_tx = 2;
  ch.d = {50.0};
  ch.rho = {1.0};
  ch.sigma2 = {1.0};
  ch.h = Eigen::MatrixXcd::Zero(2, 1);
  ch.h(0, 0) = 1.0;
  ch.h_bar = ch.h;
  const auto w = urllc::mmse_beamformers(ch, VectorXd::Ones(1));
  const double p_max = 5.0;
  const double hi = p_max;  // p_max * |h|^2 with |h|^2 = 1
  const auto res = urllc::bisect_maxmin(ch, w, p_max, hi * 0.5, hi);
  REQUIRE(res.has_value());
  REQUIRE(res->mu == hi);
  REQUIRE(res->q[0] == p_max);

  // A floor above the budgeted optimum yields no bracket at all.
  const auto none = urllc::bisect_maxmin(ch, w, p_max, hi * 1.01, hi * 1.02);
  REQUIRE_FALSE(none.has_value());

  // On sampled channels the boundary is only reachable to bisection
  // tolerance, but the result must land within it.
  const urllc::GeometryConfig geom;
  const auto rch = urllc::sample_channels(geom, 1, 4, 909, 0);
  const auto rw = urllc::mmse_beamformers(rch, VectorXd::Ones(1));
  const double rhi = p_max * rch.h_bar.col(0).squaredNorm();
  const auto rres = urllc::bisect_maxmin(rch, rw, p_max, rhi * 0.5, rhi);
  REQUIRE(rres.has_value());
  REQUIRE(rres->mu == Approx(rhi).epsilon(1e-7));
  REQUIRE(rres->q[0] == Approx(p_max).epsilon(1e-7));

  REQUIRE_THROWS_AS(urllc::bisect_maxmin(ch, w, p_max, -1.0, 1.0), std::invalid_argument);
}
