// Unit tests for the MISO system model: deterministic channel sampling,
// SINR evaluation against naive reference loops, MMSE/ZF beamformer
// properties, and the uplink-downlink power transfer identities.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "urllc/channel.hpp"
#include "urllc/rng.hpp"

using Catch::Approx;
using urllc::ChannelSet;
using urllc::Direction;
using urllc::GeometryConfig;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

namespace {

// Reference SINRs computed with plain loops over std::complex, no Eigen.
std::vector<double> naive_downlink(const ChannelSet& ch, const MatrixXcd& w,
                                   const VectorXd& p) {
  std::vector<double> out(ch.k_users);
  for (int k = 0; k < ch.k_users; ++k) {
    double num = 0.0, den = 1.0;
    for (int l = 0; l < ch.k_users; ++l) {
      std::complex<double> inner = 0.0;
      for (int i = 0; i < ch.n_tx; ++i)
        inner += std::conj(ch.h_bar(i, k)) * w(i, l);
      const double gain = std::norm(inner);
      if (l == k)
        num = p[k] * gain;
      else
        den += p[l] * gain;
    }
    out[k] = num / den;
  }
  return out;
}

std::vector<double> naive_uplink(const ChannelSet& ch, const MatrixXcd& w,
                                 const VectorXd& q) {
  std::vector<double> out(ch.k_users);
  for (int k = 0; k < ch.k_users; ++k) {
    double num = 0.0, den = 1.0;
    for (int l = 0; l < ch.k_users; ++l) {
      std::complex<double> inner = 0.0;
      for (int i = 0; i < ch.n_tx; ++i)
        inner += std::conj(ch.h_bar(i, l)) * w(i, k);
      const double gain = std::norm(inner);
      if (l == k)
        num = q[k] * gain;
      else
        den += q[l] * gain;
    }
    out[k] = num / den;
  }
  return out;
}

ChannelSet orthonormal_channels(int k_users) {
  ChannelSet ch;
  ch.k_users = k_users;
  ch.n_tx = k_users;
  ch.d.assign(k_users, 50.0);
  ch.rho.assign(k_users, 1.0);
  ch.sigma2.assign(k_users, 1.0);
  ch.h = MatrixXcd::Identity(k_users, k_users);
  ch.h_bar = ch.h;
  return ch;
}

}  // namespace

TEST_CASE("rng streams are deterministic and well scaled") {
  urllc::Rng a(42, 7), b(42, 7), c(42, 8);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    const double va = a.uniform();
    all_equal = all_equal && va == b.uniform();
    any_diff = any_diff || va != c.uniform();
    REQUIRE(va >= 0.0);
    REQUIRE(va < 1.0);
  }
  REQUIRE(all_equal);
  REQUIRE(any_diff);

  // Moment sanity for the Box-Muller normal.
  urllc::Rng g(1, 0);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = g.normal();
    sum += z;
    sum2 += z * z;
  }
  REQUIRE(sum / n == Approx(0.0).margin(0.01));
  REQUIRE(sum2 / n == Approx(1.0).margin(0.02));
}

TEST_CASE("channel sampling: determinism, geometry, and moments") {
  const GeometryConfig geom;
  const auto ch1 = urllc::sample_channels(geom, 4, 8, 123, 5);
  const auto ch2 = urllc::sample_channels(geom, 4, 8, 123, 5);
  const auto ch3 = urllc::sample_channels(geom, 4, 8, 123, 6);
  REQUIRE(ch1.h == ch2.h);
  REQUIRE(ch1.d == ch2.d);
  REQUIRE(ch1.h != ch3.h);

  REQUIRE(urllc::path_loss(geom, 50.0) == Approx(0.5).epsilon(1e-15));
  REQUIRE(urllc::path_loss(geom, 100.0) == Approx(1.0 / 9.0).epsilon(1e-12));

  for (int k = 0; k < ch1.k_users; ++k) {
    REQUIRE(ch1.d[k] >= geom.d0);
    REQUIRE(ch1.d[k] <= geom.radius);
    REQUIRE(ch1.rho[k] == Approx(urllc::path_loss(geom, ch1.d[k])).epsilon(1e-15));
    REQUIRE(ch1.h_bar.col(k) == ch1.h.col(k));  // sigma2 = 1
  }

  // Small-scale fading has unit variance per complex entry, so the squared
  // norm of h / sqrt(rho) averages to n_tx.
  const int trials = 10000, n_tx = 8;
  double acc = 0.0;
  long count = 0;
  for (int t = 0; t < trials; ++t) {
    const auto ch = urllc::sample_channels(geom, 2, n_tx, 99, t);
    for (int k = 0; k < ch.k_users; ++k) {
      acc += ch.h.col(k).squaredNorm() / ch.rho[k];
      ++count;
    }
  }
  REQUIRE(acc / count == Approx(n_tx).epsilon(0.03));

  REQUIRE_THROWS_AS(urllc::sample_channels(geom, 9, 8, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(urllc::sample_channels(geom, 0, 8, 1), std::invalid_argument);
}

TEST_CASE("sinr formulas match naive reference loops") {
  const GeometryConfig geom;
  for (int trial = 0; trial < 20; ++trial) {
    const int k_users = 1 + trial % 6;
    const auto ch = urllc::sample_channels(geom, k_users, k_users + 4, 7, trial);
    urllc::Rng rng(11, trial);
    MatrixXcd w(ch.n_tx, k_users);
    VectorXd p(k_users);
    for (int k = 0; k < k_users; ++k) {
      for (int i = 0; i < ch.n_tx; ++i)
        w(i, k) = std::complex<double>(rng.normal(), rng.normal());
      w.col(k).normalize();
      p[k] = rng.uniform(0.1, 5.0);
    }
    const VectorXd dl = urllc::downlink_sinr(ch, w, p);
    const VectorXd ul = urllc::uplink_sinr(ch, w, p);
    const auto dl_ref = naive_downlink(ch, w, p);
    const auto ul_ref = naive_uplink(ch, w, p);
    for (int k = 0; k < k_users; ++k) {
      REQUIRE(dl[k] == Approx(dl_ref[k]).epsilon(1e-12));
      REQUIRE(ul[k] == Approx(ul_ref[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("single-user sinr by hand") {
  ChannelSet ch;
  ch.k_users = 1;
  ch.n_tx = 2;
  ch.d = {50.0};
  ch.rho = {1.0};
  ch.sigma2 = {1.0};
  ch.h.resize(2, 1);
  ch.h(0, 0) = std::complex<double>(1.0, 1.0);
  ch.h(1, 0) = std::complex<double>(1.0, 0.0);  // |h|^2 = 3
  ch.h_bar = ch.h;
  MatrixXcd w = ch.h_bar;
  w.col(0).normalize();  // |h^H w|^2 = |h|^2 = 3
  VectorXd p(1);
  p << 2.0;
  REQUIRE(urllc::downlink_sinr(ch, w, p)[0] == Approx(6.0).epsilon(1e-14));
  REQUIRE(urllc::uplink_sinr(ch, w, p)[0] == Approx(6.0).epsilon(1e-14));
}

TEST_CASE("orthonormal channels decouple") {
  const auto ch = orthonormal_channels(3);
  VectorXd q(3);
  q << 0.5, 2.0, 7.0;
  const MatrixXcd w = urllc::mmse_beamformers(ch, q);
  // With orthonormal channels the MMSE filters align with the channels and
  // every cross gain vanishes, so SINR_k = q_k exactly.
  for (int k = 0; k < 3; ++k) {
    REQUIRE(std::abs(ch.h_bar.col(k).dot(w.col(k))) == Approx(1.0).epsilon(1e-12));
    REQUIRE(urllc::uplink_sinr(ch, w, q)[k] == Approx(q[k]).epsilon(1e-12));
    REQUIRE(urllc::downlink_sinr(ch, w, q)[k] == Approx(q[k]).epsilon(1e-12));
  }
}

TEST_CASE("mmse beamformers maximize per-user uplink sinr") {
  const GeometryConfig geom;
  for (int trial = 0; trial < 5; ++trial) {
    const auto ch = urllc::sample_channels(geom, 4, 6, 31, trial);
    urllc::Rng rng(17, trial);
    VectorXd q(4);
    for (int k = 0; k < 4; ++k) q[k] = rng.uniform(0.5, 20.0);
    const MatrixXcd w = urllc::mmse_beamformers(ch, q);
    for (int k = 0; k < 4; ++k) {
      REQUIRE(w.col(k).norm() == Approx(1.0).epsilon(1e-12));
      const std::complex<double> inner = ch.h_bar.col(k).dot(w.col(k));
      REQUIRE(inner.real() >= 0.0);
      REQUIRE(std::abs(inner.imag()) < 1e-12);
    }
    const VectorXd base = urllc::uplink_sinr(ch, w, q);
    // Random unit perturbations must not beat the MMSE filter.
    for (int probe = 0; probe < 200; ++probe) {
      const int k = probe % 4;
      MatrixXcd wp = w;
      for (int i = 0; i < ch.n_tx; ++i)
        wp(i, k) += 0.05 * std::complex<double>(rng.normal(), rng.normal());
      wp.col(k).normalize();
      REQUIRE(urllc::uplink_sinr(ch, wp, q)[k] <= base[k] * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("zero-forcing kills cross gains") {
  const GeometryConfig geom;
  const auto ch = urllc::sample_channels(geom, 5, 8, 77, 0);
  const MatrixXcd w = urllc::zf_beamformers(ch);
  for (int k = 0; k < 5; ++k) {
    REQUIRE(w.col(k).norm() == Approx(1.0).epsilon(1e-12));
    for (int l = 0; l < 5; ++l) {
      const std::complex<double> inner = ch.h_bar.col(l).dot(w.col(k));
      if (l == k) {
        REQUIRE(inner.real() > 0.0);
        REQUIRE(std::abs(inner.imag()) < 1e-12);
      } else {
        REQUIRE(std::abs(inner) < 1e-9);
      }
    }
  }

  ChannelSet degenerate = ch;
  degenerate.h_bar.col(1) = degenerate.h_bar.col(0);  // rank deficient
  REQUIRE_THROWS_AS(urllc::zf_beamformers(degenerate), std::runtime_error);
}

TEST_CASE("duality transfer hits targets and conserves total power") {
  const GeometryConfig geom;
  urllc::Rng rng(2024, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const int k_users = 1 + static_cast<int>(rng.uniform(0.0, 8.0));
    const int n_tx = k_users + static_cast<int>(rng.uniform(0.0, 1.0 + 16 - k_users));
    const auto ch = urllc::sample_channels(geom, k_users, n_tx, 555, trial);
    VectorXd q(k_users);
    for (int k = 0; k < k_users; ++k) q[k] = rng.uniform(0.2, 30.0);
    const MatrixXcd w = urllc::mmse_beamformers(ch, q);
    const VectorXd targets = urllc::uplink_sinr(ch, w, q);

    const VectorXd p = urllc::duality_transfer(ch, w, targets, Direction::downlink);
    const VectorXd dl = urllc::downlink_sinr(ch, w, p);
    for (int k = 0; k < k_users; ++k)
      REQUIRE(dl[k] == Approx(targets[k]).epsilon(1e-8));
    REQUIRE(p.sum() == Approx(q.sum()).epsilon(1e-8));

    // The uplink direction reconstructs the powers we started from.
    const VectorXd q2 = urllc::duality_transfer(ch, w, targets, Direction::uplink);
    for (int k = 0; k < k_users; ++k)
      REQUIRE(q2[k] == Approx(q[k]).epsilon(1e-8));
  }
}

TEST_CASE("duality transfer rejects impossible targets") {
  ChannelSet ch = orthonormal_channels(2);
  ch.h_bar.col(1) = ch.h_bar.col(0);  // identical users: SIR < 1 always
  ch.h = ch.h_bar;
  VectorXd q = VectorXd::Ones(2);
  const MatrixXcd w = urllc::mmse_beamformers(ch, q);
  VectorXd targets(2);
  targets << 2.0, 2.0;
  REQUIRE_THROWS_AS(urllc::duality_transfer(ch, w, targets, Direction::downlink),
                    std::runtime_error);
  targets << 2.0, -1.0;
  REQUIRE_THROWS_AS(urllc::duality_transfer(ch, w, targets, Direction::downlink),
                    std::invalid_argument);
}

TEST_CASE("evaluate fills rates and the feasibility flag") {
  const auto regime = urllc::make_regime(1e-5, 128, 256);
  const auto ch = orthonormal_channels(2);
  const MatrixXcd w = MatrixXcd::Identity(2, 2);
  VectorXd p(2);
  p << regime.nu3, 8.0;

  const auto sol = urllc::evaluate(ch, w, p, regime);
  REQUIRE(sol.gamma[0] == Approx(regime.nu3).epsilon(1e-12));
  REQUIRE(sol.rates[0] == Approx(regime.rate_min).margin(1e-9));
  REQUIRE(sol.rates[1] == Approx(urllc::rate(8.0, regime.vartheta)).epsilon(1e-14));
  REQUIRE(sol.objective == Approx(sol.rates.sum()).epsilon(1e-15));
  REQUIRE(sol.feasible);

  // Below the zero-rate threshold the raw rate is negative; the clamp is
  // opt-in and marks the point infeasible either way.
  p << regime.nu2 * 0.5, 8.0;
  const auto raw = urllc::evaluate(ch, w, p, regime);
  REQUIRE(raw.rates[0] < 0.0);
  REQUIRE_FALSE(raw.feasible);
  const auto clamped = urllc::evaluate(ch, w, p, regime, true);
  REQUIRE(clamped.rates[0] == 0.0);

  // Shannon mode swaps in ln(1 + gamma).
  const auto shannon = urllc::make_regime(1e-5, 128, 256, true);
  const auto ssol = urllc::evaluate(ch, w, p, shannon);
  REQUIRE(ssol.rates[1] == Approx(std::log1p(8.0)).epsilon(1e-14));

  VectorXd bad(3);
  bad << 1.0, 1.0, 1.0;
  REQUIRE_THROWS_AS(urllc::evaluate(ch, w, bad, regime), std::invalid_argument);
}

TEST_CASE("channel set json round trip") {
  const GeometryConfig geom;
  const auto ch = urllc::sample_channels(geom, 3, 5, 321, 9);
  const nlohmann::json j = ch;
  const auto back = j.get<ChannelSet>();
  REQUIRE(back.k_users == ch.k_users);
  REQUIRE(back.n_tx == ch.n_tx);
  REQUIRE(back.d == ch.d);
  REQUIRE(back.rho == ch.rho);
  REQUIRE((back.h - ch.h).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.h_bar - ch.h_bar).cwiseAbs().maxCoeff() == 0.0);

  // Text round trip keeps full double precision.
  const auto reparsed = nlohmann::json::parse(j.dump()).get<ChannelSet>();
  REQUIRE((reparsed.h - ch.h).cwiseAbs().maxCoeff() < 1e-15);

  nlohmann::json truncated = j;
  truncated["h"].erase(2);
  REQUIRE_THROWS_AS(truncated.get<ChannelSet>(), std::invalid_argument);
}

TEST_CASE("beam solution serializes") {
  const auto regime = urllc::make_regime(1e-5, 128, 256);
  const auto ch = orthonormal_channels(2);
  VectorXd p(2);
  p << 5.0, 6.0;
  auto sol = urllc::evaluate(ch, MatrixXcd::Identity(2, 2), p, regime);
  sol.status = "optimal";
  const nlohmann::json j = sol;
  REQUIRE(j.at("status") == "optimal");
  REQUIRE(j.at("p").size() == 2);
  REQUIRE(j.at("gamma")[0].get<double>() == Approx(5.0));
  REQUIRE(j.at("w")[1][1][0].get<double>() == Approx(1.0));
}
