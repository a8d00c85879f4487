#pragma once

// Downlink multiuser MISO system model.
//
// A base station with n_tx antennas serves k_users single-antenna receivers
// over flat Rayleigh fading with distance-based path loss.  This header owns
// channel sampling, SINR evaluation for both the downlink and its virtual
// uplink, MMSE and zero-forcing beamformer construction, and the exact
// power transfer between the two link directions.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "urllc/rate.hpp"
#include "urllc/rng.hpp"

namespace urllc {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

// Cell geometry and path loss: rho(d) = 1 / (1 + (d/d0)^exponent), with user
// distances drawn uniformly from [d0, radius].
struct GeometryConfig {
  double d0 = 50.0;
  double radius = 300.0;
  double exponent = 3.0;
};

inline double path_loss(const GeometryConfig& geom, double distance) {
  return 1.0 / (1.0 + std::pow(distance / geom.d0, geom.exponent));
}

struct ChannelSet {
  int k_users = 0;
  int n_tx = 0;
  std::vector<double> d;       // user distances [m]
  std::vector<double> rho;     // large-scale gains, rho[k] = path_loss(d[k])
  std::vector<double> sigma2;  // receiver noise powers
  MatrixXcd h;                 // raw channels, column k = sqrt(rho_k) h_tilde_k
  MatrixXcd h_bar;             // noise-normalized channels, h / sqrt(sigma2)
};

inline ChannelSet sample_channels(const GeometryConfig& geom, int k_users,
                                  int n_tx, std::uint64_t seed,
                                  std::uint64_t stream = 0) {
  if (k_users < 1 || n_tx < 1)
    throw std::invalid_argument("sample_channels: k_users and n_tx must be >= 1");
  if (k_users > n_tx)
    throw std::invalid_argument(
        "sample_channels: more users than antennas (k_users > n_tx)");

  Rng rng(seed, stream);
  ChannelSet ch;
  ch.k_users = k_users;
  ch.n_tx = n_tx;
  ch.d.resize(k_users);
  ch.rho.resize(k_users);
  ch.sigma2.assign(k_users, 1.0);
  ch.h.resize(n_tx, k_users);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  // Draw order is part of the format: per user, distance first, then the
  // n_tx fading entries as (re, im) pairs.  Unit variance per complex entry.
  for (int k = 0; k < k_users; ++k) {
    ch.d[k] = rng.uniform(geom.d0, geom.radius);
    ch.rho[k] = path_loss(geom, ch.d[k]);
    const double scale = std::sqrt(ch.rho[k]);
    for (int i = 0; i < n_tx; ++i) {
      const double re = rng.normal() * inv_sqrt2;
      const double im = rng.normal() * inv_sqrt2;
      ch.h(i, k) = scale * std::complex<double>(re, im);
    }
  }
  ch.h_bar = ch.h;
  for (int k = 0; k < k_users; ++k)
    ch.h_bar.col(k) /= std::sqrt(ch.sigma2[k]);
  return ch;
}

namespace detail {

inline void check_shapes(const ChannelSet& ch, const MatrixXcd& w,
                         const VectorXd& power, const char* where) {
  if (w.rows() != ch.n_tx || w.cols() != ch.k_users)
    throw std::invalid_argument(std::string(where) +
                                ": beamformer matrix must be n_tx x k_users");
  if (power.size() != ch.k_users)
    throw std::invalid_argument(std::string(where) +
                                ": power vector must have k_users entries");
}

// |h_bar_l^H w_k|^2 for all pairs; row l, column k.
inline Eigen::MatrixXd cross_gains(const ChannelSet& ch, const MatrixXcd& w) {
  return (ch.h_bar.adjoint() * w).cwiseAbs2();
}

}  // namespace detail

// gamma_k = p_k |h_bar_k^H w_k|^2 / (sum_{l != k} p_l |h_bar_k^H w_l|^2 + 1)
inline VectorXd downlink_sinr(const ChannelSet& ch, const MatrixXcd& w,
                              const VectorXd& p) {
  detail::check_shapes(ch, w, p, "downlink_sinr");
  const Eigen::MatrixXd g = detail::cross_gains(ch, w);
  VectorXd gamma(ch.k_users);
  for (int k = 0; k < ch.k_users; ++k) {
    double interference = 0.0;
    for (int l = 0; l < ch.k_users; ++l)
      if (l != k) interference += p[l] * g(k, l);
    gamma[k] = p[k] * g(k, k) / (interference + 1.0);
  }
  return gamma;
}

// Virtual uplink with transmit powers q and receive filters w:
// gamma_k = q_k |h_bar_k^H w_k|^2 / (sum_{l != k} q_l |h_bar_l^H w_k|^2 + 1)
inline VectorXd uplink_sinr(const ChannelSet& ch, const MatrixXcd& w,
                            const VectorXd& q) {
  detail::check_shapes(ch, w, q, "uplink_sinr");
  const Eigen::MatrixXd g = detail::cross_gains(ch, w);
  VectorXd gamma(ch.k_users);
  for (int k = 0; k < ch.k_users; ++k) {
    double interference = 0.0;
    for (int l = 0; l < ch.k_users; ++l)
      if (l != k) interference += q[l] * g(l, k);
    gamma[k] = q[k] * g(k, k) / (interference + 1.0);
  }
  return gamma;
}

// Rotate each column so h_bar_k^H w_k lands on the nonnegative real axis.
// SINRs are phase-invariant; fixing the phase makes solutions comparable.
inline void fix_phases(const ChannelSet& ch, MatrixXcd& w) {
  for (int k = 0; k < ch.k_users; ++k) {
    const std::complex<double> inner = ch.h_bar.col(k).dot(w.col(k));
    const double mag = std::abs(inner);
    if (mag > 0.0) w.col(k) *= std::conj(inner) / mag;
  }
}

// Unit-norm MMSE receive filters for the virtual uplink with powers q:
// w_k proportional to (I + sum_l q_l h_bar_l h_bar_l^H)^{-1} h_bar_k.
// One Cholesky factorization is shared across all k.
inline MatrixXcd mmse_beamformers(const ChannelSet& ch, const VectorXd& q) {
  if (q.size() != ch.k_users)
    throw std::invalid_argument("mmse_beamformers: power vector size mismatch");
  MatrixXcd m = MatrixXcd::Identity(ch.n_tx, ch.n_tx);
  for (int l = 0; l < ch.k_users; ++l)
    m.noalias() += q[l] * ch.h_bar.col(l) * ch.h_bar.col(l).adjoint();
  const Eigen::LLT<MatrixXcd> llt(m);  // I + PSD sum: always PD
  MatrixXcd w = llt.solve(ch.h_bar);
  for (int k = 0; k < ch.k_users; ++k) w.col(k).normalize();
  fix_phases(ch, w);
  return w;
}

// Unit-norm zero-forcing beamformers: columns of the channel pseudoinverse,
// so h_bar_l^H w_k = 0 for l != k.  Throws when the channel matrix is rank
// deficient and the inversion is meaningless.
inline MatrixXcd zf_beamformers(const ChannelSet& ch) {
  const Eigen::ColPivHouseholderQR<MatrixXcd> qr(ch.h_bar);
  if (qr.rank() < ch.k_users)
    throw std::runtime_error("zf_beamformers: rank-deficient channel matrix");
  const MatrixXcd gram = ch.h_bar.adjoint() * ch.h_bar;
  MatrixXcd w = ch.h_bar * gram.inverse();
  for (int k = 0; k < ch.k_users; ++k) w.col(k).normalize();
  fix_phases(ch, w);
  return w;
}

enum class Direction { downlink, uplink };

// Exact powers meeting SINR targets with fixed beamformers.  The downlink
// coupling matrix has diag |h_bar_k^H w_k|^2 / t_k and off-diagonal
// -|h_bar_k^H w_l|^2; the uplink matrix is its transpose with the same
// diagonal, which is why both directions consume identical total power.
// Throws when the targets are infeasible for these beamformers (singular
// system or a nonpositive power).
inline VectorXd duality_transfer(const ChannelSet& ch, const MatrixXcd& w,
                                 const VectorXd& targets, Direction direction) {
  detail::check_shapes(ch, w, targets, "duality_transfer");
  for (int k = 0; k < ch.k_users; ++k)
    if (!(targets[k] > 0.0))
      throw std::invalid_argument("duality_transfer: targets must be > 0");
  const Eigen::MatrixXd g = detail::cross_gains(ch, w);
  Eigen::MatrixXd coupling(ch.k_users, ch.k_users);
  for (int k = 0; k < ch.k_users; ++k) {
    for (int l = 0; l < ch.k_users; ++l) {
      if (l == k) {
        coupling(k, k) = g(k, k) / targets[k];
      } else {
        // Downlink user k hears w_l; uplink filter w_k hears user l.
        coupling(k, l) = direction == Direction::downlink ? -g(k, l) : -g(l, k);
      }
    }
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(coupling);
  const VectorXd power = lu.solve(VectorXd::Ones(ch.k_users));
  const double residual =
      (coupling * power - VectorXd::Ones(ch.k_users)).cwiseAbs().maxCoeff();
  if (!power.allFinite() || residual > 1e-6)
    throw std::runtime_error("duality_transfer: singular coupling matrix");
  for (int k = 0; k < ch.k_users; ++k)
    if (!(power[k] > 0.0))
      throw std::runtime_error(
          "duality_transfer: targets infeasible for these beamformers");
  return power;
}

// Circuit power model for energy efficiency: consumed power is
// eta * sum(p) + n_tx * p_c + p_0, all in watts.
struct PowerModel {
  double eta = 1.0;   // amplifier inefficiency factor
  double p_c = 1.0;   // per-antenna circuit power (30 dBm)
  double p_0 = 10.0;  // static base station power (40 dBm)
};

struct BeamSolution {
  MatrixXcd w;      // unit-norm beamformer columns
  VectorXd p;       // downlink transmit powers
  VectorXd gamma;   // downlink SINRs
  VectorXd rates;   // per-user rates [nats/channel use]
  double objective = 0.0;
  bool feasible = false;
  std::string status;
  int inner_iterations = 0;
  int outer_iterations = 0;
};

// Fills SINRs and per-user rates for the given transmit state.  The ReLU
// clamp zeroes negative finite-blocklength rates; it exists for fixed
// baselines that cannot steer around SINRs below the zero-rate threshold.
inline BeamSolution evaluate(const ChannelSet& ch, const MatrixXcd& w,
                             const VectorXd& p, const RateRegime& regime,
                             bool relu_clamp = false) {
  BeamSolution sol;
  sol.w = w;
  sol.p = p;
  sol.gamma = downlink_sinr(ch, w, p);
  sol.rates.resize(ch.k_users);
  for (int k = 0; k < ch.k_users; ++k) {
    double r = regime.shannon_mode ? std::log1p(sol.gamma[k])
                                   : rate(sol.gamma[k], regime.vartheta);
    if (relu_clamp && r < 0.0) r = 0.0;
    sol.rates[k] = r;
  }
  sol.objective = sol.rates.sum();
  sol.feasible = true;
  for (int k = 0; k < ch.k_users; ++k)
    if (sol.gamma[k] < regime.nu3 * (1.0 - 1e-9)) sol.feasible = false;
  return sol;
}

// --- JSON serialization ------------------------------------------------
// Complex numbers travel as [re, im] pairs; h_bar is recomputed on load so
// the normalization invariant cannot drift.

inline void to_json(nlohmann::json& j, const ChannelSet& ch) {
  nlohmann::json h = nlohmann::json::array();
  for (int k = 0; k < ch.k_users; ++k) {
    nlohmann::json col = nlohmann::json::array();
    for (int i = 0; i < ch.n_tx; ++i)
      col.push_back({ch.h(i, k).real(), ch.h(i, k).imag()});
    h.push_back(std::move(col));
  }
  j = nlohmann::json{{"k_users", ch.k_users}, {"n_tx", ch.n_tx},
                     {"d", ch.d},             {"rho", ch.rho},
                     {"sigma2", ch.sigma2},   {"h", std::move(h)}};
}

inline void from_json(const nlohmann::json& j, ChannelSet& ch) {
  j.at("k_users").get_to(ch.k_users);
  j.at("n_tx").get_to(ch.n_tx);
  j.at("d").get_to(ch.d);
  j.at("rho").get_to(ch.rho);
  j.at("sigma2").get_to(ch.sigma2);
  const auto& h = j.at("h");
  if (static_cast<int>(h.size()) != ch.k_users)
    throw std::invalid_argument("ChannelSet: h has wrong number of columns");
  ch.h.resize(ch.n_tx, ch.k_users);
  for (int k = 0; k < ch.k_users; ++k) {
    const auto& col = h.at(k);
    if (static_cast<int>(col.size()) != ch.n_tx)
      throw std::invalid_argument("ChannelSet: h column length mismatch");
    for (int i = 0; i < ch.n_tx; ++i)
      ch.h(i, k) = std::complex<double>(col.at(i).at(0).get<double>(),
                                        col.at(i).at(1).get<double>());
  }
  ch.h_bar = ch.h;
  for (int k = 0; k < ch.k_users; ++k)
    ch.h_bar.col(k) /= std::sqrt(ch.sigma2.at(k));
}

inline void to_json(nlohmann::json& j, const BeamSolution& sol) {
  nlohmann::json w = nlohmann::json::array();
  for (int k = 0; k < sol.w.cols(); ++k) {
    nlohmann::json col = nlohmann::json::array();
    for (int i = 0; i < sol.w.rows(); ++i)
      col.push_back({sol.w(i, k).real(), sol.w(i, k).imag()});
    w.push_back(std::move(col));
  }
  j = nlohmann::json{
      {"w", std::move(w)},
      {"p", std::vector<double>(sol.p.begin(), sol.p.end())},
      {"gamma", std::vector<double>(sol.gamma.begin(), sol.gamma.end())},
      {"rates", std::vector<double>(sol.rates.begin(), sol.rates.end())},
      {"objective", sol.objective},
      {"feasible", sol.feasible},
      {"status", sol.status},
      {"inner_iterations", sol.inner_iterations},
      {"outer_iterations", sol.outer_iterations}};
}

}  // namespace urllc
