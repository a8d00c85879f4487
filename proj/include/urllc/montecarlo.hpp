#pragma once

// Monte Carlo experiment harness.
//
// Reproducibility contract: trial t draws its channels from Rng(seed, t), a
// counter-based stream, so a trial's inputs depend only on (config, t) and
// never on scheduling.  Records are stored by trial index, which makes the
// records CSV byte-identical for any worker count.  Wall-clock timings are
// kept in TrialRecord for diagnostics but deliberately left out of the CSV,
// since they are the one field that cannot reproduce.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "urllc/channel.hpp"
#include "urllc/optimize.hpp"
#include "urllc/rate.hpp"
#include "urllc/units.hpp"

namespace urllc {

// One experiment cell.  Decibel fields are converted at the point of use;
// everything downstream of this struct works in watts and linear ratios.
struct ExperimentConfig {
  int k_users = 6;
  int n_tx = 32;
  double snr_db = 20.0;
  double epsilon = 1e-5;
  int blocklength = 128;    // channel uses per transmission
  int payload_bits = 256;   // information bits per transmission
  int trials = 200;
  std::uint64_t seed = 1;
  std::string objective = "srmax";
  double eps_conv = 1e-4;
  double sigma2 = 1.0;      // receiver noise power [W]
  double eta = 1.0;         // amplifier inefficiency
  double p_c_dbm = 30.0;    // per-antenna circuit power
  double p_0_dbm = 40.0;    // static base station power
  double d0_m = 50.0;       // cell hole radius
  double radius_m = 300.0;  // cell radius
  double pathloss_exponent = 3.0;

  std::vector<std::string> validate() const;
};

inline bool shannon_objective(const std::string& name) {
  return name.rfind("shannon-", 0) == 0;
}

inline std::string base_objective(const std::string& name) {
  return shannon_objective(name) ? name.substr(8) : name;
}

inline const std::array<std::string, 6>& known_objectives() {
  static const std::array<std::string, 6> names = {
      "srmax", "eemax", "maxmin", "zfbf", "shannon-srmax", "shannon-maxmin"};
  return names;
}

inline std::vector<std::string> ExperimentConfig::validate() const {
  std::vector<std::string> bad;
  if (k_users < 1) bad.push_back("k_users");
  if (n_tx < k_users || n_tx < 1) bad.push_back("n_tx");
  const bool shannon = shannon_objective(objective);
  if (!shannon && !(epsilon > 0.0 && epsilon < 0.5)) bad.push_back("epsilon");
  if (blocklength < 1) bad.push_back("blocklength");
  if (payload_bits < 1) bad.push_back("payload_bits");
  if (trials < 1) bad.push_back("trials");
  const auto& names = known_objectives();
  if (std::find(names.begin(), names.end(), objective) == names.end())
    bad.push_back("objective");
  if (!(eps_conv > 0.0)) bad.push_back("eps_conv");
  if (!(sigma2 > 0.0)) bad.push_back("sigma2");
  if (!(eta > 0.0)) bad.push_back("eta");
  if (!(p_c_dbm < 200.0)) bad.push_back("p_c_dbm");
  if (!(p_0_dbm < 200.0)) bad.push_back("p_0_dbm");
  if (!(d0_m > 0.0)) bad.push_back("d0_m");
  if (!(radius_m >= d0_m)) bad.push_back("radius_m");
  if (!(pathloss_exponent > 0.0)) bad.push_back("pathloss_exponent");
  return bad;
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"k_users", c.k_users},
                     {"n_tx", c.n_tx},
                     {"snr_db", c.snr_db},
                     {"epsilon", c.epsilon},
                     {"blocklength", c.blocklength},
                     {"payload_bits", c.payload_bits},
                     {"trials", c.trials},
                     {"seed", c.seed},
                     {"objective", c.objective},
                     {"eps_conv", c.eps_conv},
                     {"sigma2", c.sigma2},
                     {"eta", c.eta},
                     {"p_c_dbm", c.p_c_dbm},
                     {"p_0_dbm", c.p_0_dbm},
                     {"d0_m", c.d0_m},
                     {"radius_m", c.radius_m},
                     {"pathloss_exponent", c.pathloss_exponent}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.k_users = j.value("k_users", c.k_users);
  c.n_tx = j.value("n_tx", c.n_tx);
  c.snr_db = j.value("snr_db", c.snr_db);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.blocklength = j.value("blocklength", c.blocklength);
  c.payload_bits = j.value("payload_bits", c.payload_bits);
  c.trials = j.value("trials", c.trials);
  c.seed = j.value("seed", c.seed);
  c.objective = j.value("objective", c.objective);
  c.eps_conv = j.value("eps_conv", c.eps_conv);
  c.sigma2 = j.value("sigma2", c.sigma2);
  c.eta = j.value("eta", c.eta);
  c.p_c_dbm = j.value("p_c_dbm", c.p_c_dbm);
  c.p_0_dbm = j.value("p_0_dbm", c.p_0_dbm);
  c.d0_m = j.value("d0_m", c.d0_m);
  c.radius_m = j.value("radius_m", c.radius_m);
  c.pathloss_exponent = j.value("pathloss_exponent", c.pathloss_exponent);
}

// Strict loader for user-supplied files: a misspelled key silently falling
// back to a default would corrupt an experiment, so unknown keys are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object())
    throw std::invalid_argument("config: top level must be a JSON object");
  nlohmann::json defaults;
  to_json(defaults, ExperimentConfig{});
  std::string unknown;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) unknown += (unknown.empty() ? "" : ", ") + it.key();
  }
  if (!unknown.empty())
    throw std::invalid_argument("config: unknown keys: " + unknown);
  return j.get<ExperimentConfig>();
}

inline GeometryConfig geometry(const ExperimentConfig& cfg) {
  return GeometryConfig{cfg.d0_m, cfg.radius_m, cfg.pathloss_exponent};
}

inline PowerModel power_model(const ExperimentConfig& cfg) {
  return PowerModel{cfg.eta, dbm_to_watts(cfg.p_c_dbm), dbm_to_watts(cfg.p_0_dbm)};
}

inline RateRegime regime_for(const ExperimentConfig& cfg) {
  return make_regime(cfg.epsilon, cfg.blocklength, cfg.payload_bits,
                     shannon_objective(cfg.objective));
}

// Runs the configured design on one channel realization.  `opts` is taken by
// value so callers can attach trace sinks; tolerance and power model always
// come from the config.
inline BeamSolution solve_trial(const ChannelSet& ch, const ExperimentConfig& cfg,
                                SolveOptions opts = {}) {
  const RateRegime regime = regime_for(cfg);
  const double p_max = snr_to_power(cfg.snr_db, cfg.sigma2);
  opts.eps_conv = cfg.eps_conv;
  opts.power = power_model(cfg);
  const std::string base = base_objective(cfg.objective);
  if (base == "srmax") return srmax(ch, regime, p_max, opts);
  if (base == "eemax") return eemax(ch, regime, p_max, opts);
  if (base == "maxmin") return maxmin(ch, regime, p_max, opts);
  if (base == "zfbf") return zfbf_baseline(ch, regime, p_max);
  throw std::invalid_argument("solve_trial: unknown objective '" + cfg.objective + "'");
}

struct TrialRecord {
  int trial = 0;
  bool feasible = false;
  double objective = 0.0;
  double min_rate = 0.0;
  double sum_rate = 0.0;
  double min_sinr = 0.0;
  double total_power = 0.0;
  int inner_iterations = 0;
  int outer_iterations = 0;
  std::string status;
  double wall_ms = 0.0;  // diagnostics only, never serialized
};

inline constexpr const char* kRecordsCsvHeader =
    "trial,feasible,objective,min_rate,sum_rate,min_sinr,total_power,"
    "inner_iterations,outer_iterations,status";

inline std::string records_csv(const std::vector<TrialRecord>& records) {
  std::string out(kRecordsCsvHeader);
  out += '\n';
  char line[320];
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, "%d,%d,%.12g,%.12g,%.12g,%.12g,%.12g,%d,%d,%s\n",
                  r.trial, r.feasible ? 1 : 0, r.objective, r.min_rate, r.sum_rate,
                  r.min_sinr, r.total_power, r.inner_iterations, r.outer_iterations,
                  r.status.c_str());
    out += line;
  }
  return out;
}

// An infeasible cell is a measurement, not a failure: the record stays in
// place with feasible = 0 and the trial is never redrawn.  Exceptions from a
// pathological draw degrade to status "error" the same way, so one bad trial
// cannot take down a batch.
inline TrialRecord run_trial(const ExperimentConfig& cfg, int trial) {
  TrialRecord rec;
  rec.trial = trial;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const ChannelSet ch =
        sample_channels(geometry(cfg), cfg.k_users, cfg.n_tx, cfg.seed,
                        static_cast<std::uint64_t>(trial));
    const BeamSolution sol = solve_trial(ch, cfg);
    rec.feasible = sol.feasible;
    rec.objective = sol.objective;
    rec.min_rate = sol.rates.minCoeff();
    rec.sum_rate = sol.rates.sum();
    rec.min_sinr = sol.gamma.minCoeff();
    rec.total_power = sol.p.sum();
    rec.inner_iterations = sol.inner_iterations;
    rec.outer_iterations = sol.outer_iterations;
    rec.status = sol.status;
  } catch (const std::exception&) {
    rec.status = "error";
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return rec;
}

struct McResult {
  std::vector<TrialRecord> records;  // indexed by trial
  int feasible_count = 0;
  double feasibility_probability = 0.0;
  double mean_objective = std::numeric_limits<double>::quiet_NaN();
  double median_objective = std::numeric_limits<double>::quiet_NaN();
  double wall_ms_total = 0.0;
};

inline McResult run_monte_carlo(const ExperimentConfig& cfg, int workers = 1) {
  McResult res;
  res.records.resize(cfg.trials);
  const auto t0 = std::chrono::steady_clock::now();
  if (workers <= 1) {
    for (int t = 0; t < cfg.trials; ++t) res.records[t] = run_trial(cfg, t);
  } else {
    std::atomic<int> next{0};
    auto body = [&res, &cfg, &next] {
      // Writers touch disjoint slots, so the shared vector needs no lock.
      for (int t = next.fetch_add(1); t < cfg.trials; t = next.fetch_add(1))
        res.records[t] = run_trial(cfg, t);
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min(workers, cfg.trials);
    pool.reserve(n_threads);
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  res.wall_ms_total = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();

  std::vector<double> vals;
  for (const auto& r : res.records) {
    if (!r.feasible) continue;
    ++res.feasible_count;
    vals.push_back(r.objective);
  }
  res.feasibility_probability =
      cfg.trials > 0 ? static_cast<double>(res.feasible_count) / cfg.trials : 0.0;
  if (!vals.empty()) {
    double sum = 0.0;
    for (double v : vals) sum += v;
    res.mean_objective = sum / static_cast<double>(vals.size());
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    res.median_objective =
        (n % 2 == 1) ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
  }
  return res;
}

inline nlohmann::json mc_summary(const ExperimentConfig& cfg, const McResult& res,
                                 int workers) {
  nlohmann::json j{{"objective", cfg.objective},
                   {"k_users", cfg.k_users},
                   {"n_tx", cfg.n_tx},
                   {"snr_db", cfg.snr_db},
                   {"epsilon", cfg.epsilon},
                   {"blocklength", cfg.blocklength},
                   {"payload_bits", cfg.payload_bits},
                   {"trials", cfg.trials},
                   {"seed", cfg.seed},
                   {"workers", workers},
                   {"feasible", res.feasible_count},
                   {"feasibility_probability", res.feasibility_probability},
                   {"wall_ms_total", res.wall_ms_total}};
  // NaN has no JSON encoding, so the aggregate keys exist only when at least
  // one trial was feasible.
  if (res.feasible_count > 0) {
    j["mean_objective"] = res.mean_objective;
    j["median_objective"] = res.median_objective;
  }
  return j;
}

struct SweepAxis {
  std::string name;  // one of: k, snr, n, epsilon
  std::vector<double> values;
};

inline ExperimentConfig with_axis(ExperimentConfig cfg, const std::string& name,
                                  double value) {
  if (name == "k") {
    cfg.k_users = static_cast<int>(std::llround(value));
  } else if (name == "snr") {
    cfg.snr_db = value;
  } else if (name == "n") {
    cfg.blocklength = static_cast<int>(std::llround(value));
  } else if (name == "epsilon") {
    cfg.epsilon = value;
  } else {
    throw std::invalid_argument("sweep: unknown axis '" + name +
                                "' (valid: k, snr, n, epsilon)");
  }
  return cfg;
}

namespace detail {

inline void append_g(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  out += buf;
}

}  // namespace detail

// Long-format sweep over one or two config axes.  Each grid point runs a full
// Monte Carlo batch and contributes one row of aggregates.
//
// For the balanced-rate objective the row also decomposes the achieved rate:
//   mr_alg   = mean balanced rate of the dispersion-aware design,
//   mr_error = mean dispersion penalty vartheta*sqrt(V) at the balanced SINR
//              (recovered exactly as ln(1 + sinr) - rate),
//   mr_trad  = mean balanced rate when the same channels are redesigned with
//              the log-capacity objective ("shannon-maxmin", same seed).
// All three average over the trials the dispersion-aware run found feasible;
// a lower QoS floor makes those trials feasible for the log-capacity run too.
inline std::string sweep(const ExperimentConfig& base,
                         const std::vector<SweepAxis>& axes, int workers = 1) {
  if (axes.empty() || axes.size() > 2)
    throw std::invalid_argument("sweep: need 1 or 2 axes");
  for (const auto& ax : axes) {
    if (ax.values.empty())
      throw std::invalid_argument("sweep: axis '" + ax.name + "' has no values");
    with_axis(base, ax.name, ax.values.front());  // validates the name
  }
  const bool mr_columns = base.objective == "maxmin";

  std::string out;
  for (const auto& ax : axes) out += ax.name + ",";
  out += "trials,feasible,feasibility_probability,mean_objective,median_objective";
  if (mr_columns) out += ",mr_alg,mr_error,mr_trad";
  out += '\n';

  // A single axis degenerates to a one-point inner loop.
  const SweepAxis inner =
      axes.size() == 2 ? axes[1] : SweepAxis{axes[0].name, {axes[0].values.front()}};
  const SweepAxis& outer = axes[0];

  for (double ov : outer.values) {
    for (double iv : inner.values) {
      ExperimentConfig cfg = with_axis(base, outer.name, ov);
      if (axes.size() == 2) cfg = with_axis(cfg, inner.name, iv);
      const McResult res = run_monte_carlo(cfg, workers);

      detail::append_g(out, ov);
      if (axes.size() == 2) {
        out += ',';
        detail::append_g(out, iv);
      }
      char stats[160];
      std::snprintf(stats, sizeof stats, ",%d,%d,%.12g,%.12g,%.12g", cfg.trials,
                    res.feasible_count, res.feasibility_probability,
                    res.mean_objective, res.median_objective);
      out += stats;

      if (mr_columns) {
        ExperimentConfig shadow = cfg;
        shadow.objective = "shannon-maxmin";
        const McResult trad = run_monte_carlo(shadow, workers);
        double alg = 0.0, err = 0.0, log_rate = 0.0;
        int n_used = 0;
        for (int t = 0; t < cfg.trials; ++t) {
          const TrialRecord& r = res.records[t];
          if (!r.feasible || !trad.records[t].feasible) continue;
          alg += r.min_rate;
          err += std::log1p(r.min_sinr) - r.min_rate;
          log_rate += trad.records[t].min_rate;
          ++n_used;
        }
        const double denom = n_used > 0 ? n_used : 1;
        for (double v : {alg / denom, err / denom, log_rate / denom}) {
          out += ',';
          detail::append_g(out, n_used > 0 ? v
                                           : std::numeric_limits<double>::quiet_NaN());
        }
      }
      out += '\n';
    }
  }
  return out;
}

// Reference table for the closed-form rate-equation root: the bisection column
// is authoritative, the series column shows what the truncated expansion
// reaches.  Where the series diverges to non-finite values the entry is NaN.
struct Table1Row {
  double alpha = 0.0;
  double vartheta = 0.0;
  double exact = 0.0;
  double series = 0.0;
};

inline std::vector<Table1Row> table1_report(const std::vector<double>& alphas,
                                            const std::vector<double>& varthetas,
                                            int terms = 4000) {
  std::vector<Table1Row> rows;
  rows.reserve(alphas.size() * varthetas.size());
  for (double a : alphas) {
    for (double vt : varthetas) {
      Table1Row r;
      r.alpha = a;
      r.vartheta = vt;
      r.exact = solve_rate_eq_bisect(a, vt);
      try {
        r.series = solve_rate_eq_series(a, vt, terms);
      } catch (const std::exception&) {
        r.series = std::numeric_limits<double>::quiet_NaN();
      }
      rows.push_back(r);
    }
  }
  return rows;
}

inline std::string table1_csv(const std::vector<Table1Row>& rows) {
  std::string out = "alpha,vartheta,exact,series,rel_error\n";
  char line[200];
  for (const auto& r : rows) {
    const double rel =
        std::abs(r.series - r.exact) / std::max(std::abs(r.exact), 1e-300);
    std::snprintf(line, sizeof line, "%.12g,%.12g,%.12g,%.12g,%.12g\n", r.alpha,
                  r.vartheta, r.exact, r.series, rel);
    out += line;
  }
  return out;
}

// Single-instance solve with convergence traces attached, for inspecting one
// design run in detail.
struct SolveTrace {
  BeamSolution solution;
  std::vector<double> varsigma;  // surrogate objective per SCA round
  std::vector<double> lambda;    // energy-efficiency ratio sequence
  std::vector<double> mu;        // balanced SINR per filter update
};

inline SolveTrace solve_one(const ExperimentConfig& cfg, std::uint64_t stream = 0) {
  SolveTrace out;
  SolveOptions opts;
  opts.varsigma_trace = &out.varsigma;
  opts.lambda_trace = &out.lambda;
  opts.mu_trace = &out.mu;
  const ChannelSet ch =
      sample_channels(geometry(cfg), cfg.k_users, cfg.n_tx, cfg.seed, stream);
  out.solution = solve_trial(ch, cfg, opts);
  return out;
}

inline nlohmann::json solution_json(const BeamSolution& sol) {
  nlohmann::json j{{"status", sol.status},
                   {"feasible", sol.feasible},
                   {"objective", sol.objective},
                   {"inner_iterations", sol.inner_iterations},
                   {"outer_iterations", sol.outer_iterations}};
  j["p"] = std::vector<double>(sol.p.data(), sol.p.data() + sol.p.size());
  j["gamma"] = std::vector<double>(sol.gamma.data(), sol.gamma.data() + sol.gamma.size());
  j["rates"] = std::vector<double>(sol.rates.data(), sol.rates.data() + sol.rates.size());
  auto beams = nlohmann::json::array();
  for (int k = 0; k < sol.w.cols(); ++k) {
    auto col = nlohmann::json::array();
    for (int i = 0; i < sol.w.rows(); ++i)
      col.push_back({sol.w(i, k).real(), sol.w(i, k).imag()});
    beams.push_back(std::move(col));
  }
  j["w"] = std::move(beams);
  return j;
}

}  // namespace urllc
