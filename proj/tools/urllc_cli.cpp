// Command-line frontend for the finite-blocklength beamforming library.
//
// Subcommands:
//   thresholds  SINR thresholds and QoS floor of a rate regime (JSON)
//   table1      rate-equation root table: bisection vs series (CSV)
//   solve       one channel draw, one design, with convergence traces (JSON)
//   mc          Monte Carlo batch: records CSV plus summary JSON
//   sweep       aggregate grid over one or two config axes (long CSV)
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "urllc/montecarlo.hpp"
#include "urllc/rate.hpp"
#include "urllc/units.hpp"

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
}

// Config problems (malformed JSON, unknown keys) surface as
// std::invalid_argument so main can map them to exit code 2.
urllc::ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::invalid_argument("config: " + path + ": " + e.what());
  }
  return urllc::config_from_json(j);
}

nlohmann::json regime_json(const urllc::RateRegime& r) {
  return nlohmann::json{{"epsilon", r.epsilon},
                        {"blocklength", r.blocklength},
                        {"payload_bits", r.payload_bits},
                        {"shannon", r.shannon_mode},
                        {"vartheta", r.vartheta},
                        {"rate_min", r.rate_min},
                        {"nu0", r.nu0},
                        {"nu2", r.nu2},
                        {"nu3", r.nu3},
                        {"nu4", r.nu4}};
}

// Shared config plumbing for solve/mc/sweep: JSON file first, then flag
// overrides on top.  Validation failures list the offending fields and stop
// the run unless --force.
struct ConfigCli {
  std::string config_path;
  CLI::Option* opt_objective = nullptr;
  CLI::Option* opt_snr = nullptr;
  CLI::Option* opt_k = nullptr;
  CLI::Option* opt_n = nullptr;
  CLI::Option* opt_epsilon = nullptr;
  CLI::Option* opt_seed = nullptr;
  std::string objective;
  double snr_db = 0.0;
  int k_users = 0;
  int blocklength = 0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  bool force = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (strict keys)")
        ->check(CLI::ExistingFile);
    opt_objective =
        cmd->add_option("--objective", objective,
                        "srmax | eemax | maxmin | zfbf | shannon-srmax | shannon-maxmin");
    opt_snr = cmd->add_option("--snr", snr_db, "SNR budget [dB]");
    opt_k = cmd->add_option("--k", k_users, "number of users");
    opt_n = cmd->add_option("--n", blocklength, "blocklength [channel uses]");
    opt_epsilon = cmd->add_option("--epsilon", epsilon, "decoding error probability");
    opt_seed = cmd->add_option("--seed", seed, "RNG seed");
    cmd->add_flag("--force", force, "run even if validation fails");
  }

  urllc::ExperimentConfig load() const {
    urllc::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_config_file(config_path);
    if (opt_objective->count()) cfg.objective = objective;
    if (opt_snr->count()) cfg.snr_db = snr_db;
    if (opt_k->count()) cfg.k_users = k_users;
    if (opt_n->count()) cfg.blocklength = blocklength;
    if (opt_epsilon->count()) cfg.epsilon = epsilon;
    if (opt_seed->count()) cfg.seed = seed;
    return cfg;
  }

  // Returns false when the config is invalid and --force was not given.
  bool check(const urllc::ExperimentConfig& cfg) const {
    const auto bad = cfg.validate();
    if (bad.empty()) return true;
    std::string fields;
    for (const auto& f : bad) fields += (fields.empty() ? "" : ", ") + f;
    std::cerr << "invalid config fields: " << fields << "\n";
    if (force) {
      std::cerr << "continuing because --force was given\n";
      return true;
    }
    return false;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-blocklength multiuser beamforming toolkit"};
  app.require_subcommand(1);

  // thresholds
  auto* th = app.add_subcommand(
      "thresholds", "SINR thresholds and QoS floor of a rate regime (JSON)");
  double th_epsilon = 1e-5;
  int th_n = 128;
  int th_payload = 256;
  bool th_shannon = false;
  std::string th_out;
  th->add_option("--epsilon", th_epsilon, "decoding error probability")
      ->capture_default_str();
  th->add_option("--n", th_n, "blocklength [channel uses]")->capture_default_str();
  th->add_option("--payload", th_payload, "payload [bits]")->capture_default_str();
  th->add_flag("--shannon", th_shannon, "log-capacity regime (no dispersion)");
  th->add_option("--out", th_out, "output file (default: stdout)");

  // table1
  auto* t1 = app.add_subcommand(
      "table1", "rate-equation root table: bisection vs series (CSV)");
  std::vector<double> t1_alphas = {0.0, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> t1_varthetas = {0.01, 0.1, 0.5, 1.0, 2.0, 10.0};
  int t1_terms = 4000;
  std::string t1_out;
  t1->add_option("--alphas", t1_alphas, "rate targets [nats], comma separated")
      ->delimiter(',')
      ->capture_default_str();
  t1->add_option("--varthetas", t1_varthetas, "penalty factors, comma separated")
      ->delimiter(',')
      ->capture_default_str();
  t1->add_option("--terms", t1_terms, "series truncation order")->capture_default_str();
  t1->add_option("--out", t1_out, "output file (default: stdout)");

  // solve
  auto* sv = app.add_subcommand(
      "solve", "one channel draw, one design, with convergence traces (JSON)");
  ConfigCli sv_cfg;
  sv_cfg.attach(sv);
  std::uint64_t sv_stream = 0;
  std::string sv_out;
  sv->add_option("--stream", sv_stream, "channel draw index within the seed")
      ->capture_default_str();
  sv->add_option("--out", sv_out, "output file (default: stdout)");

  // mc
  auto* mc = app.add_subcommand("mc", "Monte Carlo batch: records CSV + summary JSON");
  ConfigCli mc_cfg;
  mc_cfg.attach(mc);
  int mc_workers = 1;
  int mc_trials = 0;
  std::string mc_out = "mc";
  mc->add_option("--workers", mc_workers, "worker threads")->capture_default_str();
  auto* mc_trials_opt = mc->add_option("--trials", mc_trials, "number of trials");
  mc->add_option("--out", mc_out, "output prefix for <out>_records.csv and <out>_summary.json")
      ->capture_default_str();

  // sweep
  auto* sw = app.add_subcommand("sweep", "aggregate grid over config axes (long CSV)");
  std::string sw_config_path, sw_objective, sw_out;
  std::uint64_t sw_seed = 0;
  int sw_workers = 1;
  int sw_trials = 0;
  bool sw_force = false;
  std::vector<double> sw_k, sw_snr, sw_n, sw_epsilon;
  sw->add_option("--config", sw_config_path, "JSON config file (strict keys)")
      ->check(CLI::ExistingFile);
  auto* sw_obj_opt = sw->add_option(
      "--objective", sw_objective,
      "srmax | eemax | maxmin | zfbf | shannon-srmax | shannon-maxmin");
  auto* sw_seed_opt = sw->add_option("--seed", sw_seed, "RNG seed");
  auto* sw_trials_opt = sw->add_option("--trials", sw_trials, "trials per grid point");
  sw->add_option("--workers", sw_workers, "worker threads")->capture_default_str();
  sw->add_option("--k", sw_k, "user counts; multiple values form an axis")->delimiter(',');
  sw->add_option("--snr", sw_snr, "SNR values [dB]; multiple values form an axis")
      ->delimiter(',');
  sw->add_option("--n", sw_n, "blocklengths; multiple values form an axis")->delimiter(',');
  sw->add_option("--epsilon", sw_epsilon,
                 "error probabilities; multiple values form an axis")
      ->delimiter(',');
  sw->add_flag("--force", sw_force, "run even if validation fails");
  sw->add_option("--out", sw_out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (th->parsed()) {
      const auto regime = urllc::make_regime(th_epsilon, th_n, th_payload, th_shannon);
      emit(th_out, regime_json(regime).dump(2) + "\n");
      return 0;
    }

    if (t1->parsed()) {
      const auto rows = urllc::table1_report(t1_alphas, t1_varthetas, t1_terms);
      emit(t1_out, urllc::table1_csv(rows));
      return 0;
    }

    if (sv->parsed()) {
      const urllc::ExperimentConfig cfg = sv_cfg.load();
      if (!sv_cfg.check(cfg)) return 2;
      const urllc::SolveTrace trace = urllc::solve_one(cfg, sv_stream);
      nlohmann::json j{{"config", cfg},
                       {"stream", sv_stream},
                       {"solution", urllc::solution_json(trace.solution)},
                       {"trace",
                        {{"varsigma", trace.varsigma},
                         {"lambda", trace.lambda},
                         {"mu", trace.mu}}}};
      emit(sv_out, j.dump(2) + "\n");
      return 0;
    }

    if (mc->parsed()) {
      urllc::ExperimentConfig cfg = mc_cfg.load();
      if (mc_trials_opt->count()) cfg.trials = mc_trials;
      if (!mc_cfg.check(cfg)) return 2;
      const urllc::McResult res = urllc::run_monte_carlo(cfg, mc_workers);
      const std::string summary = urllc::mc_summary(cfg, res, mc_workers).dump(2) + "\n";
      write_text(mc_out + "_records.csv", urllc::records_csv(res.records));
      write_text(mc_out + "_summary.json", summary);
      std::cout << summary;
      return 0;
    }

    if (sw->parsed()) {
      urllc::ExperimentConfig cfg;
      if (!sw_config_path.empty()) cfg = load_config_file(sw_config_path);
      if (sw_obj_opt->count()) cfg.objective = sw_objective;
      if (sw_seed_opt->count()) cfg.seed = sw_seed;
      if (sw_trials_opt->count()) cfg.trials = sw_trials;

      // Single-value flags override the config; multi-value flags become
      // axes, in the fixed order k, snr, n, epsilon.
      std::vector<urllc::SweepAxis> axes;
      auto route = [&axes, &cfg](const std::string& name, const std::vector<double>& vals) {
        if (vals.empty()) return;
        if (vals.size() == 1) {
          cfg = urllc::with_axis(cfg, name, vals.front());
        } else {
          axes.push_back(urllc::SweepAxis{name, vals});
        }
      };
      route("k", sw_k);
      route("snr", sw_snr);
      route("n", sw_n);
      route("epsilon", sw_epsilon);
      if (axes.empty()) {
        std::cerr << "sweep: need at least one multi-value axis among "
                     "--k/--snr/--n/--epsilon\n";
        return 2;
      }
      if (axes.size() > 2) {
        std::cerr << "sweep: at most two multi-value axes are supported\n";
        return 2;
      }
      const auto bad = cfg.validate();
      if (!bad.empty()) {
        std::string fields;
        for (const auto& f : bad) fields += (fields.empty() ? "" : ", ") + f;
        std::cerr << "invalid config fields: " << fields << "\n";
        if (!sw_force) return 2;
        std::cerr << "continuing because --force was given\n";
      }
      emit(sw_out, urllc::sweep(cfg, axes, sw_workers));
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
