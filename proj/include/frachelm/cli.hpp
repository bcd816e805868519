#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace frachelm::cli {

struct QSpec {
  std::string kind = "prior_draw";  // constant | kl | prior_draw
  double value = 0.0;
  std::vector<double> coords;
  std::uint64_t seed = 5;
};

struct ExperimentConfig {
  struct {
    double R = 1.0, r_omega = 0.3, r_q = 0.6, h = 0.05, h_far = 0.2;
  } geometry;
  struct {
    double k = 2.0, omega_freq = 2.0, gamma_tilde = 0.25, tau_tilde = 0.1, theta = 0.0;
    QSpec q;
  } physics;
  struct {
    int n_dtn = 32;
  } dtn;
  struct {
    double radius = 1.0;
  } absorbing;
  struct {
    double s = 0.5;
    int j_kl = 8;
  } prior;
  struct {
    int j = 8;
    double radius = 0.8;
    double moll_radius = 0.1;
  } obs;
  struct {
    double sigma = 0.0;  // resolved: sigma_rel * max|G(x_true)| when not given
    double sigma_rel = 0.01;
    bool sigma_given = false;
  } noise;
  struct {
    std::string command;
    std::uint64_t seed = 1;
    std::string boundary = "dtn";
    std::string posterior = "exact";  // exact | bae
    int n_samples = 200;              // bae-calibrate draws
    int n_probe = 1000;               // hellinger-probe prior samples
    int n_steps = 2000;               // pcn
    double beta = 0.2;
    double tol = 1e-10;
    int max_iter = 200;
    double c_cal = 0.6;
    double grad_tol = 1e-6;
    int max_evals = 4000;
    std::vector<int> n_list{1, 2, 4, 8};
    std::vector<double> deltas{0.1, 0.05, 0.025};  // multiples of sigma
    std::string output_dir = "out";
    int threads = 0;
  } run;
};

/// Parse and validate; throws ConfigError with "line N: key: message" diagnostics.
ExperimentConfig parse_config(const std::string& text);
nlohmann::json to_json(const ExperimentConfig& c);

/// Whole program: returns the process exit code (0 ok, 2 config, 3 numerical).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace frachelm::cli
