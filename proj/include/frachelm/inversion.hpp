#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "frachelm/forward_loss.hpp"
#include "frachelm/measures.hpp"

namespace frachelm {

Eigen::VectorXd log_transform(const Eigen::VectorXd& q);          // log(1 + q)
Eigen::VectorXd inverse_log_transform(const Eigen::VectorXd& qt);  // exp(qt) - 1

struct ObservationSet {
  std::vector<Point2> receiver_centers;
  double moll_radius = 0.05;
  Eigen::VectorXd y;  // Re parts, then Im parts

  int j_obs() const { return static_cast<int>(receiver_centers.size()); }
};

/// J receivers equally spaced on the circle of radius `radius`.
ObservationSet make_receivers(int j_obs, double radius, double moll_radius);

/// Disk averages as a fixed weight matrix over the nodes of one mesh.
class Observer {
 public:
  Observer(const Mesh& mesh, const ObservationSet& obs, int radial = 6, int angular = 24);
  Eigen::VectorXd apply(const Eigen::VectorXcd& nodal) const;  // length 2J
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& weights() const { return W_; }

 private:
  Eigen::SparseMatrix<double, Eigen::RowMajor> W_;
};

Eigen::VectorXd observe(const ComplexField& field, const ObservationSet& obs, const Mesh& mesh);

/// Geometry and physics of one forward solver.
struct SolverConfig {
  double R = 1.0;          // radius of the computational disk
  double R_inner = 1.0;    // rings snapped here; the mesh is coarsened beyond it when R > R_inner
  double h = 0.05;
  double h_far = 0.2;
  double r_omega = 0.3;
  double r_q = 0.6;
  double k = 2.0;
  double omega_freq = 2.0;
  double gamma_tilde = 0.25;
  double tau_tilde = 0.1;
  double theta = 0.0;
  int n_dtn = 32;
  BoundaryKind boundary = BoundaryKind::Dtn;
  std::vector<double> extra_rings;  // e.g. receiver circle
};

/// x (KL coordinates) -> qt = basis x -> q = exp(qt) - 1 -> solve -> observe.
class ForwardModel {
 public:
  ForwardModel(const SolverConfig& cfg, const ObservationSet& obs, double prior_R, int j_kl);

  Eigen::VectorXd operator()(const Eigen::VectorXd& coords) const;
  Eigen::VectorXd from_log_field(const Eigen::VectorXd& q_tilde) const;  // qt per supp(q) triangle
  ComplexField solve_field(const Eigen::VectorXd& q_tilde) const;

  const Mesh& mesh() const { return *mesh_; }
  const RegionTags& tags() const { return *tags_; }
  const Eigen::MatrixXd& basis() const { return basis_; }
  const SolverConfig& config() const { return cfg_; }
  std::vector<Point2> suppq_centroids() const;

 private:
  SolverConfig cfg_;
  std::shared_ptr<Mesh> mesh_;
  std::shared_ptr<RegionTags> tags_;
  std::shared_ptr<FracForm> frac_;
  std::shared_ptr<LossAssembler> assembler_;
  std::shared_ptr<Observer> observer_;
  Eigen::MatrixXd basis_;  // supp(q) centroids x J_KL
};

using ForwardMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct BAEModel {
  JointNoiseModel noise;
  int n_calib = 0;
  std::uint64_t seed = 0;
  double ridge = 0.0;
};

/// eps_i = G(x_i) - G_a(x_i) over prior draws; ridge relative to the mean
/// variance of eps (zero when the two maps coincide).
BAEModel bae_calibrate(const GaussianMeasure& prior, const ForwardMap& G, const ForwardMap& Ga,
                       const Eigen::MatrixXd& C_eta, int n_samples, std::uint64_t seed, double rel_ridge = 1e-10);

enum class PotentialKind { Exact, Bae };

struct PosteriorSpec {
  GaussianMeasure prior;
  JointNoiseModel noise;  // C_eta is Gamma for the exact variant
  Eigen::VectorXd y;
  PotentialKind kind = PotentialKind::Exact;
  ForwardMap forward;  // G for the exact variant, G_a for the BAE variant
};

/// Potential, Onsager-Machlup functional and their whitening, with the
/// x-independent C_{nu|x} factored once.
class Posterior {
 public:
  explicit Posterior(PosteriorSpec spec);

  double phi(const Eigen::VectorXd& x) const;
  /// Same with G(x) already known (cached forward values).
  double phi_given_forward(const Eigen::VectorXd& x, const Eigen::VectorXd& gx, const Eigen::VectorXd& y) const;
  double phi_given_forward(const Eigen::VectorXd& x, const Eigen::VectorXd& gx) const {
    return phi_given_forward(x, gx, spec_.y);
  }
  double om(const Eigen::VectorXd& x) const;  // phi + 1/2 ||x - mean||_E^2
  /// I_n(x) = ||x||_E^2 + n^2 |C^{-1/2}(y_n - G_n(x) - nubar_x / n)|^2.
  double om_n(const Eigen::VectorXd& x, int n, const Eigen::VectorXd& y_n, const ForwardMap& G_n) const;

  Eigen::VectorXd nu_mean(const Eigen::VectorXd& x) const;
  const Eigen::MatrixXd& nu_cov() const { return cov_; }
  const PosteriorSpec& spec() const { return spec_; }
  /// Whitened residual L^{-1} r.
  Eigen::VectorXd whiten(const Eigen::VectorXd& r) const;

 private:
  PosteriorSpec spec_;
  Eigen::MatrixXd cov_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

double potential_phi(const Eigen::VectorXd& x, const PosteriorSpec& spec);
double om_functional(const Eigen::VectorXd& x, const PosteriorSpec& spec);
double om_functional_n(const Eigen::VectorXd& x, int n, const Eigen::VectorXd& y_n, const PosteriorSpec& spec,
                       const ForwardMap& G_n);

struct PcnResult {
  Eigen::MatrixXd chain;  // n_steps x J_KL
  Eigen::VectorXd phi;    // potential along the chain
  double acceptance_rate = 0.0;
};

PcnResult pcn_sample(const Posterior& post, int n_steps, double beta, std::uint64_t seed,
                     const Eigen::VectorXd* init = nullptr);

struct OptimizerConfig {
  double fd_step = 1e-5;   // per whitened coordinate
  double armijo_c = 1e-4;
  double grad_tol = 1e-8;
  int max_evals = 20000;
  int max_backtracks = 40;
  int stall_window = 10;
};

struct MapResult {
  Eigen::VectorXd x;
  std::vector<double> trace;  // objective after each accepted step (first entry: initial value)
  int evaluations = 0;
  double grad_norm = 0.0;
  bool converged = false;     // gradient tolerance met
  std::string stop_reason;
};

/// Minimise `objective` over KL coordinates by BFGS in whitened coordinates
/// z = (x - mean) / std with central-difference gradients and Armijo backtracking.
MapResult minimize_whitened(const std::function<double(const Eigen::VectorXd&)>& objective,
                            const GaussianMeasure& prior, const Eigen::VectorXd& init, const OptimizerConfig& cfg);

MapResult map_estimate(const Posterior& post, const Eigen::VectorXd& init, const OptimizerConfig& cfg = {});

struct HellingerProbeRow {
  double delta;
  double distance;
  double std_error;
  double ratio;
};

/// d_Hell(mu^y, mu^{y + delta e}) on shared prior samples, e the normalised
/// all-ones direction. Forward values are computed once per sample.
std::vector<HellingerProbeRow> hellinger_lipschitz_probe(const Posterior& post, const std::vector<double>& deltas,
                                                         int n_samples, std::uint64_t seed);

struct ConsistencyRow {
  int n;
  double gap_Gn;      // |G_n(x_n) - G(x_dagger)|
  double gap_G;       // |G(x_n) - G(x_dagger)|
  double cm_norm;     // ||x_n||_E
  double cm_bound;    // sqrt(2 ||x_dagger||_E^2 + 2 n^2 |y_n - G_n(x_dagger) - nubar/n|^2_C)
  double om_at_xn;
  double om_at_truth;
  std::uint64_t seed;
  std::string status;
};

struct ConsistencyConfig {
  std::vector<int> n_list{1, 2, 4, 8};
  std::uint64_t seed = 1;
  OptimizerConfig optimizer{};
};

/// `G` is the exact map, `G_n(n)` builds the n-th reduced map; data
/// y_n = G_n(x_dagger) + (eps_n + eta_n) / n with (eps_n, eta_n) drawn from `post`'s joint model.
std::vector<ConsistencyRow> consistency_experiment(const Posterior& post, const ForwardMap& G,
                                                   const std::function<ForwardMap(int)>& G_n,
                                                   const Eigen::VectorXd& x_dagger, const ConsistencyConfig& cfg);

void write_consistency_csv(std::ostream& os, const std::vector<ConsistencyRow>& rows);

}  // namespace frachelm
