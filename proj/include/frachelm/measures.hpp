#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "frachelm/geometry.hpp"

namespace frachelm {

/// Gaussian measure N(mean, diag(std^2)) on KL coordinates, with the basis
/// evaluated at a fixed set of points (centroids of the supp(q) triangles).
struct GaussianMeasure {
  Eigen::VectorXd mean;
  Eigen::VectorXd std_dev;  // strictly positive, nonincreasing
  Eigen::MatrixXd basis;    // points x J_KL
  double s = 0.5;
  double R = 1.0;

  int j_kl() const { return static_cast<int>(std_dev.size()); }
  Eigen::VectorXd field(const Eigen::VectorXd& coords) const { return basis * coords; }
  Eigen::MatrixXd covariance() const { return std_dev.array().square().matrix().asDiagonal(); }
};

/// Orthonormal trigonometric mode j (0-based, increasing frequency) of the
/// square [-R, R]^2, with its squared frequency index m1^2 + m2^2.
double trig_mode(int j, const Point2& x, double R);
int trig_mode_frequency2(int j);

/// KL prior: mode j (1-based) has std j^{-(s+1)}, zero mean.
GaussianMeasure make_prior(const std::vector<Point2>& points, double R, double s, int j_kl);
/// Same with the points taken as the supp(q) triangle centroids.
GaussianMeasure make_prior(const Mesh& mesh, const RegionTags& tags, double s, int j_kl);

Eigen::VectorXd sample_coords(const GaussianMeasure& m, std::mt19937_64& rng);
/// Field at the basis points of one draw; deterministic per seed.
Eigen::VectorXd sample(const GaussianMeasure& m, std::uint64_t seed);

double cameron_martin_norm(const GaussianMeasure& m, const Eigen::VectorXd& coords);

nlohmann::json to_json(const GaussianMeasure& m);
/// Rebuilds the coefficient part; `basis` is re-evaluated at `points`.
GaussianMeasure measure_from_json(const nlohmann::json& j, const std::vector<Point2>& points);

struct JointNoiseModel {
  Eigen::VectorXd eps_mean;
  Eigen::MatrixXd C_eps;
  Eigen::MatrixXd C_eps_x;  // obs x J_KL
  Eigen::MatrixXd C_eta;

  Eigen::Index obs_dim() const { return eps_mean.size(); }
  /// Pure observation noise, no model error.
  static JointNoiseModel noise_only(const Eigen::MatrixXd& C_eta, int j_kl);
};

struct ConditionalGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

ConditionalGaussian condition_eps_given_x(const JointNoiseModel& model, const GaussianMeasure& prior,
                                          const Eigen::VectorXd& x);
/// eps|x plus the independent observation noise; throws ModelError if the
/// covariance is not positive definite.
ConditionalGaussian nu_given_x(const JointNoiseModel& model, const GaussianMeasure& prior, const Eigen::VectorXd& x);

enum class KakutaniVerdict { Equivalent, Singular, Inconclusive };
std::string to_string(KakutaniVerdict v);

struct KakutaniResult {
  double sum1, sum2;            // partial sums at K
  double sum1_half, sum2_half;  // partial sums at K/2
  KakutaniVerdict verdict;
};

struct KakutaniThresholds {
  double tail_tol = 1e-6;     // both tails below: equivalent
  double linear_ratio = 0.4;  // tail >= ratio * first half: singular
};

/// Sequences are evaluated at k = 1..K.
KakutaniResult kakutani_check(const std::function<double(int)>& lambda, const std::function<double(int)>& r,
                              const std::function<double(int)>& h, int K, const KakutaniThresholds& th = {});

double hellinger_gaussian_1d(double m1, double v1, double m2, double v2);

struct HellingerEstimate {
  double value;
  double std_error;  // bootstrap
};

/// Hellinger distance of two reweightings of a common reference measure from
/// log-weights on shared samples (self-normalised).
HellingerEstimate hellinger_from_log_weights(const Eigen::VectorXd& log_w1, const Eigen::VectorXd& log_w2,
                                             int n_boot = 200, std::uint64_t seed = 1);

/// Same, drawing the samples from `prior`; the callables return log dmu_i/dmu_0 up to constants.
HellingerEstimate hellinger_empirical(const std::function<double(const Eigen::VectorXd&)>& log_ratio_1,
                                      const std::function<double(const Eigen::VectorXd&)>& log_ratio_2,
                                      const GaussianMeasure& prior, int n_samples, std::uint64_t seed);

}  // namespace frachelm
