#include "frachelm/measures.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "frachelm/errors.hpp"

namespace frachelm {

namespace {

struct ModePair {
  int a, b;
};

int freq_1d(int a) { return (a + 1) / 2; }

double mode_1d(int a, double x, double R) {
  if (a == 0) return 1.0 / std::sqrt(2.0 * R);
  const double arg = freq_1d(a) * std::numbers::pi * x / R;
  return (a % 2 == 1 ? std::cos(arg) : std::sin(arg)) / std::sqrt(R);
}

const std::vector<ModePair>& mode_table() {
  static const std::vector<ModePair> table = [] {
    constexpr int kMaxFreq = 24;
    std::vector<ModePair> t;
    for (int a = 0; a <= 2 * kMaxFreq; ++a) {
      for (int b = 0; b <= 2 * kMaxFreq; ++b) t.push_back({a, b});
    }
    std::stable_sort(t.begin(), t.end(), [](const ModePair& p, const ModePair& q) {
      const int fp = freq_1d(p.a) * freq_1d(p.a) + freq_1d(p.b) * freq_1d(p.b);
      const int fq = freq_1d(q.a) * freq_1d(q.a) + freq_1d(q.b) * freq_1d(q.b);
      if (fp != fq) return fp < fq;
      if (p.a != q.a) return p.a < q.a;
      return p.b < q.b;
    });
    // keep only complete shells below the cut so the order never depends on it
    const int cut = kMaxFreq * kMaxFreq;
    t.erase(std::remove_if(t.begin(), t.end(),
                           [&](const ModePair& p) {
                             return freq_1d(p.a) * freq_1d(p.a) + freq_1d(p.b) * freq_1d(p.b) > cut;
                           }),
            t.end());
    return t;
  }();
  return table;
}

}  // namespace

double trig_mode(int j, const Point2& x, double R) {
  const auto& t = mode_table();
  if (j < 0 || j >= static_cast<int>(t.size())) throw DomainError("trig_mode: index out of range");
  return mode_1d(t[j].a, x.x(), R) * mode_1d(t[j].b, x.y(), R);
}

int trig_mode_frequency2(int j) {
  const auto& p = mode_table().at(j);
  return freq_1d(p.a) * freq_1d(p.a) + freq_1d(p.b) * freq_1d(p.b);
}

GaussianMeasure make_prior(const std::vector<Point2>& points, double R, double s, int j_kl) {
  if (j_kl < 4) throw DomainError("make_prior: J_KL must be >= 4");
  if (!(s > 0.0)) throw DomainError("make_prior: s must be positive");
  if (!(R > 0.0)) throw DomainError("make_prior: R must be positive");
  GaussianMeasure m;
  m.s = s;
  m.R = R;
  m.mean = Eigen::VectorXd::Zero(j_kl);
  m.std_dev.resize(j_kl);
  for (int j = 0; j < j_kl; ++j) m.std_dev[j] = std::pow(j + 1.0, -(s + 1.0));
  m.basis.resize(static_cast<Eigen::Index>(points.size()), j_kl);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int j = 0; j < j_kl; ++j) m.basis(i, j) = trig_mode(j, points[i], R);
  }
  return m;
}

GaussianMeasure make_prior(const Mesh& mesh, const RegionTags& tags, double s, int j_kl) {
  std::vector<Point2> pts;
  pts.reserve(tags.suppq_triangles.size());
  for (int t : tags.suppq_triangles) pts.push_back(mesh.centroid(t));
  return make_prior(pts, mesh.R, s, j_kl);
}

Eigen::VectorXd sample_coords(const GaussianMeasure& m, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd x(m.j_kl());
  for (int j = 0; j < m.j_kl(); ++j) x[j] = m.mean[j] + m.std_dev[j] * nd(rng);
  return x;
}

Eigen::VectorXd sample(const GaussianMeasure& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return m.field(sample_coords(m, rng));
}

double cameron_martin_norm(const GaussianMeasure& m, const Eigen::VectorXd& coords) {
  if (coords.size() != m.j_kl()) throw ConfigError("cameron_martin_norm: coordinate length mismatch");
  return ((coords - m.mean).array() / m.std_dev.array()).matrix().norm();
}

nlohmann::json to_json(const GaussianMeasure& m) {
  nlohmann::json j;
  j["J_KL"] = m.j_kl();
  j["s"] = m.s;
  j["R"] = m.R;
  j["mean"] = std::vector<double>(m.mean.data(), m.mean.data() + m.mean.size());
  j["std"] = std::vector<double>(m.std_dev.data(), m.std_dev.data() + m.std_dev.size());
  return j;
}

GaussianMeasure measure_from_json(const nlohmann::json& j, const std::vector<Point2>& points) {
  const int jkl = j.at("J_KL").get<int>();
  GaussianMeasure m = make_prior(points, j.value("R", 1.0), j.at("s").get<double>(), jkl);
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("std").get<std::vector<double>>();
  if (static_cast<int>(mean.size()) != jkl || static_cast<int>(sd.size()) != jkl) {
    throw ConfigError("measure spec: mean/std length must equal J_KL");
  }
  for (int i = 0; i < jkl; ++i) {
    if (!(sd[i] > 0.0)) throw ConfigError("measure spec: std entries must be positive");
    m.mean[i] = mean[i];
    m.std_dev[i] = sd[i];
  }
  return m;
}

JointNoiseModel JointNoiseModel::noise_only(const Eigen::MatrixXd& C_eta, int j_kl) {
  JointNoiseModel m;
  const Eigen::Index d = C_eta.rows();
  m.eps_mean = Eigen::VectorXd::Zero(d);
  m.C_eps = Eigen::MatrixXd::Zero(d, d);
  m.C_eps_x = Eigen::MatrixXd::Zero(d, j_kl);
  m.C_eta = C_eta;
  return m;
}

ConditionalGaussian condition_eps_given_x(const JointNoiseModel& model, const GaussianMeasure& prior,
                                          const Eigen::VectorXd& x) {
  if (x.size() != prior.j_kl() || model.C_eps_x.cols() != prior.j_kl() ||
      model.C_eps_x.rows() != model.obs_dim()) {
    throw ConfigError("condition_eps_given_x: dimension mismatch");
  }
  if ((prior.std_dev.array() <= 0.0).any()) throw DomainError("condition_eps_given_x: singular prior covariance");
  const Eigen::VectorXd cx_inv = prior.std_dev.array().square().inverse().matrix();
  ConditionalGaussian c;
  c.mean = model.eps_mean + model.C_eps_x * (cx_inv.asDiagonal() * (x - prior.mean));
  c.cov = model.C_eps - model.C_eps_x * cx_inv.asDiagonal() * model.C_eps_x.transpose();
  c.cov = 0.5 * (c.cov + c.cov.transpose()).eval();
  return c;
}

ConditionalGaussian nu_given_x(const JointNoiseModel& model, const GaussianMeasure& prior, const Eigen::VectorXd& x) {
  ConditionalGaussian c = condition_eps_given_x(model, prior, x);
  c.cov += model.C_eta;
  Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
  if (llt.info() != Eigen::Success) throw ModelError("nu_given_x: C_nu|x is not positive definite");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.cov, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 0.0)) throw ModelError("nu_given_x: C_nu|x is not positive definite");
  return c;
}

std::string to_string(KakutaniVerdict v) {
  switch (v) {
    case KakutaniVerdict::Equivalent:
      return "equivalent";
    case KakutaniVerdict::Singular:
      return "singular";
    default:
      return "inconclusive";
  }
}

KakutaniResult kakutani_check(const std::function<double(int)>& lambda, const std::function<double(int)>& r,
                              const std::function<double(int)>& h, int K, const KakutaniThresholds& th) {
  if (K < 100) throw DomainError("kakutani_check: K_trunc must be >= 100");
  KakutaniResult res{0.0, 0.0, 0.0, 0.0, KakutaniVerdict::Inconclusive};
  const int half = K / 2;
  for (int k = 1; k <= K; ++k) {
    const double l = lambda(k), rk = r(k), hk = h(k);
    if (!(l > 0.0) || !(rk > 0.0) || !(hk >= 0.0)) {
      throw DomainError("kakutani_check: lambda, r must be positive and h nonnegative");
    }
    res.sum1 += hk * hk / (l + rk);
    res.sum2 += (l - rk) * (l - rk) / ((l + rk) * (l + rk));
    if (k == half) {
      res.sum1_half = res.sum1;
      res.sum2_half = res.sum2;
    }
  }
  const double t1 = res.sum1 - res.sum1_half, t2 = res.sum2 - res.sum2_half;
  auto linear = [&](double tail, double head) { return head > 0.0 && tail >= th.linear_ratio * head; };
  if (linear(t1, res.sum1_half) || linear(t2, res.sum2_half)) {
    res.verdict = KakutaniVerdict::Singular;
  } else if (t1 < th.tail_tol && t2 < th.tail_tol) {
    res.verdict = KakutaniVerdict::Equivalent;
  }
  return res;
}

double hellinger_gaussian_1d(double m1, double v1, double m2, double v2) {
  if (!(v1 > 0.0) || !(v2 > 0.0)) throw DomainError("hellinger_gaussian_1d: variances must be positive");
  const double bc = std::sqrt(2.0 * std::sqrt(v1 * v2) / (v1 + v2)) * std::exp(-(m1 - m2) * (m1 - m2) / (4.0 * (v1 + v2)));
  return std::sqrt(std::max(0.0, 1.0 - bc));
}

namespace {

double hellinger_weighted(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const std::vector<int>& idx) {
  // self-normalised square-root weights over the index multiset
  const double ma = a.maxCoeff(), mb = b.maxCoeff();
  double za = 0.0, zb = 0.0;
  for (int i : idx) {
    za += std::exp(a[i] - ma);
    zb += std::exp(b[i] - mb);
  }
  if (!(za > 0.0) || !(zb > 0.0)) throw SolverError("hellinger: all weights vanish");
  const double n = static_cast<double>(idx.size());
  double acc = 0.0;
  for (int i : idx) {
    const double wa = std::exp(a[i] - ma) * n / za, wb = std::exp(b[i] - mb) * n / zb;
    const double d = std::sqrt(wa) - std::sqrt(wb);
    acc += d * d;
  }
  return std::sqrt(0.5 * acc / n);
}

}  // namespace

HellingerEstimate hellinger_from_log_weights(const Eigen::VectorXd& log_w1, const Eigen::VectorXd& log_w2, int n_boot,
                                             std::uint64_t seed) {
  if (log_w1.size() != log_w2.size() || log_w1.size() == 0) throw ConfigError("hellinger: sample sets differ");
  if (!log_w1.allFinite() || !log_w2.allFinite()) throw DomainError("hellinger: non-finite potential");
  const int n = static_cast<int>(log_w1.size());
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  HellingerEstimate est{hellinger_weighted(log_w1, log_w2, all), 0.0};
  if (n_boot > 1) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<int> idx(n);
    double s = 0.0, s2 = 0.0;
    for (int b = 0; b < n_boot; ++b) {
      for (int& i : idx) i = pick(rng);
      const double v = hellinger_weighted(log_w1, log_w2, idx);
      s += v;
      s2 += v * v;
    }
    const double mean = s / n_boot;
    est.std_error = std::sqrt(std::max(0.0, s2 / n_boot - mean * mean) * n_boot / (n_boot - 1.0));
  }
  return est;
}

HellingerEstimate hellinger_empirical(const std::function<double(const Eigen::VectorXd&)>& log_ratio_1,
                                      const std::function<double(const Eigen::VectorXd&)>& log_ratio_2,
                                      const GaussianMeasure& prior, int n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw DomainError("hellinger_empirical: need at least two samples");
  std::mt19937_64 rng(seed);
  Eigen::VectorXd a(n_samples), b(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const Eigen::VectorXd x = sample_coords(prior, rng);
    a[i] = log_ratio_1(x);
    b[i] = log_ratio_2(x);
  }
  return hellinger_from_log_weights(a, b, 200, seed + 1);
}

}  // namespace frachelm
