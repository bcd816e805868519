#include "frachelm/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <numbers>
#include <ostream>
#include <random>

#include "frachelm/errors.hpp"
#include "frachelm/quadrature.hpp"

namespace frachelm {

Eigen::VectorXd log_transform(const Eigen::VectorXd& q) {
  if ((q.array() <= -1.0).any() || !q.allFinite()) throw DomainError("log_transform: q must be > -1");
  return q.array().log1p().matrix();
}

Eigen::VectorXd inverse_log_transform(const Eigen::VectorXd& qt) { return qt.array().exp().matrix() - Eigen::VectorXd::Ones(qt.size()); }

ObservationSet make_receivers(int j_obs, double radius, double moll_radius) {
  if (j_obs < 1 || !(radius > 0.0) || !(moll_radius > 0.0)) throw DomainError("make_receivers: bad parameters");
  ObservationSet obs;
  obs.moll_radius = moll_radius;
  for (int j = 0; j < j_obs; ++j) {
    const double a = 2.0 * std::numbers::pi * j / j_obs;
    obs.receiver_centers.emplace_back(radius * std::cos(a), radius * std::sin(a));
  }
  return obs;
}

Observer::Observer(const Mesh& mesh, const ObservationSet& obs, int radial, int angular) {
  const int J = obs.j_obs();
  if (J == 0) throw DomainError("Observer: no receivers");
  if (!(obs.moll_radius > 0.0)) throw DomainError("Observer: moll_radius must be positive");
  const auto& g = quad::gauss_legendre(radial);
  std::vector<Eigen::Triplet<double>> trip;
  for (int j = 0; j < J; ++j) {
    const Point2& c = obs.receiver_centers[j];
    if (c.norm() + obs.moll_radius > mesh.R * (1.0 - 1e-12)) {
      throw DomainError("Observer: receiver disk leaves the solver domain");
    }
    std::vector<Eigen::Triplet<double>> local;
    double total = 0.0;
    for (std::size_t ir = 0; ir < g.x.size(); ++ir) {
      const double r = obs.moll_radius * g.x[ir];
      for (int ia = 0; ia < angular; ++ia) {
        const double a = 2.0 * std::numbers::pi * (ia + 0.5) / angular;
        const Point2 p = c + r * Eigen::Vector2d(std::cos(a), std::sin(a));
        const auto loc = fem::locate(mesh, p, 1e-10);
        if (!loc) throw DomainError("Observer: receiver disk point outside the mesh");
        const double w = g.w[ir] * r;
        total += w;
        for (int v = 0; v < 3; ++v) local.emplace_back(j, mesh.triangles[loc->triangle][v], w * loc->bary[v]);
      }
    }
    for (auto& t : local) trip.emplace_back(t.row(), t.col(), t.value() / total);
  }
  W_.resize(J, mesh.num_nodes());
  W_.setFromTriplets(trip.begin(), trip.end());
}

Eigen::VectorXd Observer::apply(const Eigen::VectorXcd& nodal) const {
  const Eigen::Index J = W_.rows();
  Eigen::VectorXd y(2 * J);
  y.head(J) = W_ * nodal.real();
  y.tail(J) = W_ * nodal.imag();
  return y;
}

Eigen::VectorXd observe(const ComplexField& field, const ObservationSet& obs, const Mesh& mesh) {
  return Observer(mesh, obs).apply(field.values);
}

ForwardModel::ForwardModel(const SolverConfig& cfg, const ObservationSet& obs, double prior_R, int j_kl) : cfg_(cfg) {
  DiskMeshSpec ms;
  ms.R = cfg.R;
  ms.h = cfg.h;
  ms.interface_radii = {cfg.r_omega, cfg.r_q};
  for (double r : cfg.extra_rings) {
    if (r < cfg.R) ms.interface_radii.push_back(r);
  }
  if (cfg.R > cfg.R_inner * (1.0 + 1e-12)) {
    ms.interface_radii.push_back(cfg.R_inner);
    ms.fine_radius = cfg.R_inner;
    ms.h_far = cfg.h_far;
  }
  std::sort(ms.interface_radii.begin(), ms.interface_radii.end());
  mesh_ = std::make_shared<Mesh>(build_disk_mesh(ms));
  tags_ = std::make_shared<RegionTags>(mark_regions(*mesh_, cfg.r_omega, cfg.r_q));
  if (tags_->omega_triangles.empty()) throw DomainError("ForwardModel: Omega has no triangles at this resolution");
  frac_ = std::make_shared<FracForm>(assemble_fractional_form(*mesh_, *tags_, cfg.gamma_tilde + 0.5));
  ScattererConfig sc;
  sc.k = cfg.k;
  sc.omega_freq = cfg.omega_freq;
  sc.gamma_tilde = cfg.gamma_tilde;
  sc.tau_tilde = cfg.tau_tilde;
  sc.R = cfg.R;
  assembler_ = std::make_shared<LossAssembler>(*mesh_, *tags_, sc, *frac_, cfg.n_dtn, cfg.boundary);
  for (const auto& c : obs.receiver_centers) {
    if (c.norm() - obs.moll_radius <= cfg.r_q) throw DomainError("ForwardModel: receiver disk overlaps supp(q)");
  }
  observer_ = std::make_shared<Observer>(*mesh_, obs);
  const auto pts = suppq_centroids();
  basis_.resize(static_cast<Eigen::Index>(pts.size()), j_kl);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int j = 0; j < j_kl; ++j) basis_(i, j) = trig_mode(j, pts[i], prior_R);
  }
}

std::vector<Point2> ForwardModel::suppq_centroids() const {
  std::vector<Point2> pts;
  for (int t : tags_->suppq_triangles) pts.push_back(mesh_->centroid(t));
  return pts;
}

ComplexField ForwardModel::solve_field(const Eigen::VectorXd& q_tilde) const {
  if (!q_tilde.allFinite()) throw DomainError("forward map: non-finite log-contrast");
  const Eigen::VectorXd q = inverse_log_transform(q_tilde);
  return solve_loss_system(assembler_->assemble(std::span<const double>(q.data(), q.size()), cfg_.theta));
}

Eigen::VectorXd ForwardModel::from_log_field(const Eigen::VectorXd& q_tilde) const {
  return observer_->apply(solve_field(q_tilde).values);
}

Eigen::VectorXd ForwardModel::operator()(const Eigen::VectorXd& coords) const {
  if (coords.size() != basis_.cols()) throw ConfigError("forward map: coordinate length mismatch");
  return from_log_field(basis_ * coords);
}

BAEModel bae_calibrate(const GaussianMeasure& prior, const ForwardMap& G, const ForwardMap& Ga,
                       const Eigen::MatrixXd& C_eta, int n_samples, std::uint64_t seed, double rel_ridge) {
  if (n_samples < 50) throw DomainError("bae_calibrate: need at least 50 samples");
  std::mt19937_64 rng(seed);
  const int J = prior.j_kl();
  Eigen::MatrixXd X(n_samples, J);
  Eigen::MatrixXd E;
  for (int i = 0; i < n_samples; ++i) {
    const Eigen::VectorXd x = sample_coords(prior, rng);
    Eigen::VectorXd e;
    try {
      e = G(x) - Ga(x);
    } catch (const std::exception& ex) {
      throw SolverError("bae_calibrate: forward solve failed on draw " + std::to_string(i) + ": " + ex.what());
    }
    if (i == 0) E.resize(n_samples, e.size());
    X.row(i) = x.transpose();
    E.row(i) = e.transpose();
  }
  BAEModel m;
  m.n_calib = n_samples;
  m.seed = seed;
  const Eigen::VectorXd emean = E.colwise().mean().transpose();
  const Eigen::VectorXd xmean = X.colwise().mean().transpose();
  const Eigen::MatrixXd Ec = E.rowwise() - emean.transpose();
  const Eigen::MatrixXd Xc = X.rowwise() - xmean.transpose();
  const Eigen::MatrixXd See = (Ec.transpose() * Ec) / (n_samples - 1.0);
  const Eigen::MatrixXd Sex = (Ec.transpose() * Xc) / (n_samples - 1.0);
  const Eigen::MatrixXd Sxx = (Xc.transpose() * Xc) / (n_samples - 1.0);
  // regression of eps on x, re-expressed against the prior covariance so the joint model is PSD
  const Eigen::MatrixXd A = Sxx.llt().solve(Sex.transpose()).transpose();
  const Eigen::MatrixXd Cx = prior.covariance();
  Eigen::MatrixXd resid = See - A * Sex.transpose();
  resid = 0.5 * (resid + resid.transpose());
  m.noise.eps_mean = emean - A * (xmean - prior.mean);
  m.noise.C_eps_x = A * Cx;
  m.noise.C_eps = resid + A * Cx * A.transpose();
  m.ridge = rel_ridge * See.diagonal().mean();
  m.noise.C_eps.diagonal().array() += m.ridge;
  if (C_eta.rows() != emean.size() || C_eta.cols() != emean.size()) throw ConfigError("bae_calibrate: C_eta size mismatch");
  m.noise.C_eta = C_eta;
  return m;
}

Posterior::Posterior(PosteriorSpec spec) : spec_(std::move(spec)) {
  const auto& nm = spec_.noise;
  if (!spec_.forward) throw ConfigError("Posterior: no forward map");
  if (nm.C_eta.rows() != spec_.y.size()) throw ConfigError("Posterior: C_eta does not match the data dimension");
  if (spec_.kind == PotentialKind::Exact) {
    cov_ = nm.C_eta;
  } else {
    cov_ = nu_given_x(nm, spec_.prior, spec_.prior.mean).cov;
  }
  llt_.compute(cov_);
  if (llt_.info() != Eigen::Success) throw ModelError("Posterior: noise covariance is not positive definite");
}

Eigen::VectorXd Posterior::nu_mean(const Eigen::VectorXd& x) const {
  if (spec_.kind == PotentialKind::Exact) return Eigen::VectorXd::Zero(spec_.y.size());
  return condition_eps_given_x(spec_.noise, spec_.prior, x).mean;
}

Eigen::VectorXd Posterior::whiten(const Eigen::VectorXd& r) const { return llt_.matrixL().solve(r); }

double Posterior::phi_given_forward(const Eigen::VectorXd& x, const Eigen::VectorXd& gx, const Eigen::VectorXd& y) const {
  if (gx.size() != y.size()) throw ConfigError("potential: forward output does not match the data");
  return 0.5 * whiten(y - gx - nu_mean(x)).squaredNorm();
}

double Posterior::phi(const Eigen::VectorXd& x) const { return phi_given_forward(x, spec_.forward(x)); }

double Posterior::om(const Eigen::VectorXd& x) const {
  const double cm = cameron_martin_norm(spec_.prior, x);
  return phi(x) + 0.5 * cm * cm;
}

double Posterior::om_n(const Eigen::VectorXd& x, int n, const Eigen::VectorXd& y_n, const ForwardMap& G_n) const {
  if (n < 1) throw DomainError("om_n: n must be >= 1");
  const double cm = cameron_martin_norm(spec_.prior, x);
  const Eigen::VectorXd r = y_n - G_n(x) - nu_mean(x) / n;
  return cm * cm + double(n) * n * whiten(r).squaredNorm();
}

double potential_phi(const Eigen::VectorXd& x, const PosteriorSpec& spec) { return Posterior(spec).phi(x); }
double om_functional(const Eigen::VectorXd& x, const PosteriorSpec& spec) { return Posterior(spec).om(x); }
double om_functional_n(const Eigen::VectorXd& x, int n, const Eigen::VectorXd& y_n, const PosteriorSpec& spec,
                       const ForwardMap& G_n) {
  return Posterior(spec).om_n(x, n, y_n, G_n);
}

PcnResult pcn_sample(const Posterior& post, int n_steps, double beta, std::uint64_t seed, const Eigen::VectorXd* init) {
  if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("pcn_sample: beta must lie in (0, 1]");
  if (n_steps < 1) throw DomainError("pcn_sample: n_steps must be positive");
  const auto& prior = post.spec().prior;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double a = std::sqrt(1.0 - beta * beta);
  Eigen::VectorXd x = init ? *init : prior.mean;
  double phi = post.phi(x);
  PcnResult res;
  res.chain.resize(n_steps, prior.j_kl());
  res.phi.resize(n_steps);
  int accepted = 0;
  Eigen::VectorXd xi(prior.j_kl());
  for (int s = 0; s < n_steps; ++s) {
    for (int j = 0; j < prior.j_kl(); ++j) xi[j] = prior.std_dev[j] * nd(rng);
    const Eigen::VectorXd prop = prior.mean + a * (x - prior.mean) + beta * xi;
    const double phi_p = post.phi(prop);
    const double u = unif(rng);
    if (std::log(u) < phi - phi_p) {
      x = prop;
      phi = phi_p;
      ++accepted;
    }
    res.chain.row(s) = x.transpose();
    res.phi[s] = phi;
  }
  res.acceptance_rate = static_cast<double>(accepted) / n_steps;
  return res;
}

namespace {
std::string fmt_g(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}
}  // namespace

MapResult minimize_whitened(const std::function<double(const Eigen::VectorXd&)>& objective,
                            const GaussianMeasure& prior, const Eigen::VectorXd& init, const OptimizerConfig& cfg) {
  if (!init.allFinite() || init.size() != prior.j_kl()) throw DomainError("map: initial point must be finite");
  const int J = prior.j_kl();
  MapResult res;
  auto f = [&](const Eigen::VectorXd& z) {
    ++res.evaluations;
    return objective(prior.mean + prior.std_dev.cwiseProduct(z));
  };
  auto grad = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd g(J);
    Eigen::VectorXd zp = z;
    for (int j = 0; j < J; ++j) {
      zp[j] = z[j] + cfg.fd_step;
      const double fp = f(zp);
      zp[j] = z[j] - cfg.fd_step;
      const double fm = f(zp);
      zp[j] = z[j];
      g[j] = (fp - fm) / (2.0 * cfg.fd_step);
    }
    return g;
  };

  Eigen::VectorXd z = (init - prior.mean).cwiseQuotient(prior.std_dev);
  double fz = f(z);
  res.trace.push_back(fz);
  Eigen::VectorXd g = grad(z);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(J, J);
  bool scaled = false;
  int stall = 0;
  res.stop_reason = "max evaluations";
  while (res.evaluations < cfg.max_evals) {
    res.grad_norm = g.norm();
    // central differences cannot resolve gradients below the rounding floor of f
    const double noise_floor = 100.0 * std::numeric_limits<double>::epsilon() * std::abs(fz) / cfg.fd_step;
    if (res.grad_norm <= std::max(cfg.grad_tol, noise_floor)) {
      res.converged = true;
      res.stop_reason = "gradient tolerance";
      break;
    }
    Eigen::VectorXd d = -H * g;
    if (d.dot(g) >= 0.0) {
      H.setIdentity();
      d = -g;
    }
    double step = scaled ? 1.0 : 1.0 / std::max(1.0, res.grad_norm);
    bool ok = false;
    Eigen::VectorXd z_new;
    double f_new = fz;
    for (int b = 0; b < cfg.max_backtracks; ++b) {
      z_new = z + step * d;
      f_new = f(z_new);
      if (std::isfinite(f_new) && f_new <= fz + cfg.armijo_c * step * g.dot(d)) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) {
      res.stop_reason = "line search found no descent";
      break;
    }
    if (fz - f_new <= 1e-15 * std::abs(fz)) {
      if (++stall >= cfg.stall_window) {
        if (0.5 * g.dot(H * g) <= 100.0 * std::numeric_limits<double>::epsilon() * std::abs(fz)) {
          res.converged = true;
          res.stop_reason = "predicted decrease below rounding";
          z = z_new;
          fz = f_new;
          res.trace.push_back(fz);
          break;
        }
        res.x = prior.mean + prior.std_dev.cwiseProduct(z_new);
        throw SolverError("map: objective stalled over " + std::to_string(cfg.stall_window) +
                          " accepted steps (f=" + fmt_g(fz) + ", |g|=" + fmt_g(res.grad_norm) + ")");
      }
    } else {
      stall = 0;
    }
    const Eigen::VectorXd g_new = grad(z_new);
    const Eigen::VectorXd s = z_new - z, y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd V = Eigen::MatrixXd::Identity(J, J) - rho * s * y.transpose();
      H = V * H * V.transpose() + rho * s * s.transpose();
    }
    z = z_new;
    fz = f_new;
    g = g_new;
    res.trace.push_back(fz);
  }
  res.grad_norm = g.norm();
  if (res.grad_norm <= cfg.grad_tol) {
    res.converged = true;
    res.stop_reason = "gradient tolerance";
  }
  res.x = prior.mean + prior.std_dev.cwiseProduct(z);
  return res;
}

MapResult map_estimate(const Posterior& post, const Eigen::VectorXd& init, const OptimizerConfig& cfg) {
  return minimize_whitened([&](const Eigen::VectorXd& x) { return post.om(x); }, post.spec().prior, init, cfg);
}

std::vector<HellingerProbeRow> hellinger_lipschitz_probe(const Posterior& post, const std::vector<double>& deltas,
                                                         int n_samples, std::uint64_t seed) {
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] >= 0.0) || (i > 0 && deltas[i] > deltas[i - 1])) {
      throw DomainError("hellinger_lipschitz_probe: deltas must be nonnegative and decreasing");
    }
  }
  const auto& spec = post.spec();
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> xs(n_samples), gs(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    xs[i] = sample_coords(spec.prior, rng);
    gs[i] = spec.forward(xs[i]);
  }
  const Eigen::VectorXd e = Eigen::VectorXd::Ones(spec.y.size()).normalized();
  Eigen::VectorXd base(n_samples);
  for (int i = 0; i < n_samples; ++i) base[i] = -post.phi_given_forward(xs[i], gs[i], spec.y);
  std::vector<HellingerProbeRow> rows;
  for (double d : deltas) {
    const Eigen::VectorXd y2 = spec.y + d * e;
    Eigen::VectorXd other(n_samples);
    for (int i = 0; i < n_samples; ++i) other[i] = -post.phi_given_forward(xs[i], gs[i], y2);
    const auto est = hellinger_from_log_weights(base, other, 200, seed + 17);
    rows.push_back({d, est.value, est.std_error, d > 0.0 ? est.value / d : 0.0});
  }
  return rows;
}

std::vector<ConsistencyRow> consistency_experiment(const Posterior& post, const ForwardMap& G,
                                                   const std::function<ForwardMap(int)>& G_n,
                                                   const Eigen::VectorXd& x_dagger, const ConsistencyConfig& cfg) {
  const auto& prior = post.spec().prior;
  const Eigen::VectorXd g_true = G(x_dagger);
  const double cm_true = cameron_martin_norm(prior, x_dagger);
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(post.nu_cov()).matrixL();
  std::vector<ConsistencyRow> rows;
  for (int n : cfg.n_list) {
    ConsistencyRow row{};
    row.n = n;
    row.seed = cfg.seed + static_cast<std::uint64_t>(n);
    std::mt19937_64 rng(row.seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd xi(g_true.size());
    for (auto& v : xi) v = nd(rng);
    const ForwardMap Gn = G_n(n);
    // (eps_n + eta_n) ~ N(nubar_{x_dagger}, C_{nu|x})
    const Eigen::VectorXd noise = post.nu_mean(x_dagger) + L * xi;
    const Eigen::VectorXd y_n = Gn(x_dagger) + noise / n;
    auto obj = [&](const Eigen::VectorXd& x) { return post.om_n(x, n, y_n, Gn) / (double(n) * n); };
    row.om_at_truth = post.om_n(x_dagger, n, y_n, Gn);
    row.cm_bound = std::sqrt(2.0 * cm_true * cm_true + 2.0 * xi.squaredNorm());
    try {
      const MapResult m = minimize_whitened(obj, prior, prior.mean, cfg.optimizer);
      row.om_at_xn = m.trace.back() * n * n;
      row.gap_Gn = (Gn(m.x) - g_true).norm();
      row.gap_G = (G(m.x) - g_true).norm();
      row.cm_norm = cameron_martin_norm(prior, m.x);
      row.status = m.converged ? "ok" : m.stop_reason;
    } catch (const SolverError& ex) {
      row.status = std::string("error: ") + ex.what();
      row.gap_Gn = row.gap_G = row.cm_norm = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(row);
  }
  return rows;
}

void write_consistency_csv(std::ostream& os, const std::vector<ConsistencyRow>& rows) {
  os.precision(12);
  os << "n,gap_Gn,gap_G,cm_norm,seed\n";
  for (const auto& r : rows) os << r.n << ',' << r.gap_Gn << ',' << r.gap_G << ',' << r.cm_norm << ',' << r.seed << '\n';
}

}  // namespace frachelm
