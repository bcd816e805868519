#include "frachelm/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "frachelm/errors.hpp"
#include "frachelm/forward_disp.hpp"
#include "frachelm/forward_loss.hpp"
#include "frachelm/fraclap.hpp"
#include "frachelm/inversion.hpp"
#include "frachelm/measures.hpp"
#include "frachelm/specfun.hpp"

namespace frachelm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

const std::vector<std::string> kCommands{"forward-loss", "forward-disp", "observe",    "bae-calibrate", "map",
                                         "pcn",          "hellinger-probe", "consistency", "selftest"};

class Reader {
 public:
  explicit Reader(const std::string& text) : text_(text) {}

  int line_of(const std::string& key) const {
    const auto pos = text_.find('"' + key + '"');
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<long>(pos), '\n'));
  }

  [[noreturn]] void fail(const std::string& path, const std::string& key, const std::string& msg) const {
    const int line = line_of(key);
    std::ostringstream os;
    if (line > 0) os << "line " << line << ": ";
    os << path << ": " << msg;
    throw ConfigError(os.str());
  }

  void allow(const json& obj, const std::string& path, std::initializer_list<const char*> keys) const {
    if (!obj.is_object()) fail(path, path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }) == keys.end()) {
        fail(path + "." + it.key(), it.key(), "unknown key");
      }
    }
  }

  template <class T>
  void get(const json& obj, const std::string& path, const char* key, T& out) const {
    if (!obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      fail(path + "." + key, key, "wrong type");
    }
  }

  void positive(double v, const std::string& path, const char* key) const {
    if (!(v > 0.0) || !std::isfinite(v)) fail(path + "." + key, key, "must be positive and finite");
  }

 private:
  const std::string& text_;
};

json section(const json& root, const char* name) { return root.contains(name) ? root.at(name) : json::object(); }

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto byte = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
    throw ConfigError("line " + std::to_string(line) + ": invalid JSON: " + e.what());
  }
  const Reader rd(text);
  rd.allow(root, "config", {"geometry", "physics", "dtn", "absorbing", "prior", "obs", "noise", "run"});
  ExperimentConfig c;

  const json g = section(root, "geometry");
  rd.allow(g, "geometry", {"R", "r_omega", "r_q", "h", "h_far"});
  rd.get(g, "geometry", "R", c.geometry.R);
  rd.get(g, "geometry", "r_omega", c.geometry.r_omega);
  rd.get(g, "geometry", "r_q", c.geometry.r_q);
  rd.get(g, "geometry", "h", c.geometry.h);
  rd.get(g, "geometry", "h_far", c.geometry.h_far);
  for (auto [k, v] : {std::pair{"R", c.geometry.R}, {"r_omega", c.geometry.r_omega}, {"r_q", c.geometry.r_q},
                      {"h", c.geometry.h}, {"h_far", c.geometry.h_far}}) {
    rd.positive(v, "geometry", k);
  }
  if (!(c.geometry.r_omega < c.geometry.r_q)) rd.fail("geometry.r_q", "r_q", "need r_omega < r_q");
  if (!(c.geometry.r_q < c.geometry.R)) rd.fail("geometry.r_q", "r_q", "need r_q < R");

  const json p = section(root, "physics");
  rd.allow(p, "physics", {"k", "omega_freq", "gamma_tilde", "tau_tilde", "theta", "q"});
  rd.get(p, "physics", "k", c.physics.k);
  c.physics.omega_freq = c.physics.k;
  rd.get(p, "physics", "omega_freq", c.physics.omega_freq);
  rd.get(p, "physics", "gamma_tilde", c.physics.gamma_tilde);
  rd.get(p, "physics", "tau_tilde", c.physics.tau_tilde);
  rd.get(p, "physics", "theta", c.physics.theta);
  rd.positive(c.physics.k, "physics", "k");
  rd.positive(c.physics.omega_freq, "physics", "omega_freq");
  if (!(c.physics.gamma_tilde >= 0.0 && c.physics.gamma_tilde <= 0.5)) {
    rd.fail("physics.gamma_tilde", "gamma_tilde", "must lie in [0, 1/2]");
  }
  if (!(c.physics.tau_tilde >= 0.0)) rd.fail("physics.tau_tilde", "tau_tilde", "must be nonnegative");
  if (p.contains("q")) {
    const json& q = p.at("q");
    rd.allow(q, "physics.q", {"kind", "value", "coords", "seed"});
    rd.get(q, "physics.q", "kind", c.physics.q.kind);
    rd.get(q, "physics.q", "value", c.physics.q.value);
    rd.get(q, "physics.q", "coords", c.physics.q.coords);
    rd.get(q, "physics.q", "seed", c.physics.q.seed);
    const auto& kd = c.physics.q.kind;
    if (kd != "constant" && kd != "kl" && kd != "prior_draw") {
      rd.fail("physics.q.kind", "kind", "expected constant, kl or prior_draw");
    }
    if (kd == "constant" && !(c.physics.q.value > -1.0)) rd.fail("physics.q.value", "value", "must be > -1");
  }

  const json d = section(root, "dtn");
  rd.allow(d, "dtn", {"N_dtn"});
  rd.get(d, "dtn", "N_dtn", c.dtn.n_dtn);
  if (c.dtn.n_dtn < 8) rd.fail("dtn.N_dtn", "N_dtn", "must be >= 8");

  const json a = section(root, "absorbing");
  rd.allow(a, "absorbing", {"radius"});
  c.absorbing.radius = c.geometry.R;
  rd.get(a, "absorbing", "radius", c.absorbing.radius);
  if (!(c.absorbing.radius > c.geometry.r_q)) rd.fail("absorbing.radius", "radius", "need radius > r_q");

  const json pr = section(root, "prior");
  rd.allow(pr, "prior", {"s", "J_KL"});
  rd.get(pr, "prior", "s", c.prior.s);
  rd.get(pr, "prior", "J_KL", c.prior.j_kl);
  rd.positive(c.prior.s, "prior", "s");
  if (c.prior.j_kl < 4) rd.fail("prior.J_KL", "J_KL", "must be >= 4");
  if (c.physics.q.kind == "kl" && static_cast<int>(c.physics.q.coords.size()) != c.prior.j_kl) {
    rd.fail("physics.q.coords", "coords", "length must equal prior.J_KL");
  }

  const json o = section(root, "obs");
  rd.allow(o, "obs", {"J", "radius", "moll_radius"});
  rd.get(o, "obs", "J", c.obs.j);
  c.obs.radius = 0.8 * c.geometry.R;
  rd.get(o, "obs", "radius", c.obs.radius);
  c.obs.moll_radius = std::max(0.05 * c.geometry.R, 2.0 * c.geometry.h);
  rd.get(o, "obs", "moll_radius", c.obs.moll_radius);
  if (c.obs.j < 1) rd.fail("obs.J", "J", "must be >= 1");
  rd.positive(c.obs.moll_radius, "obs", "moll_radius");
  if (!(c.obs.radius - c.obs.moll_radius > c.geometry.r_q && c.obs.radius + c.obs.moll_radius < c.geometry.R)) {
    rd.fail("obs.radius", "radius", "receiver disks must lie between r_q and R");
  }

  const json n = section(root, "noise");
  rd.allow(n, "noise", {"sigma", "sigma_rel"});
  rd.get(n, "noise", "sigma_rel", c.noise.sigma_rel);
  rd.positive(c.noise.sigma_rel, "noise", "sigma_rel");
  if (n.contains("sigma")) {
    rd.get(n, "noise", "sigma", c.noise.sigma);
    rd.positive(c.noise.sigma, "noise", "sigma");
    c.noise.sigma_given = true;
  }

  const json r = section(root, "run");
  rd.allow(r, "run", {"command", "seed", "boundary", "posterior", "n_samples", "n_probe", "n_steps", "beta", "tol",
                      "max_iter", "c_cal", "grad_tol", "max_evals", "n_list", "deltas", "output_dir", "threads"});
  rd.get(r, "run", "command", c.run.command);
  rd.get(r, "run", "seed", c.run.seed);
  rd.get(r, "run", "boundary", c.run.boundary);
  rd.get(r, "run", "posterior", c.run.posterior);
  rd.get(r, "run", "n_samples", c.run.n_samples);
  rd.get(r, "run", "n_probe", c.run.n_probe);
  rd.get(r, "run", "n_steps", c.run.n_steps);
  rd.get(r, "run", "beta", c.run.beta);
  rd.get(r, "run", "tol", c.run.tol);
  rd.get(r, "run", "max_iter", c.run.max_iter);
  rd.get(r, "run", "c_cal", c.run.c_cal);
  rd.get(r, "run", "grad_tol", c.run.grad_tol);
  rd.get(r, "run", "max_evals", c.run.max_evals);
  rd.get(r, "run", "n_list", c.run.n_list);
  rd.get(r, "run", "deltas", c.run.deltas);
  rd.get(r, "run", "output_dir", c.run.output_dir);
  rd.get(r, "run", "threads", c.run.threads);
  if (!c.run.command.empty() && std::find(kCommands.begin(), kCommands.end(), c.run.command) == kCommands.end()) {
    rd.fail("run.command", "command", "unknown command '" + c.run.command + "'");
  }
  if (c.run.boundary != "dtn" && c.run.boundary != "absorbing") {
    rd.fail("run.boundary", "boundary", "expected dtn or absorbing");
  }
  if (c.run.posterior != "exact" && c.run.posterior != "bae") rd.fail("run.posterior", "posterior", "expected exact or bae");
  if (c.run.n_samples < 50) rd.fail("run.n_samples", "n_samples", "must be >= 50");
  if (c.run.n_probe < 2) rd.fail("run.n_probe", "n_probe", "must be >= 2");
  if (c.run.n_steps < 1) rd.fail("run.n_steps", "n_steps", "must be >= 1");
  if (!(c.run.beta > 0.0 && c.run.beta <= 1.0)) rd.fail("run.beta", "beta", "must lie in (0, 1]");
  rd.positive(c.run.tol, "run", "tol");
  rd.positive(c.run.c_cal, "run", "c_cal");
  rd.positive(c.run.grad_tol, "run", "grad_tol");
  if (c.run.max_iter < 1) rd.fail("run.max_iter", "max_iter", "must be >= 1");
  if (c.run.max_evals < 1) rd.fail("run.max_evals", "max_evals", "must be >= 1");
  if (c.run.n_list.empty() || std::any_of(c.run.n_list.begin(), c.run.n_list.end(), [](int v) { return v < 1; })) {
    rd.fail("run.n_list", "n_list", "entries must be >= 1");
  }
  for (std::size_t i = 0; i < c.run.deltas.size(); ++i) {
    if (!(c.run.deltas[i] > 0.0) || (i > 0 && c.run.deltas[i] > c.run.deltas[i - 1])) {
      rd.fail("run.deltas", "deltas", "must be positive and decreasing");
    }
  }
  if (c.run.threads < 0) rd.fail("run.threads", "threads", "must be >= 0");
  return c;
}

json to_json(const ExperimentConfig& c) {
  json q{{"kind", c.physics.q.kind}, {"value", c.physics.q.value}, {"coords", c.physics.q.coords},
         {"seed", c.physics.q.seed}};
  json noise{{"sigma_rel", c.noise.sigma_rel}};
  if (c.noise.sigma_given) noise["sigma"] = c.noise.sigma;
  return json{
      {"geometry",
       {{"R", c.geometry.R}, {"r_omega", c.geometry.r_omega}, {"r_q", c.geometry.r_q}, {"h", c.geometry.h},
        {"h_far", c.geometry.h_far}}},
      {"physics",
       {{"k", c.physics.k},
        {"omega_freq", c.physics.omega_freq},
        {"gamma_tilde", c.physics.gamma_tilde},
        {"tau_tilde", c.physics.tau_tilde},
        {"theta", c.physics.theta},
        {"q", q}}},
      {"dtn", {{"N_dtn", c.dtn.n_dtn}}},
      {"absorbing", {{"radius", c.absorbing.radius}}},
      {"prior", {{"s", c.prior.s}, {"J_KL", c.prior.j_kl}}},
      {"obs", {{"J", c.obs.j}, {"radius", c.obs.radius}, {"moll_radius", c.obs.moll_radius}}},
      {"noise", noise},
      {"run",
       {{"command", c.run.command},
        {"seed", c.run.seed},
        {"boundary", c.run.boundary},
        {"posterior", c.run.posterior},
        {"n_samples", c.run.n_samples},
        {"n_probe", c.run.n_probe},
        {"n_steps", c.run.n_steps},
        {"beta", c.run.beta},
        {"tol", c.run.tol},
        {"max_iter", c.run.max_iter},
        {"c_cal", c.run.c_cal},
        {"grad_tol", c.run.grad_tol},
        {"max_evals", c.run.max_evals},
        {"n_list", c.run.n_list},
        {"deltas", c.run.deltas},
        {"output_dir", c.run.output_dir},
        {"threads", c.run.threads}}},
  };
}

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

json to_json_matrix(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_vec(m.row(i).transpose()));
  return rows;
}

struct Context {
  ExperimentConfig cfg;
  fs::path out_dir;
  std::vector<std::string> outputs;
  json summary = json::object();

  std::ofstream open(const std::string& name) {
    outputs.push_back(name);
    std::ofstream os(out_dir / name);
    if (!os) throw ConfigError("cannot write " + (out_dir / name).string());
    os.precision(15);
    return os;
  }
  void write_json(const std::string& name, const json& j) { open(name) << j.dump(2) << '\n'; }
};

ObservationSet receivers(const ExperimentConfig& c) { return make_receivers(c.obs.j, c.obs.radius, c.obs.moll_radius); }

SolverConfig solver_config(const ExperimentConfig& c, BoundaryKind kind, double absorbing_radius) {
  SolverConfig s;
  s.R = c.geometry.R;
  s.R_inner = c.geometry.R;
  s.h = c.geometry.h;
  s.h_far = c.geometry.h_far;
  s.r_omega = c.geometry.r_omega;
  s.r_q = c.geometry.r_q;
  s.k = c.physics.k;
  s.omega_freq = c.physics.omega_freq;
  s.gamma_tilde = c.physics.gamma_tilde;
  s.tau_tilde = c.physics.tau_tilde;
  s.theta = c.physics.theta;
  s.n_dtn = c.dtn.n_dtn;
  s.boundary = kind;
  s.extra_rings = {c.obs.radius};
  if (kind == BoundaryKind::Absorbing) {
    s.R = absorbing_radius;
    s.R_inner = std::min(c.geometry.R, absorbing_radius);
    if (absorbing_radius < c.obs.radius + c.obs.moll_radius) {
      throw ConfigError("absorbing.radius: receiver disks must lie inside the absorbing boundary");
    }
  }
  return s;
}

std::shared_ptr<ForwardModel> exact_model(const ExperimentConfig& c) {
  return std::make_shared<ForwardModel>(solver_config(c, BoundaryKind::Dtn, c.geometry.R), receivers(c), c.geometry.R,
                                        c.prior.j_kl);
}

std::shared_ptr<ForwardModel> reduced_model(const ExperimentConfig& c, double radius) {
  return std::make_shared<ForwardModel>(solver_config(c, BoundaryKind::Absorbing, radius), receivers(c), c.geometry.R,
                                        c.prior.j_kl);
}

ForwardMap as_map(const std::shared_ptr<ForwardModel>& m) {
  return [m](const Eigen::VectorXd& x) { return (*m)(x); };
}

Eigen::VectorXd truth_coords(const ExperimentConfig& c, const GaussianMeasure& prior) {
  if (c.physics.q.kind == "kl") return Eigen::Map<const Eigen::VectorXd>(c.physics.q.coords.data(), c.prior.j_kl);
  if (c.physics.q.kind == "prior_draw") {
    std::mt19937_64 rng(c.physics.q.seed);
    return sample_coords(prior, rng);
  }
  throw ConfigError("physics.q.kind: inversion commands need kl or prior_draw");
}

/// Log-contrast per supp(q) triangle of `m`.
Eigen::VectorXd truth_log_field(const ExperimentConfig& c, const ForwardModel& m) {
  if (c.physics.q.kind == "constant") {
    return Eigen::VectorXd::Constant(m.basis().rows(), std::log1p(c.physics.q.value));
  }
  const GaussianMeasure prior = make_prior(m.mesh(), m.tags(), c.prior.s, c.prior.j_kl);
  return m.basis() * truth_coords(c, prior);
}

struct Inverse {
  std::shared_ptr<ForwardModel> G, Ga;
  GaussianMeasure prior;
  Eigen::VectorXd x_true, g_true, y;
  double sigma = 0.0;
  std::optional<BAEModel> bae;
};

Inverse setup_inverse(Context& ctx, bool need_reduced) {
  const auto& c = ctx.cfg;
  Inverse inv;
  inv.G = exact_model(c);
  inv.prior = make_prior(inv.G->mesh(), inv.G->tags(), c.prior.s, c.prior.j_kl);
  inv.x_true = truth_coords(c, inv.prior);
  inv.g_true = (*inv.G)(inv.x_true);
  inv.sigma = c.noise.sigma_given ? c.noise.sigma : c.noise.sigma_rel * inv.g_true.cwiseAbs().maxCoeff();
  if (!(inv.sigma > 0.0)) throw ModelError("noise: resolved sigma is zero");
  std::mt19937_64 rng(c.run.seed);
  std::normal_distribution<double> nd;
  inv.y = inv.g_true;
  for (auto& v : inv.y) v += inv.sigma * nd(rng);
  if (need_reduced || c.run.posterior == "bae") inv.Ga = reduced_model(c, c.absorbing.radius);
  const Eigen::MatrixXd C_eta = inv.sigma * inv.sigma * Eigen::MatrixXd::Identity(inv.y.size(), inv.y.size());
  if (c.run.posterior == "bae") {
    inv.bae = bae_calibrate(inv.prior, as_map(inv.G), as_map(inv.Ga), C_eta, c.run.n_samples, c.run.seed + 1);
  }
  ctx.summary["sigma"] = inv.sigma;
  ctx.summary["x_true"] = to_vec(inv.x_true);
  return inv;
}

Posterior make_posterior(const ExperimentConfig& c, const Inverse& inv, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd C_eta = inv.sigma * inv.sigma * Eigen::MatrixXd::Identity(y.size(), y.size());
  if (c.run.posterior == "bae") {
    return Posterior(PosteriorSpec{inv.prior, inv.bae->noise, y, PotentialKind::Bae, as_map(inv.Ga)});
  }
  return Posterior(
      PosteriorSpec{inv.prior, JointNoiseModel::noise_only(C_eta, c.prior.j_kl), y, PotentialKind::Exact, as_map(inv.G)});
}

OptimizerConfig optimizer(const ExperimentConfig& c) {
  OptimizerConfig o;
  o.grad_tol = c.run.grad_tol;
  o.max_evals = c.run.max_evals;
  return o;
}

void cmd_forward_loss(Context& ctx) {
  const auto& c = ctx.cfg;
  const bool abs = c.run.boundary == "absorbing";
  auto m = abs ? reduced_model(c, c.absorbing.radius) : exact_model(c);
  const Eigen::VectorXd qt = truth_log_field(c, *m);
  const ComplexField u = m->solve_field(qt);
  {
    auto os = ctx.open("field.csv");
    write_field_csv(os, u);
  }
  const Eigen::VectorXd y = m->from_log_field(qt);
  ctx.write_json("observations.json", json{{"y", to_vec(y)}, {"J", c.obs.j}});
  {
    auto os = ctx.open("mesh.txt");
    write_mesh(os, m->mesh(), &m->tags());
  }
  ctx.summary["nodes"] = m->mesh().num_nodes();
  ctx.summary["h1_norm"] = h1_norm(u, m->mesh());
}

void cmd_forward_disp(Context& ctx) {
  const auto& c = ctx.cfg;
  DiskMeshSpec ms;
  ms.R = c.geometry.R;
  ms.h = c.geometry.h;
  ms.interface_radii = {c.geometry.r_omega, c.geometry.r_q};
  const Mesh mesh = build_disk_mesh(ms);
  const RegionTags tags = mark_regions(mesh, c.geometry.r_omega, c.geometry.r_q);
  Eigen::VectorXd qt;
  if (c.physics.q.kind == "constant") {
    qt = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(tags.suppq_triangles.size()), std::log1p(c.physics.q.value));
  } else {
    const GaussianMeasure prior = make_prior(mesh, tags, c.prior.s, c.prior.j_kl);
    qt = prior.basis * truth_coords(c, prior);
  }
  ScattererConfig sc;
  sc.q_values = to_vec(inverse_log_transform(qt));
  sc.gamma_tilde = c.physics.gamma_tilde;
  sc.tau_tilde = c.physics.tau_tilde;
  sc.k = c.physics.k;
  sc.omega_freq = c.physics.omega_freq;
  sc.R = c.geometry.R;
  const FracForm frac = assemble_fractional_form(mesh, tags, c.physics.gamma_tilde);
  DispOptions opts;
  opts.n_dtn = c.dtn.n_dtn;
  opts.tol = c.run.tol;
  opts.max_iter = c.run.max_iter;
  opts.theta = c.physics.theta;
  opts.c_cal = c.run.c_cal;
  const DispResult res = solve_disp_iterative(mesh, tags, sc, frac, opts);
  {
    auto os = ctx.open("field.csv");
    write_field_csv(os, res.state.g);
  }
  {
    auto os = ctx.open("history.csv");
    write_disp_history_csv(os, res.history);
  }
  ctx.summary["converged"] = res.converged;
  ctx.summary["iterations"] = res.state.iterate_index;
  ctx.summary["contraction_margin"] = res.condition.margin;
  ctx.summary["contraction_ok"] = res.condition.ok;
  ctx.summary["boundary_mismatch"] = res.boundary_mismatch;
  if (!res.converged) throw SolverError("forward-disp: no convergence within max_iter");
}

void cmd_observe(Context& ctx) {
  const Inverse inv = setup_inverse(ctx, false);
  ctx.write_json("data.json", json{{"x_true", to_vec(inv.x_true)},
                                   {"g_true", to_vec(inv.g_true)},
                                   {"y", to_vec(inv.y)},
                                   {"sigma", inv.sigma}});
}

void cmd_bae(Context& ctx) {
  ctx.cfg.run.posterior = "bae";
  const Inverse inv = setup_inverse(ctx, true);
  const auto& m = *inv.bae;
  ctx.write_json("bae.json", json{{"eps_mean", to_vec(m.noise.eps_mean)},
                                  {"C_eps", to_json_matrix(m.noise.C_eps)},
                                  {"C_eps_x", to_json_matrix(m.noise.C_eps_x)},
                                  {"n_calib", m.n_calib},
                                  {"seed", m.seed},
                                  {"ridge", m.ridge}});
  ctx.summary["eps_mean_norm"] = m.noise.eps_mean.norm();
}

void cmd_map(Context& ctx) {
  const Inverse inv = setup_inverse(ctx, false);
  const Posterior post = make_posterior(ctx.cfg, inv, inv.y);
  const MapResult r = map_estimate(post, inv.prior.mean, optimizer(ctx.cfg));
  {
    auto os = ctx.open("map_trace.csv");
    os << "step,objective\n";
    for (std::size_t i = 0; i < r.trace.size(); ++i) os << i << ',' << r.trace[i] << '\n';
  }
  ctx.write_json("map.json", json{{"x", to_vec(r.x)},
                                  {"phi", post.phi(r.x)},
                                  {"om", r.trace.back()},
                                  {"evaluations", r.evaluations},
                                  {"grad_norm", r.grad_norm},
                                  {"converged", r.converged},
                                  {"stop_reason", r.stop_reason}});
  ctx.summary["converged"] = r.converged;
}

void cmd_pcn(Context& ctx) {
  const Inverse inv = setup_inverse(ctx, false);
  const Posterior post = make_posterior(ctx.cfg, inv, inv.y);
  const PcnResult r = pcn_sample(post, ctx.cfg.run.n_steps, ctx.cfg.run.beta, ctx.cfg.run.seed + 2);
  {
    auto os = ctx.open("chain.csv");
    os << "step";
    for (int j = 0; j < r.chain.cols(); ++j) os << ",x" << j;
    os << ",phi\n";
    for (Eigen::Index s = 0; s < r.chain.rows(); ++s) {
      os << s;
      for (Eigen::Index j = 0; j < r.chain.cols(); ++j) os << ',' << r.chain(s, j);
      os << ',' << r.phi[s] << '\n';
    }
  }
  const Eigen::VectorXd mean = r.chain.colwise().mean().transpose();
  ctx.write_json("pcn.json", json{{"acceptance_rate", r.acceptance_rate}, {"mean", to_vec(mean)}});
  ctx.summary["acceptance_rate"] = r.acceptance_rate;
}

void cmd_hellinger(Context& ctx) {
  const Inverse inv = setup_inverse(ctx, false);
  const Posterior post = make_posterior(ctx.cfg, inv, inv.y);
  std::vector<double> deltas;
  for (double d : ctx.cfg.run.deltas) deltas.push_back(d * inv.sigma);
  const auto rows = hellinger_lipschitz_probe(post, deltas, ctx.cfg.run.n_probe, ctx.cfg.run.seed + 3);
  auto os = ctx.open("hellinger.csv");
  os << "delta,distance,std_error,ratio\n";
  for (const auto& r : rows) os << r.delta << ',' << r.distance << ',' << r.std_error << ',' << r.ratio << '\n';
}

void cmd_consistency(Context& ctx) {
  const Inverse inv = setup_inverse(ctx, true);
  const Posterior post = make_posterior(ctx.cfg, inv, inv.y);
  const double R = ctx.cfg.geometry.R;
  const ExperimentConfig cfg = ctx.cfg;
  auto G_n = [&cfg, R](int n) -> ForwardMap { return as_map(reduced_model(cfg, 0.5 * R * (n + 1))); };
  ConsistencyConfig cc;
  cc.n_list = cfg.run.n_list;
  cc.seed = cfg.run.seed + 4;
  cc.optimizer = optimizer(cfg);
  const auto rows = consistency_experiment(post, as_map(inv.G), G_n, inv.x_true, cc);
  {
    auto os = ctx.open("consistency.csv");
    write_consistency_csv(os, rows);
  }
  json detail = json::array();
  bool ok = true;
  for (const auto& r : rows) {
    detail.push_back(json{{"n", r.n},
                          {"radius", 0.5 * R * (r.n + 1)},
                          {"gap_Gn", r.gap_Gn},
                          {"gap_G", r.gap_G},
                          {"cm_norm", r.cm_norm},
                          {"cm_bound", r.cm_bound},
                          {"om_at_xn", r.om_at_xn},
                          {"om_at_truth", r.om_at_truth},
                          {"seed", r.seed},
                          {"status", r.status}});
    ok = ok && r.status.rfind("error", 0) != 0;
  }
  ctx.write_json("consistency.json", detail);
  if (!ok) throw SolverError("consistency: optimizer stall in at least one row");
}

bool selftest(std::ostream& out) {
  int failed = 0;
  auto check = [&](const char* name, bool ok) {
    out << (ok ? "PASS " : "FAIL ") << name << '\n';
    failed += ok ? 0 : 1;
  };
  check("specfun gamma(5) = 24", std::abs(specfun::gamma(5.0) - 24.0) < 1e-12);
  {
    const double x = 3.7;
    const double w = specfun::bessel_j(3, x) * specfun::bessel_y(2, x) - specfun::bessel_j(2, x) * specfun::bessel_y(3, x);
    check("specfun Bessel cross product", std::abs(w - 2.0 / (std::numbers::pi * x)) < 1e-12);
    check("specfun DtN imaginary part positive", specfun::dtn_coefficient(4, 2.0, 1.0).imag() > 0.0);
  }
  const Mesh mesh = build_disk_mesh(DiskMeshSpec{1.0, 0.2, {0.3, 0.6}, 0.0, 0.0});
  const RegionTags tags = mark_regions(mesh, 0.3, 0.6);
  check("geometry Omega nonempty", !tags.omega_triangles.empty());
  const FracForm form = assemble_fractional_form(mesh, tags, 0.75);
  {
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(form.matrix.rows());
    check("fraclap constants in kernel", (form.matrix * one).norm() <= 1e-10 * form.matrix.norm());
    check("fraclap symmetric", (form.matrix - form.matrix.transpose()).norm() <= 1e-12 * form.matrix.norm());
  }
  {
    ScattererConfig sc;
    sc.q_values.assign(tags.suppq_triangles.size(), 0.0);
    sc.k = 2.0;
    sc.omega_freq = 2.0;
    sc.tau_tilde = 0.0;
    const auto sys = assemble_loss_system(mesh, tags, sc, form, 16);
    check("forward_loss zero contrast gives zero field", solve_loss_system(sys).values.norm() == 0.0);
  }
  {
    const ContractionCheck cc = check_contraction_condition(0.01, 0.5, 1.0);
    check("forward_disp small-k contraction", cc.ok && cc.margin > 0.8);
  }
  {
    Eigen::VectorXd qt(3);
    qt << -0.5, 0.0, 1.0;
    check("inversion log transform round trip",
          (log_transform(inverse_log_transform(qt)) - qt).norm() < 1e-14);
  }
  {
    std::vector<Point2> pts{{0.0, 0.0}, {0.1, 0.2}};
    const GaussianMeasure m = make_prior(pts, 1.0, 0.5, 4);
    check("measures Cameron-Martin norm of the mean is zero", cameron_martin_norm(m, m.mean) == 0.0);
    check("measures Hellinger of identical Gaussians is zero", hellinger_gaussian_1d(0.3, 1.2, 0.3, 1.2) == 0.0);
  }
  return failed == 0;
}

int threads_from_env() {
  if (const char* env = std::getenv("FRACHELM_THREADS")) {
    try {
      return std::max(0, std::stoi(env));
    } catch (const std::exception&) {
      throw ConfigError("FRACHELM_THREADS: expected an integer");
    }
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fractional Helmholtz scattering and Bayesian inversion", "frachelm"};
  std::string command, config_path, output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("command", command, "Command to run")->required()->check(CLI::IsMember(kCommands));
  app.add_option("--config", config_path, "JSON experiment config");
  app.add_option("--seed", seed, "Override run.seed");
  app.add_option("--threads", threads, "Worker threads (0: runtime default)");
  app.add_option("--output", output_dir, "Override run.output_dir");
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  Context ctx;
  try {
    std::string text = "{}";
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) throw ConfigError("cannot read config file " + config_path);
      std::stringstream ss;
      ss << is.rdbuf();
      text = ss.str();
    } else if (command != "selftest") {
      throw ConfigError("--config is required for " + command);
    }
    ctx.cfg = parse_config(text);
    if (!ctx.cfg.run.command.empty() && ctx.cfg.run.command != command) {
      throw ConfigError("run.command is '" + ctx.cfg.run.command + "' but '" + command + "' was requested");
    }
    ctx.cfg.run.command = command;
    if (seed) ctx.cfg.run.seed = *seed;
    if (!output_dir.empty()) ctx.cfg.run.output_dir = output_dir;
    if (threads) {
      if (*threads < 0) throw ConfigError("--threads must be >= 0");
      ctx.cfg.run.threads = *threads;
    } else if (ctx.cfg.run.threads == 0) {
      ctx.cfg.run.threads = threads_from_env();
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }

#ifdef _OPENMP
  if (ctx.cfg.run.threads > 0) omp_set_num_threads(ctx.cfg.run.threads);
#endif

  if (command == "selftest") return selftest(out) ? 0 : 3;

  ctx.out_dir = ctx.cfg.run.output_dir;
  int code = 0;
  std::string error;
  try {
    fs::create_directories(ctx.out_dir);
    const std::map<std::string, std::function<void(Context&)>> table{
        {"forward-loss", cmd_forward_loss}, {"forward-disp", cmd_forward_disp},
        {"observe", cmd_observe},           {"bae-calibrate", cmd_bae},
        {"map", cmd_map},                   {"pcn", cmd_pcn},
        {"hellinger-probe", cmd_hellinger}, {"consistency", cmd_consistency}};
    table.at(command)(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "numerical error: " << e.what() << '\n';
    error = e.what();
    code = 3;
  }
  json manifest{{"program", "frachelm"},
                {"version", kVersion},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"command", command},
                {"config", to_json(ctx.cfg)},
                {"seeds",
                 {{"run", ctx.cfg.run.seed},
                  {"truth", ctx.cfg.physics.q.seed},
                  {"bae", ctx.cfg.run.seed + 1},
                  {"pcn", ctx.cfg.run.seed + 2},
                  {"hellinger", ctx.cfg.run.seed + 3},
                  {"consistency", ctx.cfg.run.seed + 4}}},
                {"outputs", ctx.outputs},
                {"summary", ctx.summary},
                {"exit_code", code}};
  if (code != 0) manifest["error"] = error;
  std::ofstream(ctx.out_dir / "manifest.json") << manifest.dump(2) << '\n';
  if (code == 0) out << "wrote " << ctx.outputs.size() << " files to " << ctx.out_dir.string() << '\n';
  return code;
}

}  // namespace frachelm::cli
