#include "xgp/hmc.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "xgp/error.hpp"
#include "xgp/linalg.hpp"

namespace xgp {

void SamplerConfig::validate() const {
  if (chains == 0) throw ConfigError("sampler.chains must be at least 1");
  if (thin == 0) throw ConfigError("sampler.thin must be at least 1");
  if (warmup >= iterations) {
    throw ConfigError("sampler.iterations (" + std::to_string(iterations) +
                      ") must exceed sampler.warmup (" + std::to_string(warmup) +
                      "); no post-warm-up draws would be kept");
  }
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw ConfigError("sampler.target_accept must lie in (0, 1)");
  }
  if (max_depth < 1 || max_depth > 20) throw ConfigError("sampler.max_depth must lie in [1, 20]");
}

std::vector<VectorXd> PosteriorDraws::by_chain(std::size_t column) const {
  std::vector<std::vector<double>> parts(chains);
  for (std::size_t d = 0; d < draws(); ++d) {
    parts[chain[d]].push_back(params(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(column)));
  }
  std::vector<VectorXd> out;
  for (auto& p : parts) {
    if (!p.empty()) out.push_back(Eigen::Map<VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())));
  }
  return out;
}

namespace {

constexpr double kMaxDeltaH = 1000.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct PhasePoint {
  VectorXd q, p, grad;
  double logp = -kInf;
};

class DualAveraging {
 public:
  void restart(double step) {
    mu_ = std::log(10.0 * step);
    counter_ = 0.0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }
  double learn(double accept_stat, double delta) {
    counter_ += 1.0;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / kGamma;
    const double x_eta = std::pow(counter_, -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }
  double final_step() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;
  double mu_ = 0.0, counter_ = 0.0, s_bar_ = 0.0, x_bar_ = 0.0;
};

// Warm-up schedule: a fast initial buffer, doubling slow windows in which the
// variance is estimated, then a final fast buffer.
class WindowedVariance {
 public:
  WindowedVariance(std::size_t warmup, std::size_t dim) : warmup_(warmup) {
    if (warmup < 20) {
      enabled_ = false;
      return;
    }
    if (init_buffer_ + base_window_ + term_buffer_ > warmup) {
      init_buffer_ = static_cast<std::size_t>(0.15 * static_cast<double>(warmup));
      term_buffer_ = static_cast<std::size_t>(0.1 * static_cast<double>(warmup));
      base_window_ = warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
    reset(dim);
  }

  // Returns true when `var` was updated at the end of a window.
  bool learn(VectorXd& var, const VectorXd& q) {
    if (!enabled_) return false;
    if (counter_ >= init_buffer_ && counter_ < warmup_ - term_buffer_ && counter_ != warmup_) add(q);
    if (counter_ == next_window_ && counter_ != warmup_) {
      compute_next_window();
      const double n = static_cast<double>(n_);
      var = m2_ / (n - 1.0);
      var = (n / (n + 5.0)) * var + VectorXd::Constant(var.size(), 1e-3 * (5.0 / (n + 5.0)));
      reset(var.size());
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  void add(const VectorXd& q) {
    ++n_;
    const VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(q - mean_);
  }
  void reset(Eigen::Index dim) {
    n_ = 0;
    mean_ = VectorXd::Zero(dim);
    m2_ = VectorXd::Zero(dim);
  }
  void compute_next_window() {
    const std::size_t last = warmup_ - term_buffer_ - 1;
    if (next_window_ == last) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != last && next_window_ + 2 * window_size_ >= warmup_ - term_buffer_) {
      next_window_ = last;
    }
  }

  std::size_t warmup_;
  bool enabled_ = true;
  std::size_t init_buffer_ = 75, term_buffer_ = 50, base_window_ = 25;
  std::size_t window_size_ = 0, next_window_ = 0, counter_ = 0;
  std::size_t n_ = 0;
  VectorXd mean_, m2_;
};

class Nuts {
 public:
  Nuts(const LogDensityFn& f, const SamplerConfig& cfg, std::mt19937_64& rng, Eigen::Index dim)
      : f_(f), cfg_(cfg), rng_(rng), inv_metric_(VectorXd::Ones(dim)) {}

  void set_state(const VectorXd& q) {
    z_.q = q;
    z_.logp = f_(q, &z_.grad);
    z_.p = VectorXd::Zero(q.size());
  }
  const PhasePoint& state() const { return z_; }
  VectorXd& inv_metric() { return inv_metric_; }
  double step = 1.0;

  struct Transition {
    double accept_stat = 0.0;
    bool divergent = false;
    int depth = 0;
    bool moved = false;
  };

  // Heuristic doubling/halving of the step until a single leapfrog step has
  // acceptance near 0.8.
  void init_step_size() {
    const PhasePoint start = z_;
    sample_momentum();
    double h0 = hamiltonian(z_);
    leapfrog(z_, step);
    double delta_h = h0 - hamiltonian(z_);
    const int direction = delta_h > std::log(0.8) ? 1 : -1;
    for (int it = 0; it < 100; ++it) {
      z_ = start;
      sample_momentum();
      h0 = hamiltonian(z_);
      leapfrog(z_, step);
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = kInf;
      delta_h = h0 - h;
      if (direction == 1 && !(delta_h > std::log(0.8))) break;
      if (direction == -1 && !(delta_h < std::log(0.8))) break;
      step = direction == 1 ? 2.0 * step : 0.5 * step;
      if (step > 1e7) throw NumericalError("step size diverged during initialization; the posterior may be improper");
      if (step == 0.0) throw NumericalError("step size collapsed to zero during initialization");
    }
    z_ = start;
  }

  Transition transition() {
    Transition out;
    sample_momentum();
    const PhasePoint start = z_;
    PhasePoint z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;

    VectorXd p_fwd_fwd = z_.p, p_fwd_bck = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
    VectorXd ps_fwd_fwd = sharp(z_.p), ps_fwd_bck = ps_fwd_fwd, ps_bck_fwd = ps_fwd_fwd,
             ps_bck_bck = ps_fwd_fwd;
    VectorXd rho = z_.p;
    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_);
    n_leapfrog_ = 0;
    sum_metro_ = 0.0;
    divergent_ = false;
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    int depth = 0;
    while (depth < cfg_.max_depth) {
      VectorXd rho_fwd = VectorXd::Zero(rho.size()), rho_bck = VectorXd::Zero(rho.size());
      bool valid = false;
      double lsw_subtree = -kInf;
      if (unif(rng_) > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        ps_bck_fwd = ps_fwd_bck;
        valid = build_tree(depth, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd,
                           h0, 1.0, lsw_subtree);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        ps_fwd_bck = ps_bck_fwd;
        valid = build_tree(depth, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck,
                           h0, -1.0, lsw_subtree);
        z_bck = z_;
      }
      if (!valid) break;
      ++depth;
      if (lsw_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (unif(rng_) < std::exp(lsw_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = criterion(ps_bck_bck, ps_fwd_fwd, rho);
      persist = persist && criterion(ps_bck_bck, ps_fwd_bck, rho_bck + p_fwd_bck);
      persist = persist && criterion(ps_bck_fwd, ps_fwd_fwd, rho_fwd + p_bck_fwd);
      if (!persist) break;
    }
    out.depth = depth;
    out.divergent = divergent_;
    out.accept_stat = n_leapfrog_ > 0 ? sum_metro_ / static_cast<double>(n_leapfrog_) : 0.0;
    out.moved = z_sample.q != start.q;
    z_ = z_sample;
    return out;
  }

 private:
  VectorXd sharp(const VectorXd& p) const { return inv_metric_.cwiseProduct(p); }

  static bool criterion(const VectorXd& ps_minus, const VectorXd& ps_plus, const VectorXd& rho) {
    return ps_plus.dot(rho) > 0.0 && ps_minus.dot(rho) > 0.0;
  }

  void sample_momentum() {
    std::normal_distribution<double> n01(0.0, 1.0);
    z_.p.resize(z_.q.size());
    for (Eigen::Index k = 0; k < z_.p.size(); ++k) z_.p(k) = n01(rng_) / std::sqrt(inv_metric_(k));
  }

  double hamiltonian(const PhasePoint& z) const {
    return -z.logp + 0.5 * z.p.dot(inv_metric_.cwiseProduct(z.p));
  }

  void leapfrog(PhasePoint& z, double eps) const {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * inv_metric_.cwiseProduct(z.p);
    z.logp = f_(z.q, &z.grad);
    z.p += 0.5 * eps * z.grad;
  }

  bool build_tree(int depth, PhasePoint& z_propose, VectorXd& ps_beg, VectorXd& ps_end,
                  VectorXd& rho, VectorXd& p_beg, VectorXd& p_end, double h0, double sign,
                  double& log_sum_weight) {
    if (depth == 0) {
      leapfrog(z_, sign * step);
      ++n_leapfrog_;
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = kInf;
      if (h - h0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_ += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      ps_beg = sharp(z_.p);
      ps_end = ps_beg;
      rho += z_.p;
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    const auto dim = rho.size();
    VectorXd ps_left_end(dim), p_left_end(dim);
    VectorXd rho_left = VectorXd::Zero(dim);
    double lsw_left = -kInf;
    if (!build_tree(depth - 1, z_propose, ps_beg, ps_left_end, rho_left, p_beg, p_left_end, h0, sign,
                    lsw_left)) {
      return false;
    }
    PhasePoint z_propose_right = z_;
    VectorXd ps_right_beg(dim), p_right_beg(dim);
    VectorXd rho_right = VectorXd::Zero(dim);
    double lsw_right = -kInf;
    if (!build_tree(depth - 1, z_propose_right, ps_right_beg, ps_end, rho_right, p_right_beg, p_end,
                    h0, sign, lsw_right)) {
      return false;
    }

    const double lsw_subtree = log_sum_exp(lsw_left, lsw_right);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (lsw_right > lsw_subtree) {
      z_propose = z_propose_right;
    } else if (unif(rng_) < std::exp(lsw_right - lsw_subtree)) {
      z_propose = z_propose_right;
    }

    const VectorXd rho_subtree = rho_left + rho_right;
    rho += rho_subtree;
    bool persist = criterion(ps_beg, ps_end, rho_subtree);
    persist = persist && criterion(ps_beg, ps_right_beg, rho_left + p_right_beg);
    persist = persist && criterion(ps_left_end, ps_end, rho_right + p_left_end);
    return persist;
  }

  const LogDensityFn& f_;
  const SamplerConfig& cfg_;
  std::mt19937_64& rng_;
  VectorXd inv_metric_;
  PhasePoint z_;
  std::size_t n_leapfrog_ = 0;
  double sum_metro_ = 0.0;
  bool divergent_ = false;
};

// Independent streams per (seed, chain, purpose); purpose 0 draws initial
// points, purpose 1 drives the transitions.
std::mt19937_64 chain_rng(std::uint64_t seed, std::size_t chain, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain), purpose};
  return std::mt19937_64(seq);
}

}  // namespace

ChainOutput run_nuts_chain(const LogDensityFn& log_density, const VectorXd& init,
                           const SamplerConfig& config, std::size_t chain) {
  config.validate();
  auto rng = chain_rng(config.seed, chain, 1);
  Nuts nuts(log_density, config, rng, init.size());
  nuts.set_state(init);
  if (!std::isfinite(nuts.state().logp)) throw NumericalError("log density is not finite at the initial point");
  nuts.init_step_size();

  DualAveraging da;
  da.restart(nuts.step);
  WindowedVariance windows(config.warmup, init.size());

  const std::size_t kept = (config.iterations - config.warmup + config.thin - 1) / config.thin;
  ChainOutput out;
  out.draws.resize(static_cast<Eigen::Index>(kept), init.size());
  out.logdens.resize(static_cast<Eigen::Index>(kept));
  out.stats.chain = chain;
  double accept_sum = 0.0;
  Eigen::Index row = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto tr = nuts.transition();
    if (it < config.warmup) {
      nuts.step = da.learn(tr.accept_stat, config.target_accept);
      if (config.adapt_metric && windows.learn(nuts.inv_metric(), nuts.state().q)) {
        nuts.init_step_size();
        da.restart(nuts.step);
      }
      if (it + 1 == config.warmup) nuts.step = da.final_step();
      continue;
    }
    accept_sum += tr.accept_stat;
    if (tr.divergent) ++out.stats.divergences;
    if (tr.depth >= config.max_depth) ++out.stats.max_depth_hits;
    if (tr.moved) ++out.stats.moves;
    if ((it - config.warmup) % config.thin == 0) {
      out.draws.row(row) = nuts.state().q.transpose();
      out.logdens(row) = nuts.state().logp;
      ++row;
    }
  }
  const double post = static_cast<double>(config.iterations - config.warmup);
  out.stats.mean_accept = accept_sum / post;
  out.stats.step_size = nuts.step;
  out.stats.inv_metric.assign(nuts.inv_metric().data(), nuts.inv_metric().data() + init.size());
  if (out.stats.moves == 0) {
    out.stats.failed = true;
    out.stats.message = "chain " + std::to_string(chain + 1) + " rejected every post-warm-up transition";
  }
  return out;
}

PosteriorDraws hmc_sample(const Model& model, const SamplerConfig& config) {
  config.validate();
  const LogDensityFn fn = [&model](const VectorXd& u, VectorXd* g) { return model.log_density(u, g); };

  std::vector<VectorXd> inits(config.chains);
  for (std::size_t c = 0; c < config.chains; ++c) {
    auto rng = chain_rng(config.seed, c, 0);
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      inits[c] = model.initial_point(rng, config.init_shrink);
      found = std::isfinite(model.log_density(inits[c]));
    }
    if (!found) {
      throw NumericalError("no finite initial point found for chain " + std::to_string(c + 1) +
                           " after 100 prior draws");
    }
  }

  std::vector<ChainOutput> outputs(config.chains);
  std::vector<std::vector<VectorXd>> pointwise(config.chains);
  std::vector<std::vector<std::vector<LatentQuantity>>> latents(config.chains);
  std::vector<std::exception_ptr> errors(config.chains);
  auto work = [&](std::size_t c) {
    try {
      outputs[c] = run_nuts_chain(fn, inits[c], config, c);
      const auto& d = outputs[c].draws;
      for (Eigen::Index r = 0; r < d.rows(); ++r) {
        const VectorXd u = d.row(r).transpose();
        if (config.pointwise) pointwise[c].push_back(model.pointwise_loglik(u));
        if (config.latents) latents[c].push_back(model.latent_quantities(u));
      }
    } catch (const NumericalError& e) {
      outputs[c] = ChainOutput{};
      outputs[c].draws.resize(0, static_cast<Eigen::Index>(model.dim()));
      outputs[c].stats.chain = c;
      outputs[c].stats.failed = true;
      outputs[c].stats.message = "chain " + std::to_string(c + 1) + " failed: " + e.what();
      pointwise[c].clear();
      latents[c].clear();
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t c = 0; c < config.chains; ++c) threads.emplace_back(work, c);
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  PosteriorDraws out;
  out.chains = config.chains;
  out.param_names = model.output_names();
  out.observation_ids = model.observation_ids();
  std::size_t total = 0, failed = 0;
  for (const auto& o : outputs) {
    total += static_cast<std::size_t>(o.draws.rows());
    out.chain_stats.push_back(o.stats);
    if (o.stats.failed) {
      ++failed;
      out.warnings.push_back(o.stats.message);
    }
    const double post = static_cast<double>(config.iterations - config.warmup);
    if (static_cast<double>(o.stats.divergences) > 0.1 * post) {
      std::ostringstream os;
      os << "chain " << o.stats.chain + 1 << ": " << o.stats.divergences << " of " << post
         << " post-warm-up transitions diverged (more than 10%)";
      out.warnings.push_back(os.str());
    }
  }
  if (failed == config.chains) {
    std::string msg = "every chain failed:";
    for (const auto& o : outputs) msg += " [" + o.stats.message + "]";
    throw NumericalError(msg);
  }

  const auto n_out = static_cast<Eigen::Index>(out.param_names.size());
  const auto n_obs = static_cast<Eigen::Index>(out.observation_ids.size());
  out.params.resize(static_cast<Eigen::Index>(total), n_out);
  out.unconstrained.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(model.dim()));
  out.logdens.resize(static_cast<Eigen::Index>(total));
  if (config.pointwise) out.pointwise_ll.resize(static_cast<Eigen::Index>(total), n_obs);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < config.chains; ++c) {
    const auto& o = outputs[c];
    for (Eigen::Index r = 0; r < o.draws.rows(); ++r, ++row) {
      const VectorXd u = o.draws.row(r).transpose();
      out.unconstrained.row(row) = u.transpose();
      out.params.row(row) = model.outputs(u).transpose();
      out.logdens(row) = o.logdens(r);
      out.chain.push_back(c);
      if (config.pointwise) out.pointwise_ll.row(row) = pointwise[c][static_cast<std::size_t>(r)].transpose();
      if (config.latents) out.latent_draws.push_back(std::move(latents[c][static_cast<std::size_t>(r)]));
    }
  }
  return out;
}

}  // namespace xgp
