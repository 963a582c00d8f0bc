#include "xgp/optimize.hpp"

#include <cmath>
#include <deque>
#include <random>
#include <sstream>

#include "xgp/error.hpp"
#include "xgp/linalg.hpp"

namespace xgp {

LbfgsResult lbfgs_maximize(const LogDensityFn& f, const VectorXd& x0, const LbfgsOptions& opts) {
  // Minimize g = -f.
  LbfgsResult res;
  res.x = x0;
  VectorXd grad;
  double fx = f(res.x, &grad);
  if (!std::isfinite(fx) || !grad.allFinite()) {
    res.status = "nonfinite_start";
    res.value = fx;
    return res;
  }
  VectorXd g = -grad;
  double val = -fx;
  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  int stalled = 0;

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    if (g.lpNorm<Eigen::Infinity>() < opts.gradient_tol) {
      res.status = "converged";
      break;
    }
    // Two-loop recursion for the search direction.
    VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(q);
      q += (alpha[k] - beta) * s_hist[k];
    }
    VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // Backtracking line search with the Armijo condition.
    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(1e-12, g.lpNorm<Eigen::Infinity>())) : 1.0;
    VectorXd x_new, grad_new;
    double val_new = 0.0;
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = res.x + step * dir;
      const double f_new = f(x_new, &grad_new);
      val_new = -f_new;
      if (std::isfinite(f_new) && grad_new.allFinite() && val_new <= val + 1e-4 * step * slope) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) {
      // A stalled search at a numerically flat point still counts when the
      // gradient is already tiny.
      res.status = g.lpNorm<Eigen::Infinity>() < std::sqrt(opts.gradient_tol) ? "converged" : "line_search_failed";
      break;
    }
    const VectorXd g_new = -grad_new;
    const VectorXd s = x_new - res.x;
    const VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > opts.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double change = val - val_new;
    res.x = x_new;
    g = g_new;
    val = val_new;
    // Stagnation just above the gradient tolerance: accept once the
    // objective has stopped moving for several iterations.
    stalled = change <= opts.value_tol * std::max(1.0, std::abs(val)) ? stalled + 1 : 0;
    if (stalled >= 10 && g.lpNorm<Eigen::Infinity>() < std::sqrt(opts.gradient_tol)) {
      res.status = "converged";
      ++res.iterations;
      break;
    }
  }
  if (res.status.empty()) res.status = "max_iterations";
  res.value = -val;
  res.gradient_norm = g.lpNorm<Eigen::Infinity>();
  return res;
}

OptimizeResult optimize_marginal(const GaussianModel& model, std::size_t starts, std::uint64_t seed,
                                 const LbfgsOptions& opts) {
  if (model.spec().latent_state) {
    throw ConfigError("optimize_marginal needs the marginalized model (latent_state = false)");
  }
  if (starts == 0) throw ConfigError("optimize_marginal needs at least one start");
  const LogDensityFn fn = [&model](const VectorXd& u, VectorXd* g) {
    return model.log_density(u, g, DensityTerms{false, false});
  };
  std::mt19937_64 rng(seed);
  OptimizeResult out;
  out.names = model.output_names();
  int best = -1;
  for (std::size_t s = 0; s < starts; ++s) {
    const VectorXd u0 = model.initial_point(rng, s == 0 ? 0.1 : 1.0);
    out.start_points.push_back(u0);
    out.starts.push_back(lbfgs_maximize(fn, u0, opts));
    const auto& r = out.starts.back();
    if (r.converged() && (best < 0 || r.value > out.starts[static_cast<std::size_t>(best)].value)) {
      best = static_cast<int>(s);
    }
  }
  if (best < 0) {
    std::ostringstream os;
    os << "all " << starts << " optimization starts failed:";
    for (std::size_t s = 0; s < out.starts.size(); ++s) {
      const auto& r = out.starts[s];
      os << " [start " << s + 1 << ": " << r.status << " after " << r.iterations
         << " iterations, log marginal " << r.value << ", |grad| " << r.gradient_norm << "]";
    }
    throw NumericalError(os.str());
  }
  const auto& r = out.starts[static_cast<std::size_t>(best)];
  out.u = r.x;
  out.log_marginal = r.value;
  out.outputs = model.outputs(r.x);
  return out;
}

void reconstruct_latents(PosteriorDraws& draws, const GaussianModel& model, std::uint64_t seed) {
  if (model.spec().latent_state) {
    throw ConfigError("latent paths are already part of the sampler state");
  }
  std::mt19937_64 rng(seed);
  const auto& data = model.data();
  const auto p = data.tasks();
  const auto full = stacked_points(model.grid(), p);
  draws.latent_draws.assign(draws.draws(), {});
  draws.latent_failures = 0;
  for (std::size_t d = 0; d < draws.draws(); ++d) {
    try {
      const VectorXd theta = model.constrain(draws.unconstrained.row(static_cast<Eigen::Index>(d)).transpose());
      const auto s = model.structure(theta);
      const auto cond = condition_on_observations(model.y(), model.points(), full, s,
                                                  {model.sigma_y(theta)}, false);
      const VectorXd x = sample_gaussian(cond, 1, rng).row(0).transpose();
      const auto n = static_cast<Eigen::Index>(model.grid().size());
      MatrixXd xm(static_cast<Eigen::Index>(p), n);
      for (Eigen::Index i = 0; i < xm.rows(); ++i) xm.row(i) = x.segment(i * n, n).transpose();
      std::vector<LatentQuantity> q{{"x", data.task_ids, data.times, xm}};
      if (s.has_mean_process()) {
        const auto post = posterior_m(x, s, model.grid(), p);
        q.push_back({"mu", {"mean"}, data.times, sample_gaussian(post, 1, rng)});
      }
      draws.latent_draws[d] = std::move(q);
    } catch (const Error&) {
      ++draws.latent_failures;
    }
  }
}

}  // namespace xgp
