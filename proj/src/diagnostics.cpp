#include "xgp/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "xgp/error.hpp"

namespace xgp {

namespace {

double mean_of(const VectorXd& v) { return v.mean(); }

double sample_var(const VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

std::size_t common_length(const std::vector<VectorXd>& chains) {
  if (chains.empty()) throw ConfigError("no chains given");
  Eigen::Index n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  return static_cast<std::size_t>(n);
}

double classic_rhat(const std::vector<VectorXd>& chains) {
  const auto m = static_cast<double>(chains.size());
  const auto n = static_cast<double>(chains.front().size());
  VectorXd means(static_cast<Eigen::Index>(chains.size()));
  double w = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    means(static_cast<Eigen::Index>(c)) = mean_of(chains[c]);
    w += sample_var(chains[c]) / m;
  }
  const double b_over_n = sample_var(means);
  if (w <= 0.0) return b_over_n > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

}  // namespace

std::optional<double> split_rhat(const std::vector<VectorXd>& chains) {
  if (chains.size() < 2) return std::nullopt;
  const auto n = static_cast<Eigen::Index>(common_length(chains));
  const Eigen::Index half = n / 2;
  if (half < 2) return std::nullopt;
  std::vector<VectorXd> halves;
  for (const auto& c : chains) {
    halves.push_back(c.head(half));
    halves.push_back(c.segment(n - half, half));
  }
  return classic_rhat(halves);
}

double effective_sample_size(const std::vector<VectorXd>& input) {
  const auto n = static_cast<Eigen::Index>(common_length(input));
  const auto m = input.size();
  if (n < 4) return static_cast<double>(n * static_cast<Eigen::Index>(m));
  std::vector<VectorXd> chains;
  for (const auto& c : input) chains.push_back(c.head(n));

  VectorXd means(static_cast<Eigen::Index>(m)), vars(static_cast<Eigen::Index>(m));
  std::vector<VectorXd> centered;
  for (std::size_t c = 0; c < m; ++c) {
    means(static_cast<Eigen::Index>(c)) = chains[c].mean();
    centered.push_back(chains[c].array() - chains[c].mean());
    vars(static_cast<Eigen::Index>(c)) = sample_var(chains[c]);
  }
  const double dn = static_cast<double>(n);
  const double mean_var = vars.mean();
  double var_plus = mean_var * (dn - 1.0) / dn;
  if (m > 1) var_plus += sample_var(means);
  if (!(var_plus > 0.0)) return static_cast<double>(m) * dn;

  // Mean over chains of the (biased) lag-t autocovariance, computed lazily.
  auto mean_acov = [&](Eigen::Index t) {
    double s = 0.0;
    for (const auto& c : centered) s += c.head(n - t).dot(c.tail(n - t)) / dn;
    return s / static_cast<double>(m);
  };
  auto rho = [&](Eigen::Index t) { return 1.0 - (mean_var - mean_acov(t)) / var_plus; };

  std::vector<double> rho_hat(static_cast<std::size_t>(n), 0.0);
  double even = 1.0;
  double odd = rho(1);
  rho_hat[0] = even;
  rho_hat[1] = odd;
  Eigen::Index t = 1;
  while (t < n - 5 && even + odd > 0.0) {
    even = rho(t + 1);
    odd = rho(t + 2);
    if (even + odd >= 0.0) {
      rho_hat[static_cast<std::size_t>(t + 1)] = even;
      rho_hat[static_cast<std::size_t>(t + 2)] = odd;
    }
    t += 2;
  }
  const Eigen::Index max_t = t;
  if (even > 0.0 && max_t + 1 < n) rho_hat[static_cast<std::size_t>(max_t + 1)] = even;

  // Enforce a monotone sequence of pair sums.
  for (Eigen::Index k = 1; k <= max_t - 2; k += 2) {
    const auto u = static_cast<std::size_t>(k);
    if (rho_hat[u + 1] + rho_hat[u + 2] > rho_hat[u - 1] + rho_hat[u]) {
      rho_hat[u + 1] = (rho_hat[u - 1] + rho_hat[u]) / 2.0;
      rho_hat[u + 2] = rho_hat[u + 1];
    }
  }
  const double total = static_cast<double>(m) * dn;
  double tau = -1.0;
  for (Eigen::Index k = 0; k <= max_t && k < n; ++k) tau += 2.0 * rho_hat[static_cast<std::size_t>(k)];
  if (max_t + 1 < n) tau += rho_hat[static_cast<std::size_t>(max_t + 1)];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

std::vector<ParamDiagnostic> diagnostics(const PosteriorDraws& draws) {
  std::vector<ParamDiagnostic> out;
  for (std::size_t k = 0; k < draws.param_names.size(); ++k) {
    const auto chains = draws.by_chain(k);
    ParamDiagnostic d;
    d.name = draws.param_names[k];
    const VectorXd all = draws.params.col(static_cast<Eigen::Index>(k));
    d.mean = all.mean();
    d.sd = std::sqrt(sample_var(all));
    if (!chains.empty()) {
      d.ess = effective_sample_size(chains);
      d.rhat = split_rhat(chains);
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace xgp
