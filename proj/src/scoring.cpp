#include "xgp/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "xgp/error.hpp"
#include "xgp/io.hpp"
#include "xgp/models.hpp"
#include "xgp/optimize.hpp"

namespace xgp {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t step, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), purpose};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

void ForecastEnsemble::validate() const {
  if (samples.rows() < 2) throw ConfigError("a forecast ensemble needs at least 2 samples per cell");
  if (samples.cols() != targets.size()) throw ConfigError("ensemble columns must match the targets");
  if (!cell_ids.empty() && cell_ids.size() != cells()) throw ConfigError("cell ids must match the targets");
}

VectorXd crps_cells(const ForecastEnsemble& e) {
  e.validate();
  const auto n = e.samples.rows();
  const double dn = static_cast<double>(n);
  VectorXd out(e.targets.size());
  std::vector<double> x(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < e.samples.cols(); ++c) {
    for (Eigen::Index i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = e.samples(i, c);
    double abs_err = 0.0;
    for (double v : x) abs_err += std::abs(v - e.targets(c));
    // sum_{i<j} (x_(j) - x_(i)) = sum_k x_(k) (2k - n - 1) with 1-based ranks.
    std::sort(x.begin(), x.end());
    double pair = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      pair += x[static_cast<std::size_t>(k)] * (2.0 * static_cast<double>(k + 1) - dn - 1.0);
    }
    out(c) = abs_err / dn - pair / (dn * (dn - 1.0));
  }
  return out;
}

double crps(const ForecastEnsemble& e) { return crps_cells(e).mean(); }

VectorXd log_score_cells(const ForecastEnsemble& e) {
  e.validate();
  const double dn = static_cast<double>(e.samples.rows());
  VectorXd out(e.targets.size());
  for (Eigen::Index c = 0; c < e.samples.cols(); ++c) {
    const double m = e.samples.col(c).mean();
    const double var = (e.samples.col(c).array() - m).square().sum() / (dn - 1.0);
    if (!(var > 0.0)) {
      const std::string id = e.cell_ids.empty() ? std::to_string(c + 1) : e.cell_ids[static_cast<std::size_t>(c)];
      throw NumericalError("predictive ensemble for cell " + id + " has zero variance; log score undefined");
    }
    const double r = e.targets(c) - m;
    out(c) = 0.5 * r * r / var + 0.5 * std::log(var) + kHalfLog2Pi;
  }
  return out;
}

double log_score(const ForecastEnsemble& e) { return log_score_cells(e).mean(); }

VectorXd ensemble_medians(const ForecastEnsemble& e) {
  VectorXd out(e.samples.cols());
  for (Eigen::Index c = 0; c < e.samples.cols(); ++c) {
    out(c) = median_of(std::vector<double>(e.samples.col(c).data(), e.samples.col(c).data() + e.samples.rows()));
  }
  return out;
}

PointErrors rmse_mae(const ForecastEnsemble& e) {
  e.validate();
  const VectorXd r = ensemble_medians(e) - e.targets;
  return {std::sqrt(r.squaredNorm() / static_cast<double>(r.size())), r.cwiseAbs().mean()};
}

void export_pointwise_ll(const PosteriorDraws& draws, const std::filesystem::path& path) {
  if (draws.pointwise_ll.cols() != static_cast<Eigen::Index>(draws.observation_ids.size())) {
    throw ConfigError("pointwise log-likelihoods are not present in these draws");
  }
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index d = 0; d < draws.pointwise_ll.rows(); ++d) {
    std::vector<std::string> r;
    for (Eigen::Index k = 0; k < draws.pointwise_ll.cols(); ++k) r.push_back(io::format_double(draws.pointwise_ll(d, k)));
    rows.push_back(std::move(r));
  }
  io::write_csv(path, draws.observation_ids, rows);
}

void PrequentialPlan::validate() const {
  if (!std::isfinite(initial_train_end)) throw ConfigError("prequential.initial_train_end must be finite");
  if (!(step > 0.0)) throw ConfigError("prequential.step must be positive");
  if (!(horizon > 0.0)) throw ConfigError("prequential.horizon must be positive");
  if (n_steps == 0) throw ConfigError("prequential.n_steps must be at least 1");
}

std::string PrequentialResult::preferred(const std::string& criterion) const {
  std::string best;
  double best_v = std::numeric_limits<double>::infinity();
  for (const auto& p : pooled) {
    double v = 0.0;
    if (criterion == "CRPS") v = p.crps;
    else if (criterion == "LS") v = p.log_score;
    else if (criterion == "RMSE") v = p.rmse;
    else if (criterion == "MAE") v = p.mae;
    else throw ConfigError("unknown criterion " + criterion);
    if (std::isfinite(v) && v < best_v) {
      best_v = v;
      best = p.model;
    }
  }
  return best.empty() ? "-" : best;
}

std::string PrequentialResult::text_table() const {
  std::ostringstream os;
  const int w = 12;
  os << std::left << std::setw(10) << "Criterion";
  for (const auto& p : pooled) os << std::right << std::setw(w) << p.model;
  os << "  Preferred model\n";
  for (const std::string crit : {"CRPS", "LS", "RMSE", "MAE"}) {
    os << std::left << std::setw(10) << crit;
    for (const auto& p : pooled) {
      const double v = crit == "CRPS" ? p.crps : crit == "LS" ? p.log_score : crit == "RMSE" ? p.rmse : p.mae;
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(4) << v;
      os << std::right << std::setw(w) << (std::isfinite(v) ? cell.str() : std::string("NA"));
    }
    os << "  " << preferred(crit) << "\n";
  }
  os << "LS is the per-observation mean negative log predictive density (normal approximation).\n";
  return os.str();
}

std::vector<PooledScore> pool_scores(const std::vector<std::string>& models,
                                     const std::vector<StepScore>& steps) {
  std::vector<PooledScore> out;
  for (const auto& m : models) {
    PooledScore p;
    p.model = m;
    double crps_sum = 0.0, ls_sum = 0.0, mse_sum = 0.0, mae_sum = 0.0;
    std::size_t ls_cells = 0;
    for (const auto& s : steps) {
      if (s.model != m) continue;
      if (s.failed) {
        ++p.failed_steps;
        continue;
      }
      const double c = static_cast<double>(s.cells);
      p.cells += s.cells;
      crps_sum += c * s.crps;
      mse_sum += c * s.mse;
      mae_sum += c * s.mae;
      if (std::isfinite(s.log_score)) {
        ls_sum += c * s.log_score;
        ls_cells += s.cells;
      }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(p.cells);
    p.crps = p.cells ? crps_sum / n : nan;
    p.rmse = p.cells ? std::sqrt(mse_sum / n) : nan;
    p.mae = p.cells ? mae_sum / n : nan;
    p.log_score = ls_cells ? ls_sum / static_cast<double>(ls_cells) : nan;
    out.push_back(p);
  }
  return out;
}

ForecastEnsemble forecast_window(const Model& model, const MatrixXd& draws, const ProblemData& full,
                                 double train_end, double horizon, std::size_t ensemble_size,
                                 std::uint64_t seed) {
  if (draws.rows() == 0) throw ConfigError("no posterior draws to forecast from");
  ForecastEnsemble e;
  std::vector<TaskPoint> targets;
  if (const auto* s = std::get_if<TaskSeries>(&full)) {
    targets = s->observed_points_in(train_end, train_end + horizon);
    e.targets = s->values_at(targets);
    for (const auto& t : targets) e.cell_ids.push_back(s->task_ids[t.task] + "@" + s->label_of(t.time));
  } else {
    const MatrixXd& counts = std::holds_alternative<ChikvData>(full) ? std::get<ChikvData>(full).incidence
                                                                     : std::get<CovidData>(full).deaths;
    const auto& ids = std::holds_alternative<ChikvData>(full) ? std::get<ChikvData>(full).island_ids
                                                              : std::get<CovidData>(full).group_ids;
    std::vector<double> vals;
    for (Eigen::Index i = 0; i < counts.rows(); ++i) {
      for (Eigen::Index t = 1; t <= counts.cols(); ++t) {
        const double tt = static_cast<double>(t);
        if (tt <= train_end || tt > train_end + horizon) continue;
        targets.push_back({static_cast<std::size_t>(i), tt});
        vals.push_back(counts(i, t - 1));
        const auto u = static_cast<std::size_t>(i);
        e.cell_ids.push_back((u < ids.size() ? ids[u] : std::to_string(u + 1)) + "@" + std::to_string(t));
      }
    }
    e.targets = Eigen::Map<VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  }
  if (targets.empty()) throw DataError("no held-out observations after time " + io::format_double(train_end));
  std::mt19937_64 rng(seed);
  const auto n = static_cast<Eigen::Index>(std::max<std::size_t>(2, ensemble_size));
  e.samples.resize(n, static_cast<Eigen::Index>(targets.size()));
  for (Eigen::Index k = 0; k < n; ++k) {
    const VectorXd u = draws.row(k % draws.rows()).transpose();
    e.samples.row(k) = model.forecast(u, targets, rng).transpose();
  }
  return e;
}

namespace {

ProblemData training_window(const ProblemData& full, double train_end) {
  if (const auto* s = std::get_if<TaskSeries>(&full)) return s->until(train_end);
  const double w = std::floor(train_end);
  if (w < 1.0) throw DataError("training window must contain at least one time step");
  if (const auto* c = std::get_if<ChikvData>(&full)) return c->until(static_cast<std::size_t>(w));
  return std::get<CovidData>(full).until(static_cast<std::size_t>(w));
}

std::filesystem::path checkpoint_path(const PrequentialOptions& o, const std::string& model, std::size_t k) {
  return o.checkpoint_dir / (model + "_step" + std::to_string(k + 1) + ".json");
}

nlohmann::json to_json(const StepScore& s) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"model", s.model}, {"step", s.step}, {"train_end", s.train_end}, {"cells", s.cells},
          {"crps", num(s.crps)}, {"log_score", num(s.log_score)}, {"mse", num(s.mse)},
          {"mae", num(s.mae)}, {"failed", s.failed}, {"message", s.message}};
}

StepScore from_json(const nlohmann::json& j) {
  auto num = [&](const char* k) {
    return j.at(k).is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at(k).get<double>();
  };
  StepScore s;
  s.model = j.at("model").get<std::string>();
  s.step = j.at("step").get<std::size_t>();
  s.train_end = j.at("train_end").get<double>();
  s.cells = j.at("cells").get<std::size_t>();
  s.crps = num("crps");
  s.log_score = num("log_score");
  s.mse = num("mse");
  s.mae = num("mae");
  s.failed = j.at("failed").get<bool>();
  s.message = j.at("message").get<std::string>();
  return s;
}

StepScore run_step(const NamedSpec& m, const ProblemData& full, const PrequentialPlan& plan,
                   const SamplerConfig& sampler, const PrequentialOptions& opts, std::size_t k) {
  StepScore out;
  out.model = m.name;
  out.step = k + 1;
  out.train_end = plan.train_end(k);
  try {
    const auto train = training_window(full, out.train_end);
    const auto model = make_model(m.spec, train);
    MatrixXd draws;
    if (opts.method == "optimize") {
      const auto* g = dynamic_cast<const GaussianModel*>(model.get());
      if (!g) throw ConfigError("method 'optimize' applies to the gaussian likelihood only");
      draws = optimize_marginal(*g, opts.optimize_starts, derive_seed(opts.seed, k, 0)).u.transpose();
    } else if (opts.method == "hmc") {
      SamplerConfig cfg = sampler;
      cfg.seed = derive_seed(opts.seed, k, 0);
      cfg.pointwise = false;
      cfg.latents = false;
      draws = hmc_sample(*model, cfg).unconstrained;
    } else {
      throw ConfigError("unknown method '" + opts.method + "' (expected hmc or optimize)");
    }
    const auto ens = forecast_window(*model, draws, full, out.train_end, plan.horizon, opts.ensemble_size,
                                     derive_seed(opts.seed, k, 1));
    out.cells = ens.cells();
    out.crps = crps(ens);
    const auto pe = rmse_mae(ens);
    out.mse = pe.rmse * pe.rmse;
    out.mae = pe.mae;
    try {
      out.log_score = log_score(ens);
    } catch (const NumericalError& e) {
      out.log_score = std::numeric_limits<double>::quiet_NaN();
      out.message = e.what();
    }
  } catch (const Error& e) {
    out.failed = true;
    out.message = e.what();
  }
  return out;
}

}  // namespace

PrequentialResult prequential_run(const std::vector<NamedSpec>& models, const ProblemData& data,
                                  const PrequentialPlan& plan, const SamplerConfig& sampler,
                                  const PrequentialOptions& opts) {
  plan.validate();
  if (models.empty()) throw ConfigError("prequential run needs at least one model");
  PrequentialResult res;
  for (const auto& m : models) {
    if (std::find(res.models.begin(), res.models.end(), m.name) != res.models.end()) {
      throw ConfigError("duplicate model name '" + m.name + "'");
    }
    m.spec.validate();
    res.models.push_back(m.name);
  }
  if (!opts.checkpoint_dir.empty()) std::filesystem::create_directories(opts.checkpoint_dir);

  for (std::size_t k = 0; k < plan.n_steps; ++k) {
    for (const auto& m : models) {
      if (!opts.checkpoint_dir.empty() && opts.resume) {
        const auto path = checkpoint_path(opts, m.name, k);
        if (std::filesystem::exists(path)) {
          std::ifstream in(path);
          const auto j = nlohmann::json::parse(in, nullptr, false);
          if (!j.is_discarded()) {
            const auto s = from_json(j);
            if (s.train_end == plan.train_end(k)) {
              res.steps.push_back(s);
              continue;
            }
          }
        }
      }
      res.steps.push_back(run_step(m, data, plan, sampler, opts, k));
      if (!opts.checkpoint_dir.empty()) {
        const auto path = checkpoint_path(opts, m.name, k);
        const auto tmp = path.string() + ".tmp";
        {
          std::ofstream out(tmp);
          out << to_json(res.steps.back()).dump(2) << "\n";
        }
        std::filesystem::rename(tmp, path);
      }
    }
  }
  res.pooled = pool_scores(res.models, res.steps);
  return res;
}

}  // namespace xgp
