#include "xgp/cli.hpp"

#include <CLI11.hpp>
#include <boost/version.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "xgp/diagnostics.hpp"
#include "xgp/error.hpp"
#include "xgp/models.hpp"
#include "xgp/optimize.hpp"
#include "xgp/scoring.hpp"
#include "xgp/sde.hpp"
#include "xgp/simulate.hpp"

namespace xgp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Independent stream per purpose so that adding one consumer never shifts
// another.
std::uint64_t sub_seed(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose, 0x636c69u};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

enum SeedPurpose : std::uint32_t { kSeedSampler = 1, kSeedLatent = 2, kSeedForecast = 3, kSeedSimulate = 4 };

json read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    json j = json::parse(in, nullptr, true, true);
    if (!j.is_object()) throw ConfigError("config file " + path.string() + " must hold a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

json versions() {
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION;
  std::ostringstream njson;
  njson << NLOHMANN_JSON_VERSION_MAJOR << "." << NLOHMANN_JSON_VERSION_MINOR << "." << NLOHMANN_JSON_VERSION_PATCH;
  return {{"xgp", kVersion},
          {"eigen", eigen.str()},
          {"boost", BOOST_LIB_VERSION},
          {"nlohmann_json", njson.str()},
          {"compiler", __VERSION__}};
}

class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".xgp.lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
      throw ConfigError("output directory " + dir.string() + " is locked by another run (remove " +
                        path_.string() + " if no run is active)");
    }
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

struct Run {
  std::string command;
  json config;
  fs::path base;
  fs::path out;
  std::uint64_t seed = 1;
  std::vector<std::string> outputs;
  json extra = json::object();

  void record(const fs::path& file) { outputs.push_back(file.filename().string()); }
};

std::string fmt(double v) { return io::format_double(v); }

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------- fit

struct Fitted {
  LoadedData data;
  ModelSpec spec;
  std::unique_ptr<Model> model;
};

Fitted build_model(json& config, const fs::path& base) {
  Fitted f;
  Section d(config["data"], "data");
  f.data = load_data(d, base);
  const auto kind = d.text("kind");
  d.finish();
  Section m(config["model"], "model");
  f.spec = read_model(m, likelihood_of(kind));
  m.finish();
  f.model = make_model(f.spec, f.data.data);
  return f;
}

const GaussianModel* marginal_gaussian(const Fitted& f) {
  if (f.spec.likelihood != LikelihoodKind::Gaussian || f.spec.latent_state) return nullptr;
  return dynamic_cast<const GaussianModel*>(f.model.get());
}

std::vector<std::size_t> draw_index_in_chain(const PosteriorDraws& d) {
  std::vector<std::size_t> out(d.draws());
  std::map<std::size_t, std::size_t> seen;
  for (std::size_t k = 0; k < d.draws(); ++k) out[k] = ++seen[d.chain[k]];
  return out;
}

void write_draws(const fs::path& path, const PosteriorDraws& d, const std::vector<std::string>& names,
                 const MatrixXd& values, bool with_lp) {
  std::vector<std::string> header{"chain", "draw"};
  if (with_lp) header.push_back("lp__");
  header.insert(header.end(), names.begin(), names.end());
  const auto idx = draw_index_in_chain(d);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < d.draws(); ++k) {
    std::vector<std::string> r{std::to_string(d.chain[k] + 1), std::to_string(idx[k])};
    if (with_lp) r.push_back(fmt(d.logdens(static_cast<Eigen::Index>(k))));
    for (Eigen::Index c = 0; c < values.cols(); ++c) r.push_back(fmt(values(static_cast<Eigen::Index>(k), c)));
    rows.push_back(std::move(r));
  }
  io::write_csv(path, header, rows);
}

void write_summary(const fs::path& path, const PosteriorDraws& d, const std::vector<ParamDiagnostic>& diag) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t c = 0; c < d.param_names.size(); ++c) {
    const auto col = d.params.col(static_cast<Eigen::Index>(c));
    std::vector<double> v(col.data(), col.data() + col.size());
    rows.push_back({d.param_names[c], fmt(diag[c].mean), fmt(diag[c].sd), fmt(quantile(v, 0.5)),
                    fmt(quantile(v, 0.025)), fmt(quantile(v, 0.25)), fmt(quantile(v, 0.75)),
                    fmt(quantile(v, 0.975)), fmt(diag[c].ess),
                    diag[c].rhat ? fmt(*diag[c].rhat) : std::string("NA")});
  }
  io::write_csv(path, {"parameter", "mean", "sd", "median", "q025", "q25", "q75", "q975", "ess", "rhat"}, rows);
}

json diagnostics_json(const PosteriorDraws& d, const std::vector<ParamDiagnostic>& diag) {
  json params = json::array();
  for (const auto& p : diag) {
    params.push_back({{"name", p.name}, {"mean", num(p.mean)}, {"sd", num(p.sd)}, {"ess", num(p.ess)},
                      {"rhat", p.rhat ? num(*p.rhat) : json(nullptr)}});
  }
  json chains = json::array();
  for (const auto& c : d.chain_stats) {
    chains.push_back({{"chain", c.chain + 1},
                      {"step_size", num(c.step_size)},
                      {"divergences", c.divergences},
                      {"max_depth_hits", c.max_depth_hits},
                      {"mean_accept", num(c.mean_accept)},
                      {"moves", c.moves},
                      {"inv_metric", c.inv_metric},
                      {"failed", c.failed},
                      {"message", c.message}});
  }
  return {{"draws", d.draws()},
          {"chains", d.chains},
          {"parameters", params},
          {"chain_stats", chains},
          {"latent_failures", d.latent_failures},
          {"warnings", d.warnings}};
}

// Pointwise quantiles of every latent quantity over the draws that produced
// one.
void write_plot_data(const fs::path& path, const PosteriorDraws& d, const LoadedData& data) {
  std::vector<std::vector<std::string>> rows;
  const std::vector<LatentQuantity>* first = nullptr;
  for (const auto& q : d.latent_draws)
    if (!q.empty()) {
      first = &q;
      break;
    }
  if (first) {
    for (std::size_t qi = 0; qi < first->size(); ++qi) {
      const auto& shape = (*first)[qi];
      for (Eigen::Index i = 0; i < shape.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < shape.values.cols(); ++j) {
          std::vector<double> v;
          for (const auto& q : d.latent_draws) {
            if (q.size() > qi && q[qi].values.rows() == shape.values.rows() &&
                q[qi].values.cols() == shape.values.cols()) {
              v.push_back(q[qi].values(i, j));
            }
          }
          const auto ui = static_cast<std::size_t>(i);
          rows.push_back({shape.name, ui < shape.row_ids.size() ? shape.row_ids[ui] : std::to_string(ui + 1),
                          data.label(shape.times[static_cast<std::size_t>(j)]), fmt(quantile(v, 0.5)),
                          fmt(quantile(v, 0.025)), fmt(quantile(v, 0.25)), fmt(quantile(v, 0.75)),
                          fmt(quantile(v, 0.975))});
        }
      }
    }
  }
  io::write_csv(path, {"quantity", "task_id", "time", "median", "q025", "q25", "q75", "q975"}, rows);
}

void cmd_fit(Run& run, std::ostream& log) {
  Fitted f = build_model(run.config, run.base);
  Section s(run.config["sampler"], "sampler");
  SamplerConfig cfg = read_sampler(s, sub_seed(run.seed, kSeedSampler));
  s.finish();
  Section fs_(run.config["fit"], "fit");
  const bool latents = fs_.flag("latents", true);
  fs_.finish();
  const auto* gm = marginal_gaussian(f);
  cfg.pointwise = true;
  cfg.latents = latents && gm == nullptr;

  log << "fit: " << to_string(f.spec.variant) << ", " << f.model->dim() << " unconstrained parameters, "
      << cfg.chains << " chains x " << cfg.iterations << " iterations\n";
  PosteriorDraws draws = hmc_sample(*f.model, cfg);
  if (latents && gm) reconstruct_latents(draws, *gm, sub_seed(run.seed, kSeedLatent));
  for (const auto& w : draws.warnings) log << "warning: " << w << "\n";

  const auto diag = diagnostics(draws);
  auto out = [&](const std::string& name) {
    const auto p = run.out / name;
    run.record(p);
    return p;
  };
  write_draws(out("draws.csv"), draws, draws.param_names, draws.params, true);
  write_draws(out("unconstrained.csv"), draws, f.model->layout().entry_names(true), draws.unconstrained, false);
  write_summary(out("summary.csv"), draws, diag);
  write_json(out("diagnostics.json"), diagnostics_json(draws, diag));
  export_pointwise_ll(draws, out("pointwise_ll.csv"));
  write_plot_data(out("plot_data.csv"), draws, f.data);
}

// ---------------------------------------------------------------- predict

MatrixXd read_unconstrained(const fs::path& path, std::size_t dim) {
  const auto t = io::read_csv(path);
  if (t.header.size() != dim + 2) {
    throw DataError("file " + path.string() + " has " + std::to_string(t.header.size() - 2) +
                    " parameter columns, the model needs " + std::to_string(dim));
  }
  MatrixXd out(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < dim; ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = io::parse_double(t.rows[r][c + 2], t, r, t.header[c + 2]);
  return out;
}

void cmd_predict(Run& run, std::ostream& log) {
  Section p(run.config["predict"], "predict");
  const auto run_dir = p.path("run", run.base);
  const auto horizon = p.count("horizon", 1);
  const auto ensemble = p.count("ensemble_size", 0);
  const bool raw = p.flag("raw_ensemble", false);
  p.finish();

  const auto manifest_path = run_dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw ConfigError("no fitted run at " + run_dir.string() + " (manifest.json missing)");
  json fit_manifest = read_config(manifest_path);
  if (fit_manifest.value("command", "") != "fit") throw ConfigError(run_dir.string() + " is not a fit run");
  json fit_config = fit_manifest["config"];
  Fitted f = build_model(fit_config, run_dir);
  run.extra["fit_config"] = fit_config;
  const MatrixXd draws = read_unconstrained(run_dir / "unconstrained.csv", f.model->dim());
  if (draws.rows() == 0) throw DataError("fitted run has no draws");

  std::vector<TaskPoint> targets;
  std::vector<std::string> task_ids;
  if (const auto* s = std::get_if<TaskSeries>(&f.data.data)) {
    task_ids = s->task_ids;
    const double last = s->times.back();
    const double step = s->times.size() > 1 ? last - s->times[s->times.size() - 2] : 1.0;
    for (std::size_t i = 0; i < s->tasks(); ++i)
      for (std::size_t k = 1; k <= horizon; ++k) targets.push_back({i, last + static_cast<double>(k) * step});
  } else {
    const bool chikv = std::holds_alternative<ChikvData>(f.data.data);
    const auto& ids = chikv ? std::get<ChikvData>(f.data.data).island_ids : std::get<CovidData>(f.data.data).group_ids;
    const std::size_t t_obs = chikv ? std::get<ChikvData>(f.data.data).weeks() : std::get<CovidData>(f.data.data).days();
    if (chikv) {
      const auto covered = std::get<ChikvData>(f.data.data).config.covered_weeks();
      if (t_obs + horizon > covered) {
        throw DataError("forecast horizon of " + std::to_string(horizon) + " weeks needs precipitation through week " +
                        std::to_string(t_obs + horizon) + ", but the precipitation file covers " +
                        std::to_string(covered) + " weeks");
      }
    }
    task_ids = ids;
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t k = 1; k <= horizon; ++k) targets.push_back({i, static_cast<double>(t_obs + k)});
  }

  const auto n = static_cast<Eigen::Index>(ensemble == 0 ? static_cast<std::uint64_t>(draws.rows()) : ensemble);
  MatrixXd samples(n, static_cast<Eigen::Index>(targets.size()));
  if (!targets.empty()) {
    std::mt19937_64 rng(sub_seed(run.seed, kSeedForecast));
    for (Eigen::Index k = 0; k < n; ++k) {
      const VectorXd u = draws.row(k % draws.rows()).transpose();
      samples.row(k) = f.model->forecast(u, targets, rng).transpose();
    }
  }
  log << "predict: " << targets.size() << " cells, " << n << " ensemble members\n";

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> cell_ids;
  for (std::size_t c = 0; c < targets.size(); ++c) {
    const auto col = samples.col(static_cast<Eigen::Index>(c));
    std::vector<double> v(col.data(), col.data() + col.size());
    const auto label = f.data.label(targets[c].time);
    cell_ids.push_back(task_ids[targets[c].task] + "@" + label);
    rows.push_back({task_ids[targets[c].task], label, fmt(col.mean()), fmt(quantile(v, 0.5)), fmt(quantile(v, 0.025)),
                    fmt(quantile(v, 0.25)), fmt(quantile(v, 0.75)), fmt(quantile(v, 0.975))});
  }
  const auto path = run.out / "forecast.csv";
  io::write_csv(path, {"task_id", "time", "mean", "median", "q025", "q25", "q75", "q975"}, rows);
  run.record(path);
  if (raw) {
    std::vector<std::vector<std::string>> er;
    for (Eigen::Index k = 0; k < samples.rows(); ++k) {
      std::vector<std::string> r;
      for (Eigen::Index c = 0; c < samples.cols(); ++c) r.push_back(fmt(samples(k, c)));
      er.push_back(std::move(r));
    }
    const auto epath = run.out / "forecast_ensemble.csv";
    io::write_csv(epath, cell_ids, er);
    run.record(epath);
  }
}

// ---------------------------------------------------------------- prequential

double plan_time(Section& s, const std::string& key, const LoadedData& data) {
  auto& v = s.raw(key);
  if (v.is_string()) {
    const auto str = v.get<std::string>();
    if (!data.axis.dates || !io::is_iso_date(str)) {
      throw ConfigError(s.name() + "." + key + " must be a number, or an ISO date for dated series");
    }
    return data.model_time(data.axis.parse(str));
  }
  return data.model_time(s.number(key));
}

void cmd_prequential(Run& run, std::ostream& log, bool resume) {
  Section d(run.config["data"], "data");
  const LoadedData data = load_data(d, run.base);
  const auto kind = d.text("kind");
  d.finish();
  const json base_model = run.config["model"].is_null() ? json::object() : run.config["model"];
  if (!base_model.is_object()) throw ConfigError("config section 'model' must be an object");

  Section p(run.config["prequential"], "prequential");
  auto& models_json = p.raw("models");
  if (models_json.is_null()) models_json = json::array({base_model.value("variant", "xBM")});
  if (!models_json.is_array() || models_json.empty()) {
    throw ConfigError("prequential.models must be a nonempty array of variant names or model objects");
  }
  std::vector<NamedSpec> specs;
  json echoed = json::array();
  for (auto entry : models_json) {
    json merged = base_model;
    std::string name;
    if (entry.is_string()) {
      merged["variant"] = entry;
      name = entry.get<std::string>();
    } else if (entry.is_object()) {
      name = entry.value("name", entry.value("variant", base_model.value("variant", "xBM")));
      entry.erase("name");
      for (const auto& [k, v] : entry.items()) merged[k] = v;
    } else {
      throw ConfigError("prequential.models entries must be strings or objects");
    }
    Section ms(merged, "prequential.models[" + name + "]");
    const auto spec = read_model(ms, likelihood_of(kind));
    ms.finish();
    merged["name"] = name;
    echoed.push_back(merged);
    specs.push_back({name, spec});
  }
  models_json = echoed;

  PrequentialPlan plan;
  plan.initial_train_end = plan_time(p, "initial_train_end", data);
  plan.step = p.number("step", data.step) / data.step;
  plan.horizon = p.number("horizon", data.step) / data.step;
  plan.n_steps = p.count("n_steps", 8);
  PrequentialOptions opts;
  opts.method = p.text("method", "hmc");
  opts.ensemble_size = p.count("ensemble_size", 400);
  opts.optimize_starts = p.count("optimize_starts", 4);
  opts.seed = sub_seed(run.seed, kSeedForecast);
  opts.checkpoint_dir = run.out / "checkpoints";
  opts.resume = resume;
  p.finish();
  Section s(run.config["sampler"], "sampler");
  const SamplerConfig cfg = read_sampler(s, sub_seed(run.seed, kSeedSampler));
  s.finish();

  log << "prequential: " << specs.size() << " models x " << plan.n_steps << " steps\n";
  const auto res = prequential_run(specs, data.data, plan, cfg, opts);

  std::vector<std::vector<std::string>> rows;
  for (const auto& st : res.steps) {
    rows.push_back({st.model, std::to_string(st.step), data.label(st.train_end), std::to_string(st.cells),
                    fmt(st.failed ? NAN : st.crps), fmt(st.failed ? NAN : st.log_score),
                    fmt(st.failed ? NAN : std::sqrt(st.mse)), fmt(st.failed ? NAN : st.mae),
                    st.failed ? "true" : "false", st.message});
  }
  const auto steps_path = run.out / "prequential_steps.csv";
  io::write_csv(steps_path, {"model", "step", "train_end", "cells", "crps", "log_score", "rmse", "mae", "failed", "message"},
                rows);
  run.record(steps_path);

  std::vector<std::string> header{"criterion"};
  header.insert(header.end(), res.models.begin(), res.models.end());
  header.push_back("preferred");
  std::vector<std::vector<std::string>> pooled;
  const std::pair<const char*, double PooledScore::*> crit[] = {
      {"CRPS", &PooledScore::crps}, {"LS", &PooledScore::log_score}, {"RMSE", &PooledScore::rmse}, {"MAE", &PooledScore::mae}};
  for (const auto& [name, member] : crit) {
    std::vector<std::string> r{name};
    for (const auto& ps : res.pooled) r.push_back(fmt(ps.*member));
    r.push_back(res.preferred(name));
    pooled.push_back(std::move(r));
  }
  const auto pooled_path = run.out / "prequential_pooled.csv";
  io::write_csv(pooled_path, header, pooled);
  run.record(pooled_path);

  const auto table = res.text_table();
  const auto table_path = run.out / "prequential_table.txt";
  {
    std::ofstream t(table_path);
    t << table;
  }
  run.record(table_path);
  log << table;
}

// ---------------------------------------------------------------- simulate

CovStructure simulated_structure(Section& s, Variant v, std::size_t p, json& truth) {
  const auto kind = structure_of(v);
  const bool eq = kernel_of(v) == KernelFamily::EQ;
  if (!eq && (s.has("lengthscale_mu") || s.has("lengthscale_x"))) {
    throw ConfigError(s.name() + ": lengthscales apply to EQ variants only");
  }
  auto kern = [&](double l) { return eq ? KernelSpec::exponentiated_quadratic(l) : KernelSpec::brownian(); };
  truth["variant"] = to_string(v);
  if (kind == StructureKind::Independent) {
    const auto sx = s.numbers("sigma_x", p, 0.5);
    std::vector<KernelSpec> kernels;
    if (eq) {
      const auto lx = s.numbers("lengthscale_x", p, 2.0);
      for (double l : lx) kernels.push_back(kern(l));
      truth["lengthscale_x"] = lx;
    } else {
      kernels.assign(p, kern(1.0));
    }
    truth["sigma_x"] = sx;
    return CovStructure::independent(kernels, sx);
  }
  const double smu = s.number("sigma_mu", 1.0);
  truth["sigma_mu"] = smu;
  const double lmu = eq ? s.number("lengthscale_mu", 3.0) : 1.0;
  if (eq) truth["lengthscale_mu"] = lmu;
  if (kind == StructureKind::Exchangeable) {
    const double sx = s.number("sigma_x", 0.5);
    const double lx = eq ? s.number("lengthscale_x", 2.0) : 1.0;
    truth["sigma_x"] = sx;
    if (eq) truth["lengthscale_x"] = lx;
    truth["rho"] = num(intra_class_rho(smu, sx));
    return CovStructure::exchangeable(kern(lmu), kern(lx), smu, sx);
  }
  const auto sx = s.numbers("sigma_x", p, 0.5);
  std::vector<KernelSpec> kernels;
  if (eq) {
    const auto lx = s.numbers("lengthscale_x", p, 2.0);
    for (double l : lx) kernels.push_back(kern(l));
    truth["lengthscale_x"] = lx;
  } else {
    kernels.assign(p, kern(1.0));
  }
  truth["sigma_x"] = sx;
  json rho = json::array();
  for (double v_ : sx) rho.push_back(num(intra_class_rho(smu, v_)));
  truth["rho"] = rho;
  return CovStructure::multiple_exchangeable(kern(lmu), kernels, smu, sx);
}

std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i + 1));
  return out;
}

// Long-format rows for a (rows x times) matrix.
void write_long(const fs::path& path, const std::vector<std::string>& ids, const std::vector<double>& times,
                const MatrixXd& values, const std::string& value_column) {
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      rows.push_back({ids[static_cast<std::size_t>(i)], fmt(times[static_cast<std::size_t>(j)]), fmt(values(i, j))});
  io::write_csv(path, {"task_id", "time", value_column}, rows);
}

std::vector<double> range_times(std::size_t n, double start, double step) {
  std::vector<double> t(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = start + static_cast<double>(k) * step;
  return t;
}

Eigen::VectorXd vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void cmd_simulate(Run& run, std::ostream& log) {
  Section s(run.config["simulate"], "simulate");
  const auto kind = s.text("kind", "gaussian");
  std::mt19937_64 rng(sub_seed(run.seed, kSeedSimulate));
  json truth = {{"kind", kind}, {"seed", run.seed}};
  json data_section = {{"kind", kind}, {"series", "series.csv"}};
  auto out = [&](const std::string& name) {
    const auto p = run.out / name;
    run.record(p);
    return p;
  };

  if (kind == "gaussian") {
    const auto v = parse_variant(s.text("variant", "xBM"));
    if (v == Variant::Baseline) throw ConfigError("the baseline variant has no Gaussian simulator");
    const auto p = s.count("tasks", 3), n = s.count("times", 30);
    const double start = s.number("start", 1.0), step = s.number("step", 1.0);
    const double sy = s.number("sigma_y", 0.1);
    const double missing = s.number("missing_fraction", 0.0);
    if (p == 0 || n == 0) throw ConfigError("simulate.tasks and simulate.times must be positive");
    if (!(missing >= 0.0 && missing < 1.0)) throw ConfigError("simulate.missing_fraction must lie in [0, 1)");
    const auto structure = simulated_structure(s, v, p, truth);
    truth["sigma_y"] = sy;
    MatrixXd latent;
    auto series = simulate_gaussian(structure, TimeGrid::regular(n, start, step), p, sy, rng, &latent);
    if (missing > 0.0) {
      std::bernoulli_distribution drop(missing);
      for (Eigen::Index j = 0; j < series.values.cols(); ++j)
        for (Eigen::Index i = 0; i < series.values.rows(); ++i)
          if (drop(rng)) {
            series.observed(i, j) = false;
            series.values(i, j) = std::numeric_limits<double>::quiet_NaN();
          }
    }
    io::write_series(out("series.csv"), series);
    write_long(out("latent.csv"), series.task_ids, series.times, latent, "value");
  } else if (kind == "sde") {
    const auto p = s.count("tasks", 3), n = s.count("times", 50);
    const double start = s.number("start", 0.0), step = s.number("step", 0.1);
    ExchangeableDiffusion diff;
    diff.p = p;
    diff.sigma_mu = s.number("sigma_mu", 1.0);
    diff.sigma_x = s.number("sigma_x", 0.5);
    const double rate = s.number("drift_rate", 0.0);
    if (rate != 0.0) diff.drift = [rate](const VectorXd& x) { VectorXd d = -rate * x; return d; };
    const auto x0 = s.numbers("x0", p, 0.0);
    const auto path = euler_maruyama(diff, vec(x0), TimeGrid::regular(n, start, step), rng);
    truth.update({{"sigma_mu", diff.sigma_mu}, {"sigma_x", diff.sigma_x}, {"drift_rate", rate}, {"x0", x0},
                  {"rho", num(intra_class_rho(diff.sigma_mu, diff.sigma_x))}});
    const auto ids = numbered("task", p);
    write_long(out("series.csv"), ids, range_times(n, start, step), path.states.transpose(), "value");
  } else if (kind == "chikv") {
    const auto v = parse_variant(s.text("variant", "xBM"));
    if (v == Variant::Baseline) throw ConfigError("simulate chikv needs a GP variant");
    const auto islands = s.count("islands", 3), weeks = s.count("weeks", 40);
    const auto extra = s.count("forecast_weeks", 8);
    const auto structure = simulated_structure(s, v, islands, truth);
    const auto x0 = s.numbers("x0", islands, 0.3);
    epi::ChikvConfig c;
    c.population = vec(s.numbers("population", islands, 50000.0));
    c.initial_exposure = vec(s.numbers("initial_exposure", islands, 10.0));
    c.exposure_floor = s.number("exposure_floor", 1.0);
    c.lag_coefficients = vec(s.numbers("lag_coefficients", epi::kPrecipCoefficients, 0.0));
    const double phi = s.number("phi", 0.5);
    const double precip_mean = s.number("precip_mean", 3.0);
    const auto cols = static_cast<Eigen::Index>(epi::kMaxPrecipLag + weeks + extra);
    c.precipitation.resize(static_cast<Eigen::Index>(islands), cols);
    std::gamma_distribution<double> rain(2.0, precip_mean / 2.0);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < c.precipitation.rows(); ++i) c.precipitation(i, j) = rain(rng);
    const MatrixXd x = simulate_latent_paths(structure, TimeGrid::regular(weeks), islands, vec(x0), rng);
    const MatrixXd incidence = simulate_chikv_incidence(x, c, phi, rng);
    const auto ids = numbered("island", islands);
    write_long(out("series.csv"), ids, range_times(weeks, 1.0, 1.0), incidence, "value");
    write_long(out("precipitation.csv"), ids, range_times(static_cast<std::size_t>(cols), 1.0 - epi::kMaxPrecipLag, 1.0),
               c.precipitation, "value_cm");
    io::write_groups(out("population.csv"), {ids, c.population, {}});
    write_long(out("latent.csv"), ids, range_times(weeks, 1.0, 1.0), x, "value");
    truth.update({{"x0", x0},
                  {"population", std::vector<double>(c.population.data(), c.population.data() + c.population.size())},
                  {"initial_exposure", std::vector<double>(c.initial_exposure.data(), c.initial_exposure.data() + islands)},
                  {"exposure_floor", c.exposure_floor},
                  {"lag_coefficients", std::vector<double>(c.lag_coefficients.data(), c.lag_coefficients.data() + c.lag_coefficients.size())},
                  {"phi", phi}});
    data_section.update({{"precipitation", "precipitation.csv"},
                         {"population", "population.csv"},
                         {"initial_exposure", truth["initial_exposure"]},
                         {"exposure_floor", c.exposure_floor}});
  } else if (kind == "covid") {
    const auto v = parse_variant(s.text("variant", "xBM"));
    if (v == Variant::Baseline) throw ConfigError("simulate covid needs a GP variant");
    const auto groups = s.count("groups", 3), days = s.count("days", 60);
    epi::RenewalConfig c;
    c.changepoint_stride = static_cast<int>(s.count("changepoint_stride", 3));
    c.seed_days = static_cast<int>(s.count("seed_days", 6));
    const auto structure = simulated_structure(s, v, groups, truth);
    const auto x0 = s.numbers("x0", groups, -1.0);
    const auto a = static_cast<Eigen::Index>(groups);
    if (groups == 0) throw ConfigError("simulate.groups must be positive");
    std::vector<double> pop_default(groups), ifr_default(groups);
    for (std::size_t i = 0; i < groups; ++i) {
      const double f = groups > 1 ? static_cast<double>(i) / static_cast<double>(groups - 1) : 0.0;
      pop_default[i] = 2e5 + 2e5 * f;
      ifr_default[i] = 0.002 + 0.018 * f;
    }
    if (!s.has("population")) s.raw("population") = pop_default;
    if (!s.has("ifr")) s.raw("ifr") = ifr_default;
    c.population = vec(*s.numbers("population", groups));
    c.ifr = vec(*s.numbers("ifr", groups));
    auto& contact = s.raw("contact");
    if (contact.is_null()) {
      MatrixXd m = MatrixXd::Constant(a, a, 1.5);
      m.diagonal().array() += 3.0;
      contact = json::array();
      for (Eigen::Index i = 0; i < a; ++i) {
        std::vector<double> r(static_cast<std::size_t>(a));
        for (Eigen::Index j = 0; j < a; ++j) r[static_cast<std::size_t>(j)] = m(i, j);
        contact.push_back(r);
      }
    }
    if (!contact.is_array() || contact.size() != groups) throw ConfigError("simulate.contact must be a groups x groups array");
    c.contact.resize(a, a);
    for (Eigen::Index i = 0; i < a; ++i) {
      const auto& r = contact[static_cast<std::size_t>(i)];
      if (!r.is_array() || r.size() != groups) throw ConfigError("simulate.contact must be a groups x groups array");
      for (Eigen::Index j = 0; j < a; ++j) {
        if (!r[static_cast<std::size_t>(j)].is_number()) throw ConfigError("simulate.contact must hold numbers");
        c.contact(i, j) = r[static_cast<std::size_t>(j)].get<double>();
      }
    }
    c.seed_infections = vec(s.numbers("seed_infections", groups, 100.0));
    const double phi = s.number("phi", 0.3);
    const auto horizon = s.count("delay_horizon", 100);
    auto gen = s.sub("gen_time");
    const double gm = gen.number("mean", 6.5), gcv = gen.number("cv", 0.62);
    gen.finish();
    auto itd = s.sub("inf_to_death");
    const double dm = itd.number("mean", 24.2), dcv = itd.number("cv", 0.39);
    itd.finish();
    c.gen_time = epi::discretize_gamma(gm, gcv, horizon);
    c.inf_to_death = epi::discretize_gamma(dm, dcv, horizon);
    c.validate();
    const auto k = epi::changepoint_count(days, c.changepoint_stride);
    const MatrixXd x = simulate_latent_paths(structure, TimeGrid::regular(k), groups, vec(x0), rng);
    const MatrixXd deaths = simulate_covid_deaths(x, c, days, phi, rng);
    const auto ids = numbered("age", groups);
    write_long(out("series.csv"), ids, range_times(days, 1.0, 1.0), deaths, "value");
    io::write_contact(out("contact.csv"), {ids, c.contact});
    io::write_groups(out("groups.csv"), {ids, c.population, c.ifr});
    write_long(out("latent.csv"), ids, range_times(k, 1.0, static_cast<double>(c.changepoint_stride)), x, "value");
    truth.update({{"x0", x0},
                  {"population", s.raw("population")},
                  {"ifr", s.raw("ifr")},
                  {"contact", contact},
                  {"seed_infections", std::vector<double>(c.seed_infections.data(), c.seed_infections.data() + groups)},
                  {"changepoint_stride", c.changepoint_stride},
                  {"seed_days", c.seed_days},
                  {"phi", phi},
                  {"gen_time", {{"mean", gm}, {"cv", gcv}}},
                  {"inf_to_death", {{"mean", dm}, {"cv", dcv}}},
                  {"delay_horizon", horizon}});
    data_section.update({{"contact", "contact.csv"},
                         {"groups", "groups.csv"},
                         {"gen_time", truth["gen_time"]},
                         {"inf_to_death", truth["inf_to_death"]},
                         {"seed_days", c.seed_days},
                         {"changepoint_stride", c.changepoint_stride},
                         {"delay_horizon", horizon}});
  } else {
    throw ConfigError("unknown simulate.kind '" + kind + "' (expected gaussian, chikv, covid or sde)");
  }
  s.finish();
  if (kind == "sde") data_section["kind"] = "gaussian";
  run.extra["truth"] = truth;
  run.extra["data_section"] = data_section;
  log << "simulate: " << kind << " bundle written to " << run.out.string() << "\n";
}

const std::vector<std::string> kTopLevelKeys{"seed", "output", "model", "data", "sampler", "fit",
                                             "predict", "prequential", "simulate"};

}  // namespace

void run(const Invocation& inv, std::ostream& log) {
  static const std::vector<std::string> commands{"fit", "predict", "prequential", "simulate"};
  if (std::find(commands.begin(), commands.end(), inv.command) == commands.end()) {
    throw ConfigError("unknown command '" + inv.command + "' (expected fit, predict, prequential or simulate)");
  }
  if (inv.resume && inv.command != "prequential") throw ConfigError("--resume applies to prequential runs only");
  const auto t0 = std::chrono::steady_clock::now();
  Run r;
  r.command = inv.command;
  r.config = read_config(inv.config);
  r.base = fs::absolute(inv.config).parent_path();
  for (const auto& [key, value] : r.config.items()) {
    if (std::find(kTopLevelKeys.begin(), kTopLevelKeys.end(), key) == kTopLevelKeys.end()) {
      throw ConfigError("unknown top-level config key '" + key + "'");
    }
  }
  Section top(r.config, "config");
  r.seed = inv.seed ? *inv.seed : top.count("seed", 1);
  r.config["seed"] = r.seed;
  if (inv.out) {
    r.out = fs::absolute(*inv.out);
  } else {
    r.out = top.has("output") ? top.path("output", r.base) : fs::absolute("xgp_" + inv.command);
  }
  r.config["output"] = r.out.string();
  fs::create_directories(r.out);
  DirLock lock(r.out);
  std::error_code ec;
  fs::remove(r.out / "error.json", ec);

  try {
    if (inv.command == "fit") {
      cmd_fit(r, log);
    } else if (inv.command == "predict") {
      cmd_predict(r, log);
    } else if (inv.command == "prequential") {
      cmd_prequential(r, log, inv.resume);
    } else {
      cmd_simulate(r, log);
    }
  } catch (const std::exception& e) {
    write_json(r.out / "error.json", error_json(e));
    throw;
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest = {{"command", r.command}, {"status", "ok"},     {"seed", r.seed},
                   {"config", r.config},   {"versions", versions()}, {"wall_time_seconds", wall},
                   {"outputs", r.outputs}};
  for (const auto& [k, v] : r.extra.items()) manifest[k] = v;
  write_json(r.out / "manifest.json", manifest);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
  return kExitInternal;
}

json error_json(const std::exception& e) {
  const int code = exit_code_for(e);
  const char* kind = code == kExitConfig ? "config" : code == kExitData ? "data" : code == kExitNumerical ? "numerical" : "internal";
  json j = {{"status", "error"}, {"kind", kind}, {"exit_code", code}, {"message", e.what()}};
  if (const auto* n = dynamic_cast<const NumericalError*>(&e)) j["attempted_jitter"] = n->attempted_jitter();
  return j;
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exchangeable multi-task Gaussian-process models and GP-driven epidemic models"};
  Invocation inv;
  std::uint64_t seed = 0;
  std::string out_dir;
  app.add_option("command", inv.command, "fit, predict, prequential or simulate")
      ->required()
      ->check(CLI::IsMember({"fit", "predict", "prequential", "simulate"}));
  app.add_option("--config", inv.config, "JSON run configuration")->required();
  auto* seed_opt = app.add_option("--seed", seed, "overrides the config seed");
  auto* out_opt = app.add_option("--out", out_dir, "output directory");
  app.add_flag("--resume", inv.resume, "reuse completed prequential steps");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << json{{"status", "error"}, {"kind", "config"}, {"exit_code", kExitConfig}, {"message", e.what()}}.dump()
        << "\n";
    return kExitConfig;
  }
  if (*seed_opt) inv.seed = seed;
  if (*out_opt) inv.out = out_dir;

  try {
    run(inv, err);
    out << "ok\n";
    return kExitOk;
  } catch (const std::exception& e) {
    const auto j = error_json(e);
    err << j.dump() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace xgp::cli
