#include <algorithm>
#include <cmath>
#include <map>

#include "xgp/cli.hpp"
#include "xgp/epidemic.hpp"
#include "xgp/error.hpp"

namespace xgp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Section::Section(json& object, std::string name) : obj_(&object), name_(std::move(name)) {
  if (obj_->is_null()) *obj_ = json::object();
  if (!obj_->is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
}

bool Section::has(const std::string& key) const { return obj_->contains(key) && !(*obj_)[key].is_null(); }

json& Section::get(const std::string& key) {
  if (std::find(used_.begin(), used_.end(), key) == used_.end()) used_.push_back(key);
  return (*obj_)[key];
}

json& Section::raw(const std::string& key) { return get(key); }

void Section::finish() const {
  for (const auto& [key, value] : obj_->items()) {
    if (std::find(used_.begin(), used_.end(), key) == used_.end()) {
      throw ConfigError("unknown key '" + key + "' in config section '" + name_ + "'");
    }
  }
}

double Section::number(const std::string& key, double fallback) {
  auto& v = get(key);
  if (v.is_null()) v = fallback;
  if (!v.is_number()) throw ConfigError(name_ + "." + key + " must be a number");
  return v.get<double>();
}

double Section::number(const std::string& key) {
  if (!has(key)) throw ConfigError("missing required key " + name_ + "." + key);
  return number(key, 0.0);
}

std::uint64_t Section::count(const std::string& key, std::uint64_t fallback) {
  auto& v = get(key);
  if (v.is_null()) v = fallback;
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
    throw ConfigError(name_ + "." + key + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool Section::flag(const std::string& key, bool fallback) {
  auto& v = get(key);
  if (v.is_null()) v = fallback;
  if (!v.is_boolean()) throw ConfigError(name_ + "." + key + " must be true or false");
  return v.get<bool>();
}

std::string Section::text(const std::string& key, const std::string& fallback) {
  auto& v = get(key);
  if (v.is_null()) v = fallback;
  if (!v.is_string()) throw ConfigError(name_ + "." + key + " must be a string");
  return v.get<std::string>();
}

std::string Section::text(const std::string& key) {
  if (!has(key)) throw ConfigError("missing required key " + name_ + "." + key);
  return text(key, "");
}

std::optional<std::vector<double>> Section::numbers(const std::string& key, std::size_t n) {
  auto& v = get(key);
  if (v.is_null()) return std::nullopt;
  std::vector<double> out;
  if (v.is_number()) {
    out.assign(n, v.get<double>());
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(name_ + "." + key + " must hold numbers");
      out.push_back(e.get<double>());
    }
    if (out.size() != n) {
      throw ConfigError(name_ + "." + key + " needs " + std::to_string(n) + " values, got " +
                        std::to_string(out.size()));
    }
  } else {
    throw ConfigError(name_ + "." + key + " must be a number or an array of numbers");
  }
  return out;
}

std::vector<double> Section::numbers(const std::string& key, std::size_t n, double fallback) {
  if (!has(key)) get(key) = fallback;
  return *numbers(key, n);
}

fs::path Section::path(const std::string& key, const fs::path& base) {
  auto p = optional_path(key, base);
  if (!p) throw ConfigError("missing required key " + name_ + "." + key);
  return *p;
}

std::optional<fs::path> Section::optional_path(const std::string& key, const fs::path& base) {
  auto& v = get(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) throw ConfigError(name_ + "." + key + " must be a path string");
  fs::path p(v.get<std::string>());
  if (p.is_relative()) p = base / p;
  p = p.lexically_normal();
  v = p.string();
  return p;
}

Section Section::sub(const std::string& key) { return Section(get(key), name_ + "." + key); }

std::string LoadedData::label(double model_time) const { return axis.label(file_time(model_time)); }

double LoadedData::file_time(double model_time) const {
  return indexed ? origin + (model_time - 1.0) * step : model_time;
}

double LoadedData::model_time(double file_time) const {
  return indexed ? (file_time - origin) / step + 1.0 : file_time;
}

LikelihoodKind likelihood_of(const std::string& kind) {
  if (kind == "gaussian") return LikelihoodKind::Gaussian;
  if (kind == "chikv") return LikelihoodKind::ChikvNegBin;
  if (kind == "covid") return LikelihoodKind::CovidNegBin;
  throw ConfigError("unknown data kind '" + kind + "' (expected gaussian, chikv or covid)");
}

namespace {

// Spacing of an equidistant grid; throws DataError otherwise.
double lattice_step(const std::vector<double>& times, const std::string& what) {
  if (times.size() < 2) return 1.0;
  const double step = times[1] - times[0];
  for (std::size_t k = 2; k < times.size(); ++k) {
    if (std::abs(times[k] - times[k - 1] - step) > 1e-9 * std::max(1.0, std::abs(step))) {
      throw DataError(what + " times must be equally spaced (gap at position " + std::to_string(k + 1) + ")");
    }
  }
  return step;
}

// Rows of `m` reordered to follow `ids`; throws DataError on a mismatch.
Eigen::MatrixXd align_rows(const io::LongMatrix& m, const std::vector<std::string>& ids, const std::string& file) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), m.values.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = std::find(m.row_ids.begin(), m.row_ids.end(), ids[i]);
    if (it == m.row_ids.end()) throw DataError("file " + file + " has no rows for task '" + ids[i] + "'");
    out.row(static_cast<Eigen::Index>(i)) = m.values.row(it - m.row_ids.begin());
  }
  return out;
}

Eigen::VectorXd align_groups(const io::GroupTable& g, const Eigen::VectorXd& column,
                             const std::vector<std::string>& ids, const std::string& file) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = std::find(g.groups.begin(), g.groups.end(), ids[i]);
    if (it == g.groups.end()) throw DataError("file " + file + " has no row for group '" + ids[i] + "'");
    out(static_cast<Eigen::Index>(i)) = column(it - g.groups.begin());
  }
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Counts series: complete, equidistant, indexed 1..T.
void load_counts(const fs::path& series, LoadedData& out, io::LongMatrix& m) {
  const auto table = io::read_csv(series);
  std::vector<std::string> time_cells;
  const auto c = table.column("time");
  for (const auto& r : table.rows) time_cells.push_back(r[c]);
  out.axis = io::detect_time_axis(time_cells);
  m = io::read_long_matrix(series, "value", &out.axis);
  if (m.times.empty()) throw DataError("file " + series.string() + " has no rows");
  out.indexed = true;
  out.origin = m.times.front();
  out.step = lattice_step(m.times, "series");
  if (!(out.step > 0.0)) throw DataError("series must contain increasing times");
  if ((m.values.array() < 0.0).any() || (m.values.array() != m.values.array().round()).any()) {
    throw DataError("file " + series.string() + ": counts must be non-negative integers");
  }
}

}  // namespace

LoadedData load_data(Section& d, const fs::path& base) {
  const std::string kind = d.text("kind", "gaussian");
  const auto series = d.path("series", base);
  LoadedData out;

  if (kind == "gaussian") {
    io::TimeAxis axis;
    auto s = io::read_series(series, axis);
    out.axis = axis;
    out.data = std::move(s);
    return out;
  }

  io::LongMatrix counts;
  load_counts(series, out, counts);

  if (kind == "chikv") {
    ChikvData c;
    c.island_ids = counts.row_ids;
    c.incidence = counts.values;
    const auto precip_path = d.path("precipitation", base);
    const auto precip = io::read_long_matrix(precip_path, "value_cm", &out.axis);
    const double pstep = lattice_step(precip.times, "precipitation");
    if (precip.times.size() > 1 && std::abs(pstep - out.step) > 1e-9 * std::max(1.0, out.step)) {
      throw DataError("precipitation spacing differs from the series spacing");
    }
    const double lead = (out.origin - precip.times.front()) / out.step;
    if (std::abs(lead - std::round(lead)) > 1e-9) {
      throw DataError("precipitation times are not aligned with the series times");
    }
    if (lead < epi::kMaxPrecipLag) {
      throw DataError("file " + precip_path.string() + " needs at least " + std::to_string(epi::kMaxPrecipLag) +
                      " weeks of precipitation before the first series week (found " +
                      std::to_string(std::max(0L, std::lround(lead))) + ")");
    }
    c.config.history = static_cast<int>(std::lround(lead));
    c.config.precipitation = align_rows(precip, c.island_ids, precip_path.string());
    const auto groups_path = d.path("population", base);
    const auto groups = io::read_groups(groups_path);
    c.config.population = align_groups(groups, groups.population, c.island_ids, groups_path.string());
    c.config.exposure_floor = d.number("exposure_floor", 0.0);
    const auto s = c.island_ids.size();
    if (auto init = d.numbers("initial_exposure", s)) {
      c.config.initial_exposure = to_vector(*init);
    } else {
      c.config.initial_exposure = c.incidence.col(0);
      std::vector<double> echo(c.config.initial_exposure.data(), c.config.initial_exposure.data() + s);
      d.raw("initial_exposure") = echo;
    }
    c.config.lag_coefficients = Eigen::VectorXd::Zero(epi::kPrecipCoefficients);
    c.config.validate(c.weeks());
    out.data = std::move(c);
  } else if (kind == "covid") {
    CovidData c;
    c.group_ids = counts.row_ids;
    c.deaths = counts.values;
    if (out.step != 1.0) throw DataError("death series must be daily (unit time spacing)");
    const auto contact_path = d.path("contact", base);
    const auto contact = io::read_contact(contact_path);
    const auto a = static_cast<Eigen::Index>(c.group_ids.size());
    c.config.contact.resize(a, a);
    for (Eigen::Index i = 0; i < a; ++i) {
      const auto ri = std::find(contact.groups.begin(), contact.groups.end(), c.group_ids[static_cast<std::size_t>(i)]);
      if (ri == contact.groups.end()) {
        throw DataError("file " + contact_path.string() + " has no group '" + c.group_ids[static_cast<std::size_t>(i)] + "'");
      }
      for (Eigen::Index j = 0; j < a; ++j) {
        const auto rj = std::find(contact.groups.begin(), contact.groups.end(), c.group_ids[static_cast<std::size_t>(j)]);
        if (rj == contact.groups.end()) {
          throw DataError("file " + contact_path.string() + " has no group '" + c.group_ids[static_cast<std::size_t>(j)] + "'");
        }
        c.config.contact(i, j) = contact.values(ri - contact.groups.begin(), rj - contact.groups.begin());
      }
    }
    const auto groups_path = d.path("groups", base);
    const auto groups = io::read_groups(groups_path);
    if (groups.ifr.size() == 0) throw DataError("file " + groups_path.string() + " has no column 'ifr'");
    c.config.population = align_groups(groups, groups.population, c.group_ids, groups_path.string());
    c.config.ifr = align_groups(groups, groups.ifr, c.group_ids, groups_path.string());
    const auto horizon = d.count("delay_horizon", 100);
    auto gen = d.sub("gen_time");
    const double gm = gen.number("mean", 6.5), gcv = gen.number("cv", 0.62);
    gen.finish();
    auto itd = d.sub("inf_to_death");
    const double dm = itd.number("mean", 24.2), dcv = itd.number("cv", 0.39);
    itd.finish();
    c.config.gen_time = epi::discretize_gamma(gm, gcv, horizon);
    c.config.inf_to_death = epi::discretize_gamma(dm, dcv, horizon);
    c.config.seed_days = static_cast<int>(d.count("seed_days", 6));
    c.config.changepoint_stride = static_cast<int>(d.count("changepoint_stride", 3));
    c.config.seed_infections = Eigen::VectorXd::Ones(a);
    c.config.validate();
    out.data = std::move(c);
  } else {
    throw ConfigError("unknown data kind '" + kind + "' (expected gaussian, chikv or covid)");
  }
  return out;
}

namespace {

Prior read_prior(Section& priors, const std::string& key, const Prior& fallback) {
  auto& v = priors.raw(key);
  if (v.is_null()) {
    v = json{{"family", fallback.family_name()}, {"a", fallback.a()}, {"b", fallback.b()}};
  }
  Section s(v, priors.name() + "." + key);
  const auto family = s.text("family");
  const double a = s.number("a", 1.0), b = s.number("b", 1.0);
  s.finish();
  return make_prior(family, a, b);
}

}  // namespace

ModelSpec read_model(Section& m, LikelihoodKind likelihood) {
  ModelSpec spec;
  spec.likelihood = likelihood;
  spec.variant = parse_variant(m.text("variant", "xBM"));
  spec.latent_state = m.flag("latent_state", false);
  spec.likelihood_weight = m.number("likelihood_weight", 1.0);
  auto p = m.sub("priors");
  spec.priors.sigma = read_prior(p, "sigma", spec.priors.sigma);
  spec.priors.lengthscale = read_prior(p, "lengthscale", spec.priors.lengthscale);
  spec.priors.location = read_prior(p, "location", spec.priors.location);
  spec.priors.coefficient = read_prior(p, "coefficient", spec.priors.coefficient);
  spec.priors.overdispersion = read_prior(p, "overdispersion", spec.priors.overdispersion);
  spec.priors.seed = read_prior(p, "seed", spec.priors.seed);
  p.finish();
  spec.validate();
  return spec;
}

SamplerConfig read_sampler(Section& s, std::uint64_t seed) {
  SamplerConfig c;
  c.chains = s.count("chains", c.chains);
  c.iterations = s.count("iterations", c.iterations);
  c.warmup = s.count("warmup", c.warmup);
  c.thin = s.count("thin", c.thin);
  c.target_accept = s.number("target_accept", c.target_accept);
  c.max_depth = static_cast<int>(s.count("max_depth", static_cast<std::uint64_t>(c.max_depth)));
  c.init_shrink = s.number("init_shrink", c.init_shrink);
  c.adapt_metric = s.flag("adapt_metric", c.adapt_metric);
  c.seed = seed;
  c.validate();
  return c;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace xgp::cli
