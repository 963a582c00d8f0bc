#include "xgp/data.hpp"

#include <cmath>
#include <sstream>

#include "xgp/error.hpp"

namespace xgp {

void TaskSeries::validate() const {
  const auto p = static_cast<Eigen::Index>(tasks());
  const auto n = static_cast<Eigen::Index>(size());
  if (p == 0 || n == 0) throw DataError("series must contain at least one task and one time");
  if (values.rows() != p || values.cols() != n || observed.rows() != p || observed.cols() != n) {
    throw DataError("series values do not match the task/time dimensions");
  }
  if (!time_labels.empty() && time_labels.size() != times.size()) {
    throw DataError("time labels do not match the time grid");
  }
  TimeGrid check(times);
  (void)check;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (observed(i, j) && !std::isfinite(values(i, j))) {
        throw DataError("observed value for task " + task_ids[i] + " is not finite");
      }
}

std::vector<TaskPoint> TaskSeries::observed_points() const {
  std::vector<TaskPoint> pts;
  for (std::size_t i = 0; i < tasks(); ++i)
    for (std::size_t j = 0; j < size(); ++j)
      if (observed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) {
        pts.push_back({i, times[j]});
      }
  return pts;
}

VectorXd TaskSeries::observed_values() const { return values_at(observed_points()); }

std::vector<TaskPoint> TaskSeries::observed_points_in(double lo, double hi) const {
  std::vector<TaskPoint> pts;
  for (const auto& pt : observed_points())
    if (pt.time > lo && pt.time <= hi) pts.push_back(pt);
  return pts;
}

VectorXd TaskSeries::values_at(const std::vector<TaskPoint>& points) const {
  VectorXd out(static_cast<Eigen::Index>(points.size()));
  for (std::size_t k = 0; k < points.size(); ++k) {
    std::size_t j = 0;
    while (j < times.size() && times[j] != points[k].time) ++j;
    if (j == times.size() || points[k].task >= tasks()) {
      throw DataError("requested cell is not part of the series");
    }
    out(static_cast<Eigen::Index>(k)) =
        values(static_cast<Eigen::Index>(points[k].task), static_cast<Eigen::Index>(j));
  }
  return out;
}

TaskSeries TaskSeries::until(double t_end) const {
  std::size_t n = 0;
  while (n < times.size() && times[n] <= t_end) ++n;
  if (n == 0) throw DataError("training window contains no time points");
  TaskSeries out;
  out.task_ids = task_ids;
  out.times.assign(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(n));
  if (!time_labels.empty()) {
    out.time_labels.assign(time_labels.begin(), time_labels.begin() + static_cast<std::ptrdiff_t>(n));
  }
  out.values = values.leftCols(static_cast<Eigen::Index>(n));
  out.observed = observed.leftCols(static_cast<Eigen::Index>(n));
  return out;
}

std::string TaskSeries::label_of(double time) const {
  for (std::size_t j = 0; j < times.size(); ++j)
    if (times[j] == time && j < time_labels.size()) return time_labels[j];
  std::ostringstream os;
  os.precision(17);
  os << time;
  return os.str();
}

ChikvData ChikvData::until(std::size_t w) const {
  if (w == 0 || w > weeks()) throw DataError("training window outside the incidence series");
  ChikvData out = *this;
  out.incidence = incidence.leftCols(static_cast<Eigen::Index>(w));
  return out;
}

CovidData CovidData::until(std::size_t d) const {
  if (d == 0 || d > days()) throw DataError("training window outside the death series");
  CovidData out = *this;
  out.deaths = deaths.leftCols(static_cast<Eigen::Index>(d));
  return out;
}

}  // namespace xgp
