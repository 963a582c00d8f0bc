#pragma once

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "xgp/epidemic.hpp"
#include "xgp/kernel.hpp"

namespace xgp {

// Per-task observations on a shared (possibly non-equidistant) time grid.
// Missing cells carry NaN in `values` and false in `observed`.
struct TaskSeries {
  std::vector<std::string> task_ids;
  std::vector<double> times;
  std::vector<std::string> time_labels;  // as read from input, same length as times
  MatrixXd values;                       // tasks x times
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> observed;

  std::size_t tasks() const noexcept { return task_ids.size(); }
  std::size_t size() const noexcept { return times.size(); }

  void validate() const;
  // Observed cells in task-major order.
  std::vector<TaskPoint> observed_points() const;
  VectorXd observed_values() const;
  // Observed cells with lo < time <= hi.
  std::vector<TaskPoint> observed_points_in(double lo, double hi) const;
  VectorXd values_at(const std::vector<TaskPoint>& points) const;
  // Copy restricted to grid times <= t_end.
  TaskSeries until(double t_end) const;
  std::string label_of(double time) const;
};

// Weekly incidence O (islands x weeks) with its TSIR configuration.
struct ChikvData {
  std::vector<std::string> island_ids;
  epi::ChikvConfig config;
  MatrixXd incidence;

  std::size_t weeks() const noexcept { return static_cast<std::size_t>(incidence.cols()); }
  ChikvData until(std::size_t weeks) const;
};

// Daily deaths y (groups x days) with the renewal configuration.
struct CovidData {
  std::vector<std::string> group_ids;
  epi::RenewalConfig config;
  MatrixXd deaths;

  std::size_t days() const noexcept { return static_cast<std::size_t>(deaths.cols()); }
  CovidData until(std::size_t days) const;
};

using ProblemData = std::variant<TaskSeries, ChikvData, CovidData>;

}  // namespace xgp
