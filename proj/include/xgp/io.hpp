#pragma once

// CSV ingestion and emission. Series data are long format
// (task_id,time,value); times are integers/reals or ISO dates, which map to
// day indices with the earliest date in the file as day 1.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xgp/data.hpp"

namespace xgp::io {

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws DataError naming the column and the file when absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);

// Shortest text that parses back to the same double; NaN is written as NA.
std::string format_double(double v);
// Parses a numeric cell; throws DataError naming file, row and column.
double parse_double(const std::string& cell, const CsvTable& table, std::size_t row,
                    const std::string& column);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Time parsing shared by all long-format files.
struct TimeAxis {
  bool dates = false;
  long long epoch_day = 0;  // day number of day index 1 when dates
  double parse(const std::string& cell) const;
  std::string label(double t) const;
};
TimeAxis detect_time_axis(const std::vector<std::string>& cells);
bool is_iso_date(const std::string& s);
long long iso_to_day_number(const std::string& s);
std::string day_number_to_iso(long long day);

// Long-format series. Tasks keep their order of first appearance; missing
// values are NA or empty and cells absent from the file are missing too.
TaskSeries read_series(const std::filesystem::path& path);
TaskSeries read_series(const std::filesystem::path& path, TimeAxis& axis);
void write_series(const std::filesystem::path& path, const TaskSeries& series);

struct LongMatrix {
  std::vector<std::string> row_ids;
  std::vector<double> times;
  Eigen::MatrixXd values;  // complete: every (row, time) cell present
};
// Long-format file with a complete rectangular design; value column named
// `value_column`.
LongMatrix read_long_matrix(const std::filesystem::path& path, const std::string& value_column,
                            const TimeAxis* axis = nullptr);

struct ContactMatrix {
  std::vector<std::string> groups;
  Eigen::MatrixXd values;
};
ContactMatrix read_contact(const std::filesystem::path& path);
void write_contact(const std::filesystem::path& path, const ContactMatrix& contact);

struct GroupTable {
  std::vector<std::string> groups;
  Eigen::VectorXd population;
  Eigen::VectorXd ifr;  // empty when the file has no ifr column
};
GroupTable read_groups(const std::filesystem::path& path);
void write_groups(const std::filesystem::path& path, const GroupTable& table);

// Draws x observations with a header of observation ids.
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header);

}  // namespace xgp::io
