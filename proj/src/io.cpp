#include "xgp/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "xgp/error.hpp"

namespace xgp::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan";
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k)
    if (header[k] == name) return k;
  std::string have;
  for (const auto& h : header) have += (have.empty() ? "" : ", ") + h;
  throw DataError("file " + path + " has no column '" + name + "' (found: " + have + ")");
}

bool CsvTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvTable t;
  t.path = origin;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false, any = false;
  auto end_record = [&] {
    record.push_back(trim(field));
    field.clear();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      if (t.header.empty()) {
        t.header = record;
      } else {
        if (record.size() != t.header.size()) {
          throw DataError("file " + origin + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                          std::to_string(record.size()) + " fields, header has " +
                          std::to_string(t.header.size()));
        }
        t.rows.push_back(record);
      }
    }
    record.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      any = true;
    } else if (c == ',') {
      record.push_back(trim(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      end_record();
    } else {
      field += c;
      any = true;
    }
  }
  if (in_quotes) throw DataError("file " + origin + ": unterminated quoted field");
  if (any || !field.empty()) end_record();
  if (t.header.empty()) throw DataError("file " + origin + " is empty");
  if (!t.header.empty() && t.header[0].rfind("\xEF\xBB\xBF", 0) == 0) t.header[0].erase(0, 3);
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path.string());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& cell, const CsvTable& table, std::size_t row,
                    const std::string& column) {
  if (cell == "Inf") return std::numeric_limits<double>::infinity();
  if (cell == "-Inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
    throw DataError("file " + table.path + ", row " + std::to_string(row + 1) + ", column '" + column +
                    "': cannot parse '" + cell + "' as a number");
  }
  return v;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << quote(r[k]);
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  if (!out) throw Error("failed while writing " + path.string());
}

bool is_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t k : {0, 1, 2, 3, 5, 6, 8, 9})
    if (!std::isdigit(static_cast<unsigned char>(s[k]))) return false;
  return true;
}

long long iso_to_day_number(const std::string& s) {
  using namespace std::chrono;
  if (!is_iso_date(s)) throw DataError("'" + s + "' is not an ISO date (YYYY-MM-DD)");
  const year_month_day ymd{year{std::stoi(s.substr(0, 4))}, month{static_cast<unsigned>(std::stoi(s.substr(5, 2)))},
                           day{static_cast<unsigned>(std::stoi(s.substr(8, 2)))}};
  if (!ymd.ok()) throw DataError("'" + s + "' is not a valid calendar date");
  return sys_days{ymd}.time_since_epoch().count();
}

std::string day_number_to_iso(long long d) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{d}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

double TimeAxis::parse(const std::string& cell) const {
  if (dates) return static_cast<double>(iso_to_day_number(cell) - epoch_day + 1);
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw DataError("cannot parse time '" + cell + "'");
  }
  return v;
}

std::string TimeAxis::label(double t) const {
  if (dates) return day_number_to_iso(epoch_day + static_cast<long long>(std::llround(t)) - 1);
  return format_double(t);
}

TimeAxis detect_time_axis(const std::vector<std::string>& cells) {
  TimeAxis axis;
  if (cells.empty()) return axis;
  axis.dates = is_iso_date(cells.front());
  long long first = 0;
  bool have = false;
  for (const auto& c : cells) {
    if (is_iso_date(c) != axis.dates) {
      throw DataError("time column mixes ISO dates and numbers ('" + c + "')");
    }
    if (axis.dates) {
      const auto d = iso_to_day_number(c);
      first = have ? std::min(first, d) : d;
      have = true;
    }
  }
  axis.epoch_day = first;
  return axis;
}

namespace {

void reject_wide(const CsvTable& t, const std::vector<std::string>& required) {
  for (const auto& r : required) {
    if (!t.has_column(r)) {
      const bool looks_wide = t.has_column("time") && !t.has_column("task_id") &&
                              !t.has_column(required.back()) && t.header.size() > 2;
      if (looks_wide) {
        throw DataError("file " + t.path + " has no column '" + r +
                        "'; it looks like wide format (one column per task). Convert it to long format "
                        "with columns task_id,time,value");
      }
      t.column(r);
    }
  }
}

}  // namespace

TaskSeries read_series(const std::filesystem::path& path, TimeAxis& axis) {
  const auto t = read_csv(path);
  reject_wide(t, {"task_id", "time", "value"});
  const auto c_task = t.column("task_id"), c_time = t.column("time"), c_val = t.column("value");
  std::vector<std::string> time_cells;
  for (const auto& r : t.rows) time_cells.push_back(r[c_time]);
  axis = detect_time_axis(time_cells);

  TaskSeries s;
  std::map<std::string, std::size_t> task_index;
  std::map<double, std::string> time_labels;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    if (r[c_task].empty()) throw DataError("file " + t.path + ", row " + std::to_string(k + 1) + ": empty task_id");
    if (!task_index.count(r[c_task])) {
      task_index[r[c_task]] = s.task_ids.size();
      s.task_ids.push_back(r[c_task]);
    }
    double tv = 0.0;
    try {
      tv = axis.parse(r[c_time]);
    } catch (const DataError& e) {
      throw DataError("file " + t.path + ", row " + std::to_string(k + 1) + ", column 'time': " + e.what());
    }
    time_labels.emplace(tv, r[c_time]);
  }
  for (const auto& [tv, label] : time_labels) {
    s.times.push_back(tv);
    s.time_labels.push_back(label);
  }
  const auto p = static_cast<Eigen::Index>(s.task_ids.size());
  const auto n = static_cast<Eigen::Index>(s.times.size());
  s.values = Eigen::MatrixXd::Constant(p, n, std::numeric_limits<double>::quiet_NaN());
  s.observed.setConstant(p, n, false);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> seen;
  seen.setConstant(p, n, false);
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    const auto i = static_cast<Eigen::Index>(task_index[r[c_task]]);
    const double tv = axis.parse(r[c_time]);
    const auto j = static_cast<Eigen::Index>(
        std::lower_bound(s.times.begin(), s.times.end(), tv) - s.times.begin());
    if (seen(i, j)) {
      throw DataError("file " + t.path + ": duplicate entry for task '" + r[c_task] + "' at time " + r[c_time]);
    }
    seen(i, j) = true;
    if (is_missing(r[c_val])) continue;
    s.values(i, j) = parse_double(r[c_val], t, k, "value");
    s.observed(i, j) = true;
  }
  s.validate();
  return s;
}

TaskSeries read_series(const std::filesystem::path& path) {
  TimeAxis axis;
  return read_series(path, axis);
}

void write_series(const std::filesystem::path& path, const TaskSeries& s) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < s.tasks(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      rows.push_back({s.task_ids[i], s.label_of(s.times[j]),
                      s.observed(ii, jj) ? format_double(s.values(ii, jj)) : "NA"});
    }
  write_csv(path, {"task_id", "time", "value"}, rows);
}

LongMatrix read_long_matrix(const std::filesystem::path& path, const std::string& value_column,
                            const TimeAxis* axis_in) {
  const auto t = read_csv(path);
  reject_wide(t, {"task_id", "time", value_column});
  const auto c_task = t.column("task_id"), c_time = t.column("time"), c_val = t.column(value_column);
  std::vector<std::string> time_cells;
  for (const auto& r : t.rows) time_cells.push_back(r[c_time]);
  TimeAxis axis = axis_in ? *axis_in : detect_time_axis(time_cells);
  if (axis_in && !time_cells.empty() && is_iso_date(time_cells.front()) != axis.dates) {
    throw DataError("file " + t.path + " uses a different time format than the series file");
  }

  LongMatrix out;
  std::map<std::string, std::size_t> row_index;
  std::vector<double> times;
  for (const auto& r : t.rows) {
    if (!row_index.count(r[c_task])) {
      row_index[r[c_task]] = out.row_ids.size();
      out.row_ids.push_back(r[c_task]);
    }
    times.push_back(axis.parse(r[c_time]));
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  out.times = times;
  const auto p = static_cast<Eigen::Index>(out.row_ids.size());
  const auto n = static_cast<Eigen::Index>(times.size());
  out.values = Eigen::MatrixXd::Constant(p, n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    const auto i = static_cast<Eigen::Index>(row_index[r[c_task]]);
    const auto j = static_cast<Eigen::Index>(
        std::lower_bound(times.begin(), times.end(), axis.parse(r[c_time])) - times.begin());
    if (!std::isnan(out.values(i, j))) {
      throw DataError("file " + t.path + ": duplicate entry for '" + r[c_task] + "' at time " + r[c_time]);
    }
    if (is_missing(r[c_val])) {
      throw DataError("file " + t.path + ", row " + std::to_string(k + 1) + ": missing " + value_column +
                      " (this file must be complete)");
    }
    out.values(i, j) = parse_double(r[c_val], t, k, value_column);
  }
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (std::isnan(out.values(i, j))) {
        throw DataError("file " + t.path + ": no entry for '" + out.row_ids[static_cast<std::size_t>(i)] +
                        "' at time " + axis.label(times[static_cast<std::size_t>(j)]));
      }
  return out;
}

ContactMatrix read_contact(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  ContactMatrix c;
  // Either a square grid with group names as header, or the same with a
  // leading label column.
  std::size_t first = 0;
  if (t.header.size() == t.rows.size() + 1) first = 1;
  c.groups.assign(t.header.begin() + static_cast<std::ptrdiff_t>(first), t.header.end());
  const auto a = static_cast<Eigen::Index>(c.groups.size());
  if (static_cast<Eigen::Index>(t.rows.size()) != a) {
    throw DataError("file " + t.path + ": contact matrix must be A x A with a header of group names (" +
                    std::to_string(a) + " groups, " + std::to_string(t.rows.size()) + " rows)");
  }
  c.values.resize(a, a);
  for (Eigen::Index i = 0; i < a; ++i)
    for (Eigen::Index j = 0; j < a; ++j) {
      const auto col = static_cast<std::size_t>(j) + first;
      c.values(i, j) = parse_double(t.rows[static_cast<std::size_t>(i)][col], t, static_cast<std::size_t>(i),
                                    t.header[col]);
    }
  return c;
}

void write_contact(const std::filesystem::path& path, const ContactMatrix& c) {
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index i = 0; i < c.values.rows(); ++i) {
    std::vector<std::string> r;
    for (Eigen::Index j = 0; j < c.values.cols(); ++j) r.push_back(format_double(c.values(i, j)));
    rows.push_back(r);
  }
  write_csv(path, c.groups, rows);
}

GroupTable read_groups(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  GroupTable g;
  const auto c_group = t.column("group");
  const auto c_pop = t.column("population");
  const bool has_ifr = t.has_column("ifr");
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  g.population.resize(n);
  if (has_ifr) g.ifr.resize(n);
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    g.groups.push_back(t.rows[k][c_group]);
    g.population(static_cast<Eigen::Index>(k)) = parse_double(t.rows[k][c_pop], t, k, "population");
    if (has_ifr) g.ifr(static_cast<Eigen::Index>(k)) = parse_double(t.rows[k][t.column("ifr")], t, k, "ifr");
  }
  return g;
}

void write_groups(const std::filesystem::path& path, const GroupTable& g) {
  std::vector<std::vector<std::string>> rows;
  const bool has_ifr = g.ifr.size() > 0;
  for (std::size_t k = 0; k < g.groups.size(); ++k) {
    std::vector<std::string> r{g.groups[k]};
    if (has_ifr) r.push_back(format_double(g.ifr(static_cast<Eigen::Index>(k))));
    r.push_back(format_double(g.population(static_cast<Eigen::Index>(k))));
    rows.push_back(r);
  }
  write_csv(path, has_ifr ? std::vector<std::string>{"group", "ifr", "population"}
                          : std::vector<std::string>{"group", "population"},
            rows);
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header) {
  const auto t = read_csv(path);
  if (header) *header = t.header;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          is_missing(t.rows[r][c]) ? std::numeric_limits<double>::quiet_NaN()
                                   : parse_double(t.rows[r][c], t, r, t.header[c]);
    }
  return m;
}

}  // namespace xgp::io
