#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hazsmooth/types.hpp"

namespace hazsmooth {

// One subject observed on two aligned time scales.  The scale of analysis is
// s (time since the second origin, e.g. time since relapse); u = t - s is the
// fixed offset of that origin on the first scale (e.g. time of relapse since
// randomisation).  Exposure runs over (s_in, s_out]; s_in > 0 encodes late
// entry, `event` says whether exit at s_out was a failure or censoring.
struct IndividualRecord {
  std::string id;
  double u = 0.0;
  double s_in = 0.0;
  double s_out = 0.0;
  bool event = false;
  std::vector<double> covariates;
};

// Maps a point from (t, s) to (u, s) with u = t - s.  Only the wedge
// t >= s >= 0 is a valid hazard location.
inline std::pair<double, double> transform_ts_to_us(double t, double s) {
  if (!(s >= 0.0) || !(t >= s))
    throw std::invalid_argument("point outside hazard domain t > s");
  return {t - s, s};
}

inline std::pair<double, double> transform_us_to_ts(double u, double s) {
  return {u + s, s};
}

// Regular bins over [origin, origin + count*width].  Bin j covers
// [edge(j), edge(j+1)), except the last bin which is closed on the right.
// A value sitting exactly on an interior edge therefore belongs to the bin
// whose *left* edge it is.
struct BinAxis {
  double origin = 0.0;
  double width = 1.0;
  int count = 0;
  std::string label = "s";

  void validate() const {
    if (!(width > 0.0) || !std::isfinite(width) || !std::isfinite(origin))
      throw std::invalid_argument("BinAxis: width must be positive and finite");
    if (count < 1) throw std::invalid_argument("BinAxis: count must be positive");
  }

  double end() const { return origin + count * width; }
  double edge(int j) const { return origin + j * width; }
  double midpoint(int j) const { return origin + (j + 0.5) * width; }

  std::vector<double> midpoints() const {
    std::vector<double> m(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) m[static_cast<std::size_t>(j)] = midpoint(j);
    return m;
  }

  // Returns -1 below the grid and `count` above it.
  int find_bin(double x) const {
    if (x < origin) return -1;
    if (x > end()) return count;
    int j = static_cast<int>(std::floor((x - origin) / width));
    return std::clamp(j, 0, count - 1);
  }
};

struct BinGrid2D {
  BinAxis u;
  BinAxis s;
};

struct BinnedData1D {
  Vector y;  // event counts per bin
  Vector r;  // exposure time per bin
  BinAxis grid;
};

struct BinnedData2D {
  Matrix Y;  // n_u x n_s event counts
  Matrix R;  // n_u x n_s exposure
  BinGrid2D grid;
};

// Per-subject contribution to the grid: one u-row, a contiguous run of
// s-exposures, and the s-bin of the event (or -1).  Note the event bin can
// lie just past the exposure run when s_out falls exactly on a bin edge.
struct PersonSlice {
  int u_row = -1;
  int s_first = 0;
  Vector exposure;
  int event_bin = -1;
};

struct BinnedData3D {
  std::vector<PersonSlice> slices;
  Matrix X;  // n x p covariates, in record order
  BinGrid2D grid;

  BinnedData2D aggregate() const {
    BinnedData2D out;
    out.grid = grid;
    out.Y = Matrix::Zero(grid.u.count, grid.s.count);
    out.R = Matrix::Zero(grid.u.count, grid.s.count);
    for (const PersonSlice& sl : slices) {
      for (Eigen::Index k = 0; k < sl.exposure.size(); ++k)
        out.R(sl.u_row, sl.s_first + static_cast<int>(k)) += sl.exposure[k];
      if (sl.event_bin >= 0) out.Y(sl.u_row, sl.event_bin) += 1.0;
    }
    return out;
  }
};

namespace detail {

// Single source of truth for slicing one record along the s axis; bin_1d,
// bin_2d and bin_individuals all route through here so their totals agree
// exactly, not just within rounding.
inline PersonSlice slice_on_axis(const IndividualRecord& rec, const BinAxis& axis) {
  PersonSlice sl;
  const double lo = std::max(rec.s_in, axis.origin);
  const double hi = std::min(rec.s_out, axis.end());
  if (hi > lo) {
    const int j_lo = axis.find_bin(lo);
    const int j_hi = axis.find_bin(hi);
    sl.s_first = j_lo;
    sl.exposure = Vector::Zero(j_hi - j_lo + 1);
    for (int j = j_lo; j <= j_hi; ++j) {
      const double a = std::max(lo, axis.edge(j));
      const double b = std::min(hi, axis.edge(j + 1));
      if (b > a) sl.exposure[j - j_lo] = b - a;
    }
  }
  if (rec.event && rec.s_out >= axis.origin && rec.s_out <= axis.end())
    sl.event_bin = axis.find_bin(rec.s_out);
  return sl;
}

inline void check_record_interval(const IndividualRecord& rec) {
  if (!std::isfinite(rec.u) || !std::isfinite(rec.s_in) || !std::isfinite(rec.s_out))
    throw std::invalid_argument("record id=" + rec.id + ": non-finite time value");
  if (!(rec.s_in < rec.s_out))
    throw std::invalid_argument("record id=" + rec.id + ": s_in >= s_out");
}

inline void check_axis_covers(std::span<const IndividualRecord> records, const BinAxis& axis) {
  std::string uncovered;
  int n_bad = 0;
  for (const IndividualRecord& rec : records) {
    if (rec.s_out > axis.end()) {
      if (n_bad < 5) uncovered += (n_bad ? ", " : "") + rec.id;
      ++n_bad;
    }
  }
  if (n_bad > 0)
    throw std::invalid_argument("s grid ends at " + std::to_string(axis.end()) + " but " +
                                std::to_string(n_bad) + " record(s) exit later: " + uncovered +
                                (n_bad > 5 ? ", ..." : ""));
}

}  // namespace detail

inline BinnedData1D bin_1d(std::span<const IndividualRecord> records, const BinAxis& axis) {
  axis.validate();
  for (const IndividualRecord& rec : records) detail::check_record_interval(rec);
  detail::check_axis_covers(records, axis);

  BinnedData1D out;
  out.grid = axis;
  out.y = Vector::Zero(axis.count);
  out.r = Vector::Zero(axis.count);
  for (const IndividualRecord& rec : records) {
    const PersonSlice sl = detail::slice_on_axis(rec, axis);
    for (Eigen::Index k = 0; k < sl.exposure.size(); ++k)
      out.r[sl.s_first + static_cast<int>(k)] += sl.exposure[k];
    if (sl.event_bin >= 0) out.y[sl.event_bin] += 1.0;
  }
  return out;
}

namespace detail {

inline int u_row_checked(const IndividualRecord& rec, const BinAxis& u_axis) {
  const int row = u_axis.find_bin(rec.u);
  if (row < 0 || row >= u_axis.count)
    throw std::invalid_argument("record id=" + rec.id + ": u=" + std::to_string(rec.u) +
                                " outside the u grid");
  return row;
}

}  // namespace detail

inline BinnedData2D bin_2d(std::span<const IndividualRecord> records, const BinGrid2D& grid) {
  grid.u.validate();
  grid.s.validate();
  for (const IndividualRecord& rec : records) detail::check_record_interval(rec);
  detail::check_axis_covers(records, grid.s);

  BinnedData2D out;
  out.grid = grid;
  out.Y = Matrix::Zero(grid.u.count, grid.s.count);
  out.R = Matrix::Zero(grid.u.count, grid.s.count);
  for (const IndividualRecord& rec : records) {
    const int row = detail::u_row_checked(rec, grid.u);
    const PersonSlice sl = detail::slice_on_axis(rec, grid.s);
    for (Eigen::Index k = 0; k < sl.exposure.size(); ++k)
      out.R(row, sl.s_first + static_cast<int>(k)) += sl.exposure[k];
    if (sl.event_bin >= 0) out.Y(row, sl.event_bin) += 1.0;
  }
  return out;
}

// Keeps per-subject slices (needed by models with subject-level covariates).
// Summing the slices reproduces bin_2d exactly; see BinnedData3D::aggregate.
inline BinnedData3D bin_individuals(std::span<const IndividualRecord> records,
                                    const BinGrid2D& grid) {
  grid.u.validate();
  grid.s.validate();
  for (const IndividualRecord& rec : records) detail::check_record_interval(rec);
  detail::check_axis_covers(records, grid.s);

  const std::size_t p = records.empty() ? 0 : records.front().covariates.size();
  for (const IndividualRecord& rec : records)
    if (rec.covariates.size() != p)
      throw std::invalid_argument("record id=" + rec.id + ": expected " + std::to_string(p) +
                                  " covariates, got " + std::to_string(rec.covariates.size()));

  BinnedData3D out;
  out.grid = grid;
  out.slices.reserve(records.size());
  out.X = Matrix::Zero(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const IndividualRecord& rec = records[i];
    PersonSlice sl = detail::slice_on_axis(rec, grid.s);
    sl.u_row = detail::u_row_checked(rec, grid.u);
    out.slices.push_back(std::move(sl));
    for (std::size_t v = 0; v < p; ++v)
      out.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) = rec.covariates[v];
  }
  return out;
}

// Convenience for data recorded on the t scale: the second origin sits at
// calendar/first-scale time u, exit at t_exit, optional late entry at t_entry.
inline IndividualRecord record_from_t_times(std::string id, double u_origin, double t_exit,
                                            bool event, std::vector<double> covariates = {},
                                            std::optional<double> t_entry = std::nullopt) {
  IndividualRecord rec;
  rec.id = std::move(id);
  rec.u = u_origin;
  rec.s_out = t_exit - u_origin;
  rec.s_in = t_entry ? std::max(0.0, *t_entry - u_origin) : 0.0;
  rec.event = event;
  rec.covariates = std::move(covariates);
  detail::check_record_interval(rec);
  return rec;
}

// ---------------------------------------------------------------------------
// CSV interface.  Header must contain id,u,s_in,s_out,event; any additional
// columns are treated as numeric covariates and kept in header order.
// ---------------------------------------------------------------------------

struct RecordSet {
  std::vector<IndividualRecord> records;
  std::vector<std::string> covariate_names;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  for (std::string& f : fields) {
    const auto a = f.find_first_not_of(" \t");
    const auto b = f.find_last_not_of(" \t");
    f = (a == std::string::npos) ? std::string{} : f.substr(a, b - a + 1);
  }
  return fields;
}

inline double parse_double_field(const std::string& field, std::size_t line_no,
                                 const std::string& column) {
  double value{};
  const char* first = field.data();
  const char* last = first + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": cannot parse '" +
                                field + "' in column " + column);
  return value;
}

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline RecordSet read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("CSV: empty input");
  const std::vector<std::string> header = detail::split_csv_line(line);

  const auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::invalid_argument("CSV: missing required column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = col("id"), c_u = col("u"), c_in = col("s_in"), c_out = col("s_out"),
                    c_ev = col("event");

  RecordSet out;
  std::vector<std::size_t> cov_cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j == c_id || j == c_u || j == c_in || j == c_out || j == c_ev) continue;
    if (header[j].empty())
      throw std::invalid_argument("CSV: empty column name in header");
    cov_cols.push_back(j);
    out.covariate_names.push_back(header[j]);
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != header.size())
      throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(f.size()));
    IndividualRecord rec;
    rec.id = f[c_id];
    rec.u = detail::parse_double_field(f[c_u], line_no, "u");
    rec.s_in = detail::parse_double_field(f[c_in], line_no, "s_in");
    rec.s_out = detail::parse_double_field(f[c_out], line_no, "s_out");
    const double ev = detail::parse_double_field(f[c_ev], line_no, "event");
    if (ev != 0.0 && ev != 1.0)
      throw std::invalid_argument("CSV line " + std::to_string(line_no) +
                                  ": event must be 0 or 1");
    rec.event = ev == 1.0;
    rec.covariates.reserve(cov_cols.size());
    for (std::size_t j : cov_cols)
      rec.covariates.push_back(detail::parse_double_field(f[j], line_no, header[j]));
    detail::check_record_interval(rec);
    out.records.push_back(std::move(rec));
  }
  return out;
}

inline RecordSet read_records_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open CSV file: " + path);
  try {
    return read_records_csv(in);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

inline void write_records_csv(std::ostream& out, std::span<const IndividualRecord> records,
                              std::span<const std::string> covariate_names = {}) {
  out << "id,u,s_in,s_out,event";
  for (const std::string& name : covariate_names) out << ',' << name;
  out << '\n';
  for (const IndividualRecord& rec : records) {
    if (rec.covariates.size() != covariate_names.size())
      throw std::invalid_argument("record id=" + rec.id +
                                  ": covariate count does not match header");
    out << rec.id << ',' << detail::format_double(rec.u) << ',' << detail::format_double(rec.s_in)
        << ',' << detail::format_double(rec.s_out) << ',' << (rec.event ? '1' : '0');
    for (double x : rec.covariates) out << ',' << detail::format_double(x);
    out << '\n';
  }
}

}  // namespace hazsmooth
