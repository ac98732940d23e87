#pragma once

// CSV form of trajectories: header t,N,C,Q_N,Q_C,D,M, one row per sample,
// 17 significant digits. The sensitivity form appends the 66 columns
// d<state>_d<parameter>.

#include "diatom/model.hpp"
#include "diatom/ode.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace diatom {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string sensitivity_column_name(Eigen::Index state, Eigen::Index param) {
  return "d" + std::string(kStateNames[static_cast<std::size_t>(state)]) + "_d" +
         std::string(kFreeParameterNames[static_cast<std::size_t>(param)]);
}

/// With `include_initial` the t = 0 state is written as a first row.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj,
                                 bool include_initial = false, bool with_sensitivities = false) {
  if (with_sensitivities && !traj.has_sensitivities())
    throw std::invalid_argument("trajectory carries no sensitivities");
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << 't';
  for (const auto name : kStateNames) out << ',' << name;
  if (with_sensitivities)
    for (Eigen::Index i = 0; i < kStateDim; ++i)
      for (Eigen::Index k = 0; k < kFreeParamCount; ++k) out << ',' << sensitivity_column_name(i, k);
  out << '\n';

  auto row = [&](double t, const StateVector& x, const SensitivityMatrix* s) {
    out << t;
    for (Eigen::Index i = 0; i < kStateDim; ++i) out << ',' << x[i];
    if (s)
      for (Eigen::Index i = 0; i < kStateDim; ++i)
        for (Eigen::Index k = 0; k < kFreeParamCount; ++k) out << ',' << (*s)(i, k);
    out << '\n';
  };
  const SensitivityMatrix zero = SensitivityMatrix::Zero();
  if (include_initial) row(0.0, traj.initial, with_sensitivities ? &zero : nullptr);
  for (std::size_t j = 0; j < traj.size(); ++j)
    row(traj.times[j], traj.states[j], with_sensitivities ? &traj.sensitivities[j] : nullptr);
  out.precision(old_precision);
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_double(std::string_view field, std::size_t line_no) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
    field.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw CsvError("line " + std::to_string(line_no) + ": bad number '" + std::string(field) + "'");
  return value;
}

}  // namespace detail

/// Reads the state columns of a trajectory CSV (extra columns are ignored).
/// A leading t = 0 row becomes `initial`; otherwise `initial` is left zero
/// and `has_initial` reports false.
inline Trajectory read_trajectory_csv(std::istream& in, bool* has_initial = nullptr) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError("empty trajectory file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_commas(line);
  if (header.size() < 1 + kStateDim || header[0] != "t")
    throw CsvError("trajectory header must start with t,N,C,Q_N,Q_C,D,M");
  for (Eigen::Index i = 0; i < kStateDim; ++i)
    if (header[static_cast<std::size_t>(i) + 1] != kStateNames[static_cast<std::size_t>(i)])
      throw CsvError("trajectory header must start with t,N,C,Q_N,Q_C,D,M");

  Trajectory traj;
  bool initial_seen = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != header.size())
      throw CsvError("line " + std::to_string(line_no) + ": expected " +
                     std::to_string(header.size()) + " fields");
    const double t = detail::parse_double(fields[0], line_no);
    StateVector x;
    for (Eigen::Index i = 0; i < kStateDim; ++i)
      x[i] = detail::parse_double(fields[static_cast<std::size_t>(i) + 1], line_no);
    if (t == 0.0 && traj.times.empty() && !initial_seen) {
      traj.initial = x;
      initial_seen = true;
      continue;
    }
    if (!traj.times.empty() && !(t > traj.times.back()))
      throw CsvError("line " + std::to_string(line_no) + ": times must increase");
    traj.times.push_back(t);
    traj.states.push_back(x);
  }
  if (has_initial) *has_initial = initial_seen;
  return traj;
}

inline Trajectory load_trajectory_csv(const std::string& path, bool* has_initial = nullptr) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open " + path);
  return read_trajectory_csv(in, has_initial);
}

}  // namespace diatom
