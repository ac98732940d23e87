#pragma once

// Flat `name = value` parameter files. Blank lines and lines starting with
// '#' are ignored; every ParameterSet field must appear exactly once.

#include "diatom/model.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace diatom {

class ParameterFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr std::array<std::pair<std::string_view, double ParameterSet::*>, 15>
    kParameterFields = {{{"a", &ParameterSet::a},
                         {"N_in", &ParameterSet::N_in},
                         {"C_in", &ParameterSet::C_in},
                         {"V_max_N", &ParameterSet::V_max_N},
                         {"V_max_C", &ParameterSet::V_max_C},
                         {"K_N", &ParameterSet::K_N},
                         {"K_C", &ParameterSet::K_C},
                         {"m_D", &ParameterSet::m_D},
                         {"Q_min_N", &ParameterSet::Q_min_N},
                         {"Q_min_C", &ParameterSet::Q_min_C},
                         {"mu_D", &ParameterSet::mu_D},
                         {"mu_M", &ParameterSet::mu_M},
                         {"Theta_D", &ParameterSet::Theta_D},
                         {"Theta_M", &ParameterSet::Theta_M},
                         {"alpha", &ParameterSet::alpha}}};

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

inline ParameterSet parse_parameters(std::istream& in) {
  ParameterSet p;
  std::array<bool, detail::kParameterFields.size()> seen{};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw ParameterFileError("line " + std::to_string(line_no) + ": expected 'name = value'");
    const std::string_view name = detail::trim(text.substr(0, eq));
    const std::string_view value_text = detail::trim(text.substr(eq + 1));

    std::size_t idx = 0;
    while (idx < detail::kParameterFields.size() && detail::kParameterFields[idx].first != name)
      ++idx;
    if (idx == detail::kParameterFields.size())
      throw ParameterFileError("line " + std::to_string(line_no) + ": unknown parameter '" +
                               std::string(name) + "'");
    if (seen[idx])
      throw ParameterFileError("line " + std::to_string(line_no) + ": duplicate parameter '" +
                               std::string(name) + "'");

    double value = 0.0;
    const auto [ptr, ec] =
        std::from_chars(value_text.data(), value_text.data() + value_text.size(), value);
    if (ec != std::errc() || ptr != value_text.data() + value_text.size() || !std::isfinite(value))
      throw ParameterFileError("line " + std::to_string(line_no) + ": bad value for '" +
                               std::string(name) + "'");
    const bool may_vanish = name == "m_D";
    if (may_vanish ? value < 0.0 : value <= 0.0)
      throw ParameterFileError("line " + std::to_string(line_no) + ": '" + std::string(name) +
                               (may_vanish ? "' must be non-negative" : "' must be positive"));
    p.*detail::kParameterFields[idx].second = value;
    seen[idx] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i])
      throw ParameterFileError("missing parameter '" +
                               std::string(detail::kParameterFields[i].first) + "'");
  }
  return p;
}

inline ParameterSet load_parameters(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterFileError("cannot open parameter file '" + path + "'");
  return parse_parameters(in);
}

inline void write_parameters(std::ostream& out, const ParameterSet& p) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& [name, field] : detail::kParameterFields) out << name << " = " << p.*field << '\n';
  out.precision(old_precision);
}

inline void save_parameters(const std::string& path, const ParameterSet& p) {
  std::ofstream out(path);
  if (!out) throw ParameterFileError("cannot write parameter file '" + path + "'");
  write_parameters(out, p);
}

}  // namespace diatom
