#ifndef FGOF_CSV_HPP
#define FGOF_CSV_HPP

#include <Eigen/Core>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fgof/functional_sample.hpp"
#include "fgof/grid.hpp"

namespace fgof {

/// Malformed-input error with file/row/column coordinates in the message.
struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline double parse_cell(const std::string& cell, const std::string& path, std::size_t row,
                         std::size_t col) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0')) {
    std::ostringstream msg;
    msg << path << ": row " << row << ", column " << col << ": not a number: '" << cell << "'";
    throw CsvError(msg.str());
  }
  return v;
}

// All non-comment, non-empty lines split into cells.
inline std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError(path + ": cannot open file");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

}  // namespace detail

/// Curve file: a header row with the grid nodes, then one curve per row.
/// Lines starting with '#' are comments. Interval endpoints default to the
/// first and last node unless supplied.
inline FunctionalSample<double> read_curves_csv(const std::string& path,
                                                std::optional<double> lower = std::nullopt,
                                                std::optional<double> upper = std::nullopt) {
  const auto rows = detail::read_csv_rows(path);
  if (rows.size() < 2) throw CsvError(path + ": need a header row and at least one curve row");
  const std::size_t m = rows[0].size();
  if (m < 2) throw CsvError(path + ": header must list at least 2 grid nodes");

  Eigen::VectorXd nodes(static_cast<Eigen::Index>(m));
  for (std::size_t c = 0; c < m; ++c)
    nodes(static_cast<Eigen::Index>(c)) = detail::parse_cell(rows[0][c], path, 1, c + 1);
  for (Eigen::Index i = 1; i < nodes.size(); ++i)
    if (!(nodes(i) > nodes(i - 1)))
      throw CsvError(path + ": row 1, column " + std::to_string(i + 1) +
                     ": grid nodes must be strictly increasing");

  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(m));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != m)
      throw CsvError(path + ": row " + std::to_string(r + 1) + ": expected " + std::to_string(m) +
                     " cells, found " + std::to_string(rows[r].size()));
    for (std::size_t c = 0; c < m; ++c)
      values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) =
          detail::parse_cell(rows[r][c], path, r + 1, c + 1);
  }

  const double lo = lower.value_or(nodes(0));
  const double hi = upper.value_or(nodes(nodes.size() - 1));
  Grid<double> grid = grid_from_nodes(std::move(nodes), lo, hi);
  return make_sample(std::move(grid), std::move(values));
}

/// Writes curves at full double precision; `header_comments` lines (already
/// including any leading '#') go first.
inline void write_curves_csv(const std::string& path, const FunctionalSample<double>& sample,
                             const std::vector<std::string>& header_comments = {}) {
  std::ofstream out(path);
  if (!out) throw CsvError(path + ": cannot open file for writing");
  for (const auto& c : header_comments) out << c << "\n";
  for (Eigen::Index t = 0; t < sample.m(); ++t)
    out << (t ? "," : "") << detail::format_number(sample.grid.nodes(t));
  out << "\n";
  for (Eigen::Index i = 0; i < sample.n(); ++i) {
    for (Eigen::Index t = 0; t < sample.m(); ++t)
      out << (t ? "," : "") << detail::format_number(sample.values(i, t));
    out << "\n";
  }
}

/// Surface file: header "s,t_1,...,t_mt"; each later row holds an s node
/// followed by the surface values at that s.
struct SurfaceCsv {
  Eigen::VectorXd s_nodes;
  Eigen::VectorXd t_nodes;
  Eigen::MatrixXd values;  // s by t
};

inline SurfaceCsv read_surface_csv(const std::string& path) {
  const auto rows = detail::read_csv_rows(path);
  if (rows.size() < 2) throw CsvError(path + ": need a header row and at least one value row");
  const std::size_t mt = rows[0].size() - 1;
  if (mt < 1) throw CsvError(path + ": header must list response-grid nodes after the corner cell");

  SurfaceCsv out;
  out.t_nodes.resize(static_cast<Eigen::Index>(mt));
  for (std::size_t c = 1; c < rows[0].size(); ++c)
    out.t_nodes(static_cast<Eigen::Index>(c - 1)) = detail::parse_cell(rows[0][c], path, 1, c + 1);
  out.s_nodes.resize(static_cast<Eigen::Index>(rows.size() - 1));
  out.values.resize(out.s_nodes.size(), out.t_nodes.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != mt + 1)
      throw CsvError(path + ": row " + std::to_string(r + 1) + ": expected " + std::to_string(mt + 1) +
                     " cells, found " + std::to_string(rows[r].size()));
    out.s_nodes(static_cast<Eigen::Index>(r - 1)) = detail::parse_cell(rows[r][0], path, r + 1, 1);
    for (std::size_t c = 1; c <= mt; ++c)
      out.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) =
          detail::parse_cell(rows[r][c], path, r + 1, c + 1);
  }
  return out;
}

inline void write_surface_csv(const std::string& path, const Eigen::VectorXd& s_nodes,
                              const Eigen::VectorXd& t_nodes, const Eigen::MatrixXd& values,
                              const std::vector<std::string>& header_comments = {}) {
  if (values.rows() != s_nodes.size() || values.cols() != t_nodes.size())
    throw std::invalid_argument("write_surface_csv: value shape does not match the node vectors");
  std::ofstream out(path);
  if (!out) throw CsvError(path + ": cannot open file for writing");
  for (const auto& c : header_comments) out << c << "\n";
  out << "s";
  for (Eigen::Index t = 0; t < t_nodes.size(); ++t) out << "," << detail::format_number(t_nodes(t));
  out << "\n";
  for (Eigen::Index s = 0; s < s_nodes.size(); ++s) {
    out << detail::format_number(s_nodes(s));
    for (Eigen::Index t = 0; t < t_nodes.size(); ++t)
      out << "," << detail::format_number(values(s, t));
    out << "\n";
  }
}

}  // namespace fgof

#endif
