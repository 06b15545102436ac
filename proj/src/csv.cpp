#include "bayesdyn/csv.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "bayesdyn/errors.hpp"
#include "json.hpp"

namespace bayesdyn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

// Reads the header and data rows, checking column counts and numbers.
struct Table {
  std::vector<std::string_view> header_fields;
  std::string header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;
};

Table read_table(std::istream& in, const std::string& source) {
  Table table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw DataError(source + ": empty file");
  table.header = std::string(trim(line));
  table.header_fields = split(table.header);
  const std::size_t cols = table.header_fields.size();

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != cols) {
      throw DataError(fmt::format("{}: line {}: expected {} fields, found {}", source, line_no, cols,
                                  fields.size()));
    }
    std::vector<double> row(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      try {
        row[c] = parse_number(fields[c]);
      } catch (const DataError& e) {
        throw DataError(fmt::format("{}: line {}: column {}: {}", source, line_no, c + 1, e.what()));
      }
    }
    if (!table.rows.empty() && !(row[0] > table.rows.back()[0])) {
      throw DataError(fmt::format("{}: line {}: time {} does not increase", source, line_no,
                                  fields[0]));
    }
    if (!std::isfinite(row[0])) {
      throw DataError(fmt::format("{}: line {}: time must be finite", source, line_no));
    }
    table.rows.push_back(std::move(row));
    table.line_numbers.push_back(line_no);
  }
  if (table.rows.empty()) throw DataError(source + ": no data rows");
  return table;
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", value);
}

double parse_number(std::string_view token) {
  token = trim(token);
  if (token.empty()) throw DataError("empty number");
  if (token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw DataError("'" + std::string(token) + "' is not a number");
  }
  return value;
}

std::vector<std::string> component_names(std::size_t dim) {
  if (dim == 3) return {"x", "y", "z"};
  std::vector<std::string> names;
  for (std::size_t i = 0; i < dim; ++i) names.push_back("u" + std::to_string(i + 1));
  return names;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const auto names = component_names(traj.dimension());
  out << "t";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < traj.grid.size(); ++i) {
    out << format_number(traj.grid[i]);
    for (double v : traj.states[i]) out << ',' << format_number(v);
    out << '\n';
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  auto out = open_for_write(path);
  write_trajectory_csv(out, traj);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Trajectory read_trajectory_csv(std::istream& in, const std::string& source) {
  const auto table = read_table(in, source);
  if (table.header_fields.size() < 2 || table.header_fields[0] != "t") {
    throw DataError(source + ": line 1: header must be 't' followed by state columns");
  }
  Trajectory traj;
  std::vector<double> times;
  for (const auto& row : table.rows) {
    times.push_back(row[0]);
    State s(row.begin() + 1, row.end());
    for (double v : s) {
      if (!std::isfinite(v)) traj.blew_up = true;
    }
    traj.states.push_back(std::move(s));
  }
  traj.grid = TimeGrid(std::move(times));
  return traj;
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  return read_trajectory_csv(in, path.string());
}

void write_envelope_csv(std::ostream& out, const TrajectoryEnvelope& env) {
  const auto names = component_names(env.dim);
  out << "t";
  for (const auto& n : names) out << ",mean_" << n << ",lo_" << n << ",hi_" << n;
  out << '\n';
  for (std::size_t i = 0; i < env.grid.size(); ++i) {
    out << format_number(env.grid[i]);
    for (std::size_t c = 0; c < env.dim; ++c) {
      const auto at = env.index(i, c);
      out << ',' << format_number(env.mean[at]) << ',' << format_number(env.lower[at]) << ','
          << format_number(env.upper[at]);
    }
    out << '\n';
  }
}

void write_envelope_csv(const std::filesystem::path& path, const TrajectoryEnvelope& env) {
  auto out = open_for_write(path);
  write_envelope_csv(out, env);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

TrajectoryEnvelope read_envelope_csv(std::istream& in, const std::string& source) {
  const auto table = read_table(in, source);
  const auto& fields = table.header_fields;
  if (fields.size() < 4 || (fields.size() - 1) % 3 != 0 || fields[0] != "t") {
    throw DataError(source + ": line 1: header must be 't' followed by mean/lo/hi column triples");
  }
  TrajectoryEnvelope env;
  env.dim = (fields.size() - 1) / 3;
  for (std::size_t c = 0; c < env.dim; ++c) {
    if (!fields[1 + 3 * c].starts_with("mean_") || !fields[2 + 3 * c].starts_with("lo_") ||
        !fields[3 + 3 * c].starts_with("hi_")) {
      throw DataError(source + ": line 1: expected mean_/lo_/hi_ columns for component " +
                      std::to_string(c + 1));
    }
  }
  std::vector<double> times;
  for (const auto& row : table.rows) {
    times.push_back(row[0]);
    for (std::size_t c = 0; c < env.dim; ++c) {
      env.mean.push_back(row[1 + 3 * c]);
      env.lower.push_back(row[2 + 3 * c]);
      env.upper.push_back(row[3 + 3 * c]);
    }
  }
  env.grid = TimeGrid(std::move(times));
  return env;
}

TrajectoryEnvelope read_envelope_csv(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  return read_envelope_csv(in, path.string());
}

void write_envelope_meta(const std::filesystem::path& path, const TrajectoryEnvelope& env,
                         std::size_t required) {
  nlohmann::json meta = {{"retained", env.retained}, {"discarded", env.discarded},
                         {"M", required},           {"c_conf", env.confidence},
                         {"sigma_eps", env.sigma_eps}, {"seed", env.seed}};
  auto out = open_for_write(path);
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
  auto out = open_for_write(path);
  out << "iter,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << format_number(losses[i]) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace bayesdyn
