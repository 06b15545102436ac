#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bayesdyn/ode.hpp"
#include "bayesdyn/predictor.hpp"

namespace bayesdyn {

/// 17 significant digits; non-finite values as nan, inf, -inf.
std::string format_number(double value);
/// Inverse of format_number. Throws DataError on anything else.
double parse_number(std::string_view token);

std::vector<std::string> component_names(std::size_t dim);

/// Header `t,x,y,z` (three components) or `t,u1,...,un`.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
/// Errors name the offending line number.
Trajectory read_trajectory_csv(std::istream& in, const std::string& source = "<stream>");
Trajectory read_trajectory_csv(const std::filesystem::path& path);

/// Header `t,mean_x,lo_x,hi_x,...`.
void write_envelope_csv(std::ostream& out, const TrajectoryEnvelope& env);
void write_envelope_csv(const std::filesystem::path& path, const TrajectoryEnvelope& env);
/// Restores grid, mean and bounds; std and counts are not part of the file.
TrajectoryEnvelope read_envelope_csv(std::istream& in, const std::string& source = "<stream>");
TrajectoryEnvelope read_envelope_csv(const std::filesystem::path& path);

/// Side-car `{retained, discarded, M, c_conf, sigma_eps, seed}`.
void write_envelope_meta(const std::filesystem::path& path, const TrajectoryEnvelope& env,
                         std::size_t required);

/// Header `iter,loss`.
void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses);

}  // namespace bayesdyn
