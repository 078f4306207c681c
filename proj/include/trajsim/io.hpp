#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "trajsim/trajectory.hpp"

namespace trajsim {

/// Reads the `traj_id,seq,lon,lat` CSV format. Trajectories come back in
/// order of first appearance, points in file order. Throws DataError with
/// the offending line number on malformed rows, duplicate (id, seq) pairs or
/// non-contiguous seq values.
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path);
std::vector<Trajectory> parse_trajectories(std::istream& in, const std::string& source = "<stream>");

void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajs);
void save_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajs);

/// Writes through a sibling temporary file and renames it into place, so
/// `path` is either untouched or complete.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& writer, bool binary = false);

}  // namespace trajsim
