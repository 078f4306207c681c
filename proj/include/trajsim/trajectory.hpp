#pragma once

#include <cstddef>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace trajsim {

/// Meters per degree of latitude in the equirectangular model.
inline constexpr double kMetersPerDegree = 111320.0;

struct Point {
    double lon = 0.0;
    double lat = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct Trajectory {
    std::string id;
    std::vector<Point> points;

    [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
    [[nodiscard]] bool empty() const noexcept { return points.empty(); }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct BoundingBox {
    double lon_min = 0.0;
    double lon_max = 0.0;
    double lat_min = 0.0;
    double lat_max = 0.0;

    /// Throws std::invalid_argument unless lon_min < lon_max and lat_min < lat_max.
    void validate() const;

    [[nodiscard]] bool contains(const Point& p) const noexcept {
        return p.lon >= lon_min && p.lon <= lon_max && p.lat >= lat_min && p.lat <= lat_max;
    }
    [[nodiscard]] double mid_lat() const noexcept { return 0.5 * (lat_min + lat_max); }

    /// North-south extent in meters.
    [[nodiscard]] double height_m() const noexcept { return (lat_max - lat_min) * kMetersPerDegree; }
    /// East-west extent in meters, measured at the mid-latitude.
    [[nodiscard]] double width_m() const noexcept;

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Uniform M x U partition of a bounding box. Rows run south to north, columns
/// west to east; both are 1-based in GridCell.
struct GridSpec {
    BoundingBox bbox;
    double cell_size = 0.0;
    std::int64_t rows = 0;  // M
    std::int64_t cols = 0;  // U
};

struct GridCell {
    std::int64_t row = 0;
    std::int64_t col = 0;

    friend bool operator==(const GridCell&, const GridCell&) = default;
};

using GridSequence = std::vector<GridCell>;

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> eval;
    std::vector<std::string> test;
};

/// Drops every trajectory with a point outside `bbox` or a length outside
/// [min_len, max_len]. Survivors are returned untouched and in input order.
std::vector<Trajectory> preprocess(const std::vector<Trajectory>& trajs, const BoundingBox& bbox,
                                   std::size_t min_len, std::size_t max_len);

GridSpec make_grid(const BoundingBox& bbox, double cell_size);

/// Maps each point to its cell. Points on the north or east boundary clamp
/// into the last row/column. Throws std::out_of_range naming the first point
/// outside the grid's bounding box.
GridSequence to_grid_sequence(const Trajectory& traj, const GridSpec& grid);

/// Shuffles `ids` with `seed` and cuts it by largest-remainder rounding of
/// the ratio. Remainder ties go to the earlier split (train, then eval).
DatasetSplit split_dataset(const std::vector<std::string>& ids, std::uint64_t seed,
                           std::array<std::size_t, 3> ratio = {7, 1, 2});

/// Split sizes for `n` items under largest-remainder rounding.
std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<std::size_t, 3> ratio);

/// Linear resampling to `count` points equally spaced in arc length (measured
/// with the equirectangular model at the trajectory's own mid-latitude).
Trajectory resample_arc_length(const Trajectory& traj, std::size_t count);

}  // namespace trajsim
