#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajsim/trajectory.hpp"

namespace trajsim {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// How (lon, lat) pairs become planar coordinates before Euclidean distance.
/// Geographic mode is the local equirectangular projection around `ref_lat`;
/// planar mode reads (lon, lat) as raw (x, y).
struct DistanceModel {
    enum class Kind { planar, geographic };

    Kind kind = Kind::planar;
    double ref_lat = 0.0;

    static DistanceModel planar() { return {Kind::planar, 0.0}; }
    static DistanceModel geographic(double ref_lat) { return {Kind::geographic, ref_lat}; }
    static DistanceModel for_bbox(const BoundingBox& b) { return geographic(b.mid_lat()); }

    [[nodiscard]] Vec2 project(const Point& p) const noexcept;
    [[nodiscard]] std::vector<Vec2> project(const Trajectory& t) const;
};

enum class Metric : std::uint8_t { sspd = 0, hausdorff = 1, frechet = 2 };

std::string_view to_string(Metric m);
/// Accepts "sspd", "hausdorff", "frechet". Throws std::invalid_argument otherwise.
Metric parse_metric(std::string_view name);

// Kernels on projected coordinates. Each throws std::invalid_argument on
// inputs that are too short for the metric.
double frechet_discrete(std::span<const Vec2> a, std::span<const Vec2> b);
double hausdorff(std::span<const Vec2> a, std::span<const Vec2> b);
double sspd(std::span<const Vec2> a, std::span<const Vec2> b);
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) noexcept;
double distance(std::span<const Vec2> a, std::span<const Vec2> b, Metric m);

double frechet_discrete(const Trajectory& a, const Trajectory& b, const DistanceModel& model);
double hausdorff(const Trajectory& a, const Trajectory& b, const DistanceModel& model);
double sspd(const Trajectory& a, const Trajectory& b, const DistanceModel& model);
double distance(const Trajectory& a, const Trajectory& b, Metric m, const DistanceModel& model);

/// Dense symmetric N x N ground-truth matrix.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    DistanceMatrix(std::size_t n, Metric metric) : n_(n), metric_(metric), values_(n * n, 0.0) {}

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] Metric metric() const noexcept { return metric_; }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * n_ + j]; }
    double& operator()(std::size_t i, std::size_t j) noexcept { return values_[i * n_ + j]; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
        return std::span<const double>(values_).subspan(i * n_, n_);
    }

    /// Principal submatrix over `indices`, in that order.
    [[nodiscard]] DistanceMatrix select(std::span<const std::size_t> indices) const;

    /// Mean of the off-diagonal entries.
    [[nodiscard]] double mean_off_diagonal() const;

    /// Throws DataError unless symmetric within 1e-9, zero on the diagonal,
    /// finite and non-negative everywhere.
    void validate() const;

    friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

private:
    std::size_t n_ = 0;
    Metric metric_ = Metric::sspd;
    std::vector<double> values_;
};

/// Computes the upper triangle on `threads` workers (0 = all cores) and
/// mirrors it. The result does not depend on the thread count.
DistanceMatrix build_matrix(const std::vector<Trajectory>& trajs, Metric metric,
                            const DistanceModel& model, std::size_t threads = 0);

// TSDM binary format: "TSDM", u32 version = 1, u8 metric tag, u64 N, then
// N*N little-endian float64 in row-major order.
void save_matrix(const std::filesystem::path& path, const DistanceMatrix& m);
DistanceMatrix load_matrix(const std::filesystem::path& path);
void write_matrix(std::ostream& out, const DistanceMatrix& m);
DistanceMatrix read_matrix(std::istream& in);

}  // namespace trajsim
