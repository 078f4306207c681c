#include "trajsim/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace trajsim {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

}  // namespace

void BoundingBox::validate() const {
    if (!(std::isfinite(lon_min) && std::isfinite(lon_max) && std::isfinite(lat_min) &&
          std::isfinite(lat_max))) {
        throw std::invalid_argument("bounding box has non-finite bounds");
    }
    if (!(lon_min < lon_max) || !(lat_min < lat_max)) {
        throw std::invalid_argument("degenerate bounding box: need lon_min < lon_max and lat_min < lat_max");
    }
}

double BoundingBox::width_m() const noexcept {
    return (lon_max - lon_min) * kMetersPerDegree * std::cos(mid_lat() * kDegToRad);
}

std::vector<Trajectory> preprocess(const std::vector<Trajectory>& trajs, const BoundingBox& bbox,
                                   std::size_t min_len, std::size_t max_len) {
    if (min_len < 2 || min_len > max_len) {
        throw std::invalid_argument("preprocess: need 2 <= min_len <= max_len");
    }
    std::vector<Trajectory> kept;
    for (const auto& t : trajs) {
        if (t.size() < min_len || t.size() > max_len) {
            continue;
        }
        if (!std::all_of(t.points.begin(), t.points.end(),
                         [&](const Point& p) { return bbox.contains(p); })) {
            continue;
        }
        kept.push_back(t);
    }
    return kept;
}

GridSpec make_grid(const BoundingBox& bbox, double cell_size) {
    bbox.validate();
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
        throw std::invalid_argument("make_grid: cell_size must be positive");
    }
    GridSpec g;
    g.bbox = bbox;
    g.cell_size = cell_size;
    // Extents that are an exact multiple of the cell size up to rounding
    // noise must not gain an extra row or column.
    auto cells = [&](double extent) {
        return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(extent / cell_size - 1e-9)));
    };
    g.rows = cells(bbox.height_m());
    g.cols = cells(bbox.width_m());
    return g;
}

GridSequence to_grid_sequence(const Trajectory& traj, const GridSpec& grid) {
    const auto& b = grid.bbox;
    const double m_per_lon = kMetersPerDegree * std::cos(b.mid_lat() * kDegToRad);
    GridSequence cells;
    cells.reserve(traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const Point& p = traj.points[k];
        if (!b.contains(p)) {
            throw std::out_of_range("point " + std::to_string(k) + " of trajectory '" + traj.id +
                                    "' lies outside the grid bounding box");
        }
        const double north = (p.lat - b.lat_min) * kMetersPerDegree;
        const double east = (p.lon - b.lon_min) * m_per_lon;
        const auto row = static_cast<std::int64_t>(std::floor(north / grid.cell_size)) + 1;
        const auto col = static_cast<std::int64_t>(std::floor(east / grid.cell_size)) + 1;
        cells.push_back({std::clamp<std::int64_t>(row, 1, grid.rows),
                         std::clamp<std::int64_t>(col, 1, grid.cols)});
    }
    return cells;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<std::size_t, 3> ratio) {
    const std::size_t total = ratio[0] + ratio[1] + ratio[2];
    if (total == 0) {
        throw std::invalid_argument("split ratio must not be all zero");
    }
    std::array<std::size_t, 3> sizes{};
    std::array<std::size_t, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        sizes[i] = n * ratio[i] / total;
        remainder[i] = n * ratio[i] % total;
        assigned += sizes[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) {
        ++sizes[order[k]];
    }
    return sizes;
}

DatasetSplit split_dataset(const std::vector<std::string>& ids, std::uint64_t seed,
                           std::array<std::size_t, 3> ratio) {
    if (ids.empty()) {
        throw std::invalid_argument("split_dataset: no ids");
    }
    std::vector<std::string> shuffled = ids;
    std::mt19937_64 rng(seed);
    // Fisher-Yates with an explicit draw keeps the split independent of the
    // standard library's shuffle implementation.
    for (std::size_t i = shuffled.size() - 1; i > 0; --i) {
        const std::size_t j = rng() % (i + 1);
        std::swap(shuffled[i], shuffled[j]);
    }
    const auto sizes = split_sizes(ids.size(), ratio);
    DatasetSplit out;
    auto it = shuffled.begin();
    out.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
    it += static_cast<std::ptrdiff_t>(sizes[0]);
    out.eval.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
    it += static_cast<std::ptrdiff_t>(sizes[1]);
    out.test.assign(it, shuffled.end());
    return out;
}

Trajectory resample_arc_length(const Trajectory& traj, std::size_t count) {
    if (traj.empty() || count < 2) {
        throw std::invalid_argument("resample_arc_length: need a non-empty trajectory and count >= 2");
    }
    Trajectory out{traj.id, {}};
    out.points.reserve(count);
    if (traj.size() == 1) {
        out.points.assign(count, traj.points.front());
        return out;
    }
    double lat_sum = 0.0;
    for (const auto& p : traj.points) {
        lat_sum += p.lat;
    }
    const double m_per_lon =
        kMetersPerDegree * std::cos(lat_sum / static_cast<double>(traj.size()) * kDegToRad);

    std::vector<double> cum(traj.size(), 0.0);
    for (std::size_t i = 1; i < traj.size(); ++i) {
        const double dx = (traj.points[i].lon - traj.points[i - 1].lon) * m_per_lon;
        const double dy = (traj.points[i].lat - traj.points[i - 1].lat) * kMetersPerDegree;
        cum[i] = cum[i - 1] + std::hypot(dx, dy);
    }
    const double total = cum.back();
    if (total <= 0.0) {
        out.points.assign(count, traj.points.front());
        return out;
    }
    std::size_t seg = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const double s = total * static_cast<double>(k) / static_cast<double>(count - 1);
        while (seg + 2 < traj.size() && cum[seg + 1] < s) {
            ++seg;
        }
        const double len = cum[seg + 1] - cum[seg];
        const double w = len > 0.0 ? std::clamp((s - cum[seg]) / len, 0.0, 1.0) : 0.0;
        const Point& a = traj.points[seg];
        const Point& b = traj.points[seg + 1];
        out.points.push_back({a.lon + w * (b.lon - a.lon), a.lat + w * (b.lat - a.lat)});
    }
    out.points.back() = traj.points.back();
    return out;
}

}  // namespace trajsim
