#include "trajsim/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

namespace trajsim {

BoundingBox porto_bbox() { return {-8.519, -8.005, 41.1001, 41.2086}; }

namespace {

struct Cluster {
    double x0 = 0.0;  // anchor in meters from the south-west corner
    double y0 = 0.0;
    double heading = 0.0;
    double turn = 0.0;
};

}  // namespace

std::vector<Trajectory> synthetic_trajectories(const SyntheticOptions& opts) {
    opts.bbox.validate();
    if (opts.clusters == 0 || opts.min_len < 2 || opts.min_len > opts.max_len || !(opts.step_m > 0.0)) {
        throw std::invalid_argument("synthetic options need clusters >= 1, 2 <= min_len <= max_len, step_m > 0");
    }
    const double width = opts.bbox.width_m();
    const double height = opts.bbox.height_m();
    const double lon_scale = (opts.bbox.lon_max - opts.bbox.lon_min) / width;
    const double lat_scale = (opts.bbox.lat_max - opts.bbox.lat_min) / height;

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<Cluster> clusters(opts.clusters);
    for (auto& c : clusters) {
        c.x0 = width * (0.15 + 0.7 * unit(rng));
        c.y0 = height * (0.15 + 0.7 * unit(rng));
        c.heading = 2.0 * std::numbers::pi * unit(rng);
        c.turn = 0.08 * normal(rng);
    }

    std::uniform_int_distribution<std::size_t> length(opts.min_len, opts.max_len);
    std::uniform_int_distribution<std::size_t> pick(0, opts.clusters - 1);
    std::vector<Trajectory> out;
    out.reserve(opts.count);
    for (std::size_t i = 0; i < opts.count; ++i) {
        const Cluster& c = clusters[pick(rng)];
        char id[32];
        std::snprintf(id, sizeof id, "syn%04zu", i);
        Trajectory t{id, {}};
        const std::size_t n = length(rng);
        double x = c.x0 + 250.0 * normal(rng);
        double y = c.y0 + 250.0 * normal(rng);
        double heading = c.heading + 0.15 * normal(rng);
        for (std::size_t k = 0; k < n; ++k) {
            x = std::clamp(x, 0.0, width);
            y = std::clamp(y, 0.0, height);
            t.points.push_back({std::min(opts.bbox.lon_max, opts.bbox.lon_min + x * lon_scale),
                                std::min(opts.bbox.lat_max, opts.bbox.lat_min + y * lat_scale)});
            heading += c.turn + 0.1 * normal(rng);
            const double step = opts.step_m * (1.0 + 0.2 * normal(rng));
            double nx = x + step * std::cos(heading);
            double ny = y + step * std::sin(heading);
            // Reflect off the box edges.
            if (nx < 0.0 || nx > width) {
                heading = std::numbers::pi - heading;
                nx = x + step * std::cos(heading);
            }
            if (ny < 0.0 || ny > height) {
                heading = -heading;
                ny = y + step * std::sin(heading);
            }
            x = nx;
            y = ny;
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace trajsim
