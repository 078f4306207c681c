#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "trajsim/trajectory.hpp"

namespace trajsim {

/// Bounding box of the Porto taxi dataset.
BoundingBox porto_bbox();

struct SyntheticOptions {
    std::size_t count = 300;
    std::size_t clusters = 10;
    std::size_t min_len = 20;
    std::size_t max_len = 76;
    BoundingBox bbox = porto_bbox();
    /// Mean step length in meters.
    double step_m = 120.0;
    std::uint64_t seed = 1;
};

/// Mixture of random-walk clusters: every cluster has an anchor, heading and
/// turn rate, and its members are noisy walks started near the anchor. All
/// points stay inside the bounding box. Ids are "syn0000", "syn0001", ...
std::vector<Trajectory> synthetic_trajectories(const SyntheticOptions& opts);

}  // namespace trajsim
