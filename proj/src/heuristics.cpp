#include "trajsim/heuristics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "trajsim/error.hpp"
#include "trajsim/io.hpp"
#include "trajsim/parallel.hpp"

namespace trajsim {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
constexpr std::uint32_t kMatrixVersion = 1;

inline double sq_dist(Vec2 a, Vec2 b) noexcept {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
}

double directed_hausdorff_sq(std::span<const Vec2> from, std::span<const Vec2> to) {
    double worst = 0.0;
    for (const Vec2 p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec2 q : to) {
            best = std::min(best, sq_dist(p, q));
        }
        worst = std::max(worst, best);
    }
    return worst;
}

double directed_spd(std::span<const Vec2> from, std::span<const Vec2> to) {
    double total = 0.0;
    for (const Vec2 p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s + 1 < to.size(); ++s) {
            best = std::min(best, point_segment_distance(p, to[s], to[s + 1]));
        }
        total += best;
    }
    return total / static_cast<double>(from.size());
}

}  // namespace

Vec2 DistanceModel::project(const Point& p) const noexcept {
    if (kind == Kind::planar) {
        return {p.lon, p.lat};
    }
    return {p.lon * kMetersPerDegree * std::cos(ref_lat * kDegToRad), p.lat * kMetersPerDegree};
}

std::vector<Vec2> DistanceModel::project(const Trajectory& t) const {
    std::vector<Vec2> out;
    out.reserve(t.size());
    for (const auto& p : t.points) {
        out.push_back(project(p));
    }
    return out;
}

std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::sspd:
            return "sspd";
        case Metric::hausdorff:
            return "hausdorff";
        case Metric::frechet:
            return "frechet";
    }
    return "unknown";
}

Metric parse_metric(std::string_view name) {
    if (name == "sspd") {
        return Metric::sspd;
    }
    if (name == "hausdorff") {
        return Metric::hausdorff;
    }
    if (name == "frechet") {
        return Metric::frechet;
    }
    throw std::invalid_argument("unknown metric '" + std::string(name) + "' (expected sspd, hausdorff or frechet)");
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) noexcept {
    const double vx = b.x - a.x;
    const double vy = b.y - a.y;
    const double len_sq = vx * vx + vy * vy;
    const double t = len_sq > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len_sq : 0.0;
    // Clamped projections use the endpoint itself so that a point on a
    // vertex measures exactly zero.
    if (t <= 0.0) {
        return std::sqrt(sq_dist(p, a));
    }
    if (t >= 1.0) {
        return std::sqrt(sq_dist(p, b));
    }
    const double dx = p.x - (a.x + t * vx);
    const double dy = p.y - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

double frechet_discrete(std::span<const Vec2> a, std::span<const Vec2> b) {
    if (a.empty() || b.empty()) {
        throw std::invalid_argument("frechet_discrete: empty trajectory");
    }
    // Rolling row of the coupling table, in squared distances.
    std::vector<double> row(b.size());
    row[0] = sq_dist(a[0], b[0]);
    for (std::size_t j = 1; j < b.size(); ++j) {
        row[j] = std::max(sq_dist(a[0], b[j]), row[j - 1]);
    }
    for (std::size_t i = 1; i < a.size(); ++i) {
        double diag = row[0];
        row[0] = std::max(sq_dist(a[i], b[0]), row[0]);
        for (std::size_t j = 1; j < b.size(); ++j) {
            const double up = row[j];
            const double reach = std::min({up, row[j - 1], diag});
            row[j] = std::max(sq_dist(a[i], b[j]), reach);
            diag = up;
        }
    }
    return std::sqrt(row.back());
}

double hausdorff(std::span<const Vec2> a, std::span<const Vec2> b) {
    if (a.empty() || b.empty()) {
        throw std::invalid_argument("hausdorff: empty trajectory");
    }
    return std::sqrt(std::max(directed_hausdorff_sq(a, b), directed_hausdorff_sq(b, a)));
}

double sspd(std::span<const Vec2> a, std::span<const Vec2> b) {
    if (a.size() < 2 || b.size() < 2) {
        throw std::invalid_argument("sspd: trajectories need at least 2 points");
    }
    return 0.5 * (directed_spd(a, b) + directed_spd(b, a));
}

double distance(std::span<const Vec2> a, std::span<const Vec2> b, Metric m) {
    switch (m) {
        case Metric::sspd:
            return sspd(a, b);
        case Metric::hausdorff:
            return hausdorff(a, b);
        case Metric::frechet:
            return frechet_discrete(a, b);
    }
    throw std::invalid_argument("unknown metric");
}

double frechet_discrete(const Trajectory& a, const Trajectory& b, const DistanceModel& model) {
    return frechet_discrete(model.project(a), model.project(b));
}

double hausdorff(const Trajectory& a, const Trajectory& b, const DistanceModel& model) {
    return hausdorff(model.project(a), model.project(b));
}

double sspd(const Trajectory& a, const Trajectory& b, const DistanceModel& model) {
    return sspd(model.project(a), model.project(b));
}

double distance(const Trajectory& a, const Trajectory& b, Metric m, const DistanceModel& model) {
    return distance(model.project(a), model.project(b), m);
}

DistanceMatrix DistanceMatrix::select(std::span<const std::size_t> indices) const {
    DistanceMatrix out(indices.size(), metric_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        for (std::size_t j = 0; j < indices.size(); ++j) {
            out(i, j) = (*this)(indices[i], indices[j]);
        }
    }
    return out;
}

double DistanceMatrix::mean_off_diagonal() const {
    if (n_ < 2) {
        throw std::invalid_argument("mean_off_diagonal: need at least 2 trajectories");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j < n_; ++j) {
            if (i != j) {
                total += (*this)(i, j);
            }
        }
    }
    return total / static_cast<double>(n_ * (n_ - 1));
}

void DistanceMatrix::validate() const {
    if (values_.size() != n_ * n_) {
        throw DataError("distance matrix payload does not match N");
    }
    for (std::size_t i = 0; i < n_; ++i) {
        if ((*this)(i, i) != 0.0) {
            throw DataError("distance matrix diagonal entry " + std::to_string(i) + " is not zero");
        }
        for (std::size_t j = i + 1; j < n_; ++j) {
            const double a = (*this)(i, j);
            const double b = (*this)(j, i);
            if (!std::isfinite(a) || !std::isfinite(b) || a < 0.0 || b < 0.0) {
                throw DataError("distance matrix entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") is negative or non-finite");
            }
            if (std::abs(a - b) > 1e-9) {
                throw DataError("distance matrix is not symmetric at (" + std::to_string(i) + ", " +
                                std::to_string(j) + ")");
            }
        }
    }
}

DistanceMatrix build_matrix(const std::vector<Trajectory>& trajs, Metric metric,
                            const DistanceModel& model, std::size_t threads) {
    if (trajs.size() < 2) {
        throw std::invalid_argument("build_matrix: need at least 2 trajectories");
    }
    const std::size_t n = trajs.size();
    std::vector<std::vector<Vec2>> projected(n);
    for (std::size_t i = 0; i < n; ++i) {
        projected[i] = model.project(trajs[i]);
    }
    DistanceMatrix m(n, metric);
    // Row i owns entries (i, j > i); rows are handed out longest first.
    parallel_for(n - 1, threads, [&](std::size_t i, std::size_t) {
        for (std::size_t j = i + 1; j < n; ++j) {
            try {
                m(i, j) = distance(projected[i], projected[j], metric);
            } catch (const std::exception& e) {
                throw DataError("pair (" + std::to_string(i) + ", " + std::to_string(j) + ") [" + trajs[i].id +
                                ", " + trajs[j].id + "]: " + e.what());
            }
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            m(j, i) = m(i, j);
        }
    }
    return m;
}

void write_matrix(std::ostream& out, const DistanceMatrix& m) {
    out.write("TSDM", 4);
    binary::put<std::uint32_t>(out, kMatrixVersion);
    binary::put<std::uint8_t>(out, static_cast<std::uint8_t>(m.metric()));
    binary::put<std::uint64_t>(out, m.size());
    binary::put_doubles(out, m.values().data(), m.values().size());
}

DistanceMatrix read_matrix(std::istream& in) {
    binary::expect_magic(in, "TSDM");
    const auto version = binary::get<std::uint32_t>(in, "version");
    if (version != kMatrixVersion) {
        throw DataError("unsupported TSDM version " + std::to_string(version));
    }
    const auto tag = binary::get<std::uint8_t>(in, "metric tag");
    if (tag > static_cast<std::uint8_t>(Metric::frechet)) {
        throw DataError("unknown metric tag " + std::to_string(tag));
    }
    const auto n = binary::get<std::uint64_t>(in, "N");
    if (n > (std::uint64_t{1} << 20)) {
        throw DataError("implausible matrix size " + std::to_string(n));
    }
    DistanceMatrix m(static_cast<std::size_t>(n), static_cast<Metric>(tag));
    std::vector<double> payload(static_cast<std::size_t>(n * n));
    binary::get_doubles(in, payload.data(), payload.size(), "matrix payload");
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            m(i, j) = payload[i * n + j];
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw DataError("trailing bytes after matrix payload");
    }
    m.validate();
    return m;
}

void save_matrix(const std::filesystem::path& path, const DistanceMatrix& m) {
    write_atomically(path, [&](std::ostream& out) { write_matrix(out, m); }, true);
}

DistanceMatrix load_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open matrix file " + path.string());
    }
    return read_matrix(in);
}

}  // namespace trajsim
