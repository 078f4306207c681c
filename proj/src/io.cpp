#include "trajsim/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "trajsim/error.hpp"

namespace trajsim {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (s.empty()) {
        return false;
    }
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

}  // namespace

std::vector<Trajectory> parse_trajectories(std::istream& in, const std::string& source) {
    std::vector<Trajectory> trajs;
    std::unordered_map<std::string, std::size_t> index;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw DataError(source + ":" + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view row = trim(line);
        if (row.empty()) {
            continue;
        }
        if (line_no == 1 && row == "traj_id,seq,lon,lat") {
            continue;
        }
        std::string_view fields[4];
        std::size_t nf = 0;
        std::size_t start = 0;
        while (true) {
            const auto comma = row.find(',', start);
            if (nf == 4) {
                fail("expected 4 fields");
            }
            fields[nf++] = row.substr(start, comma == std::string_view::npos ? row.npos : comma - start);
            if (comma == std::string_view::npos) {
                break;
            }
            start = comma + 1;
        }
        if (nf != 4) {
            fail("expected 4 fields");
        }
        const std::string id(trim(fields[0]));
        if (id.empty()) {
            fail("empty traj_id");
        }
        std::size_t seq = 0;
        Point p;
        if (!parse_number(fields[1], seq)) {
            fail("seq is not a non-negative integer");
        }
        if (!parse_number(fields[2], p.lon) || !std::isfinite(p.lon)) {
            fail("lon is not a finite number");
        }
        if (!parse_number(fields[3], p.lat) || !std::isfinite(p.lat)) {
            fail("lat is not a finite number");
        }
        auto [it, inserted] = index.try_emplace(id, trajs.size());
        if (inserted) {
            trajs.push_back(Trajectory{id, {}});
        }
        auto& t = trajs[it->second];
        if (seq < t.points.size()) {
            fail("duplicate (traj_id, seq) = (" + id + ", " + std::to_string(seq) + ")");
        }
        if (seq != t.points.size()) {
            fail("seq " + std::to_string(seq) + " of '" + id + "' is not contiguous (expected " +
                 std::to_string(t.points.size()) + ")");
        }
        t.points.push_back(p);
    }
    return trajs;
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open trajectory file " + path.string());
    }
    return parse_trajectories(in, path.string());
}

void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajs) {
    out << "traj_id,seq,lon,lat\n";
    out << std::setprecision(17);
    for (const auto& t : trajs) {
        for (std::size_t k = 0; k < t.points.size(); ++k) {
            out << t.id << ',' << k << ',' << t.points[k].lon << ',' << t.points[k].lat << '\n';
        }
    }
}

void save_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajs) {
    write_atomically(path, [&](std::ostream& out) { write_trajectories(out, trajs); });
}

void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& writer, bool binary) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
        if (!out) {
            throw DataError("cannot open " + tmp.string() + " for writing");
        }
        try {
            writer(out);
        } catch (...) {
            out.close();
            std::filesystem::remove(tmp);
            throw;
        }
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp);
            throw DataError("write to " + tmp.string() + " failed");
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace trajsim
