#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "trajsim/bridge.hpp"
#include "trajsim/ranking.hpp"
#include "trajsim/sam.hpp"
#include "trajsim/synthetic.hpp"
#include "trajsim/trajectory.hpp"

namespace trajsim {

/// Every tunable of the pipeline with its default.
struct RunConfig {
    BoundingBox bbox = porto_bbox();
    double cell_size = 100.0;
    std::size_t min_len = 20;
    std::size_t max_len = 200;
    std::uint64_t split_seed = 42;

    SamConfig model;
    DdbmConfig ddbm;
    std::size_t pretrain_epochs = 20;
    std::size_t pretrain_patience = 5;
    LossConfig loss;

    std::size_t batch_size = 128;
    double lr = 1e-3;
    std::size_t finetune_epochs = 30;
    std::size_t finetune_patience = 10;
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the first violated constraint.
    void validate() const;
};

/// Parses flat `key = value` text. Blank lines and lines starting with '#'
/// are ignored. Unknown keys, duplicate keys and malformed values throw
/// ConfigError with "source:line" context. The result is validated.
RunConfig parse_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Key/value view of a config in a stable order; parse_config accepts it back.
std::map<std::string, std::string> config_entries(const RunConfig& cfg);
void write_config(std::ostream& out, const RunConfig& cfg);

}  // namespace trajsim
