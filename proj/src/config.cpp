#include "trajsim/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "trajsim/error.hpp"

namespace trajsim {

void RunConfig::validate() const {
    if (!(bbox.lon_min < bbox.lon_max && bbox.lat_min < bbox.lat_max)) {
        throw ConfigError("bbox must satisfy lon_min < lon_max and lat_min < lat_max");
    }
    if (!(cell_size > 0.0 && std::isfinite(cell_size))) {
        throw ConfigError("grid.cell_size must be positive");
    }
    if (min_len < 2 || min_len > max_len) {
        throw ConfigError("filter.min_len and filter.max_len must satisfy 2 <= min_len <= max_len");
    }
    model.validate();
    ddbm.validate();
    loss.validate();
    if (pretrain_epochs == 0 || finetune_epochs == 0 || pretrain_patience == 0 || finetune_patience == 0) {
        throw ConfigError("epoch counts and patience values must be positive");
    }
    if (batch_size < 3) {
        throw ConfigError("train.batch_size must be at least 3");
    }
    if (!(lr > 0.0 && std::isfinite(lr))) {
        throw ConfigError("train.lr must be positive");
    }
}

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ConfigError("'" + text + "' is not a valid number");
    }
    return value;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

template <typename T>
Setter set(T RunConfig::*field) {
    return [field](RunConfig& c, const std::string& v) { c.*field = parse_number<T>(v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = {
        {"bbox.lon_min", [](RunConfig& c, const std::string& v) { c.bbox.lon_min = parse_number<double>(v); }},
        {"bbox.lon_max", [](RunConfig& c, const std::string& v) { c.bbox.lon_max = parse_number<double>(v); }},
        {"bbox.lat_min", [](RunConfig& c, const std::string& v) { c.bbox.lat_min = parse_number<double>(v); }},
        {"bbox.lat_max", [](RunConfig& c, const std::string& v) { c.bbox.lat_max = parse_number<double>(v); }},
        {"grid.cell_size", set(&RunConfig::cell_size)},
        {"filter.min_len", set(&RunConfig::min_len)},
        {"filter.max_len", set(&RunConfig::max_len)},
        {"split.seed", set(&RunConfig::split_seed)},
        {"model.d", [](RunConfig& c, const std::string& v) { c.model.d = parse_number<std::size_t>(v); }},
        {"model.d_hid", [](RunConfig& c, const std::string& v) { c.model.d_hid = parse_number<std::size_t>(v); }},
        {"model.layers", [](RunConfig& c, const std::string& v) { c.model.layers = parse_number<std::size_t>(v); }},
        {"model.heads", [](RunConfig& c, const std::string& v) { c.model.heads = parse_number<std::size_t>(v); }},
        {"model.epsilon", [](RunConfig& c, const std::string& v) { c.model.epsilon = parse_number<double>(v); }},
        {"model.pre_encoder", [](RunConfig& c, const std::string& v) { c.model.pre_encoder = parse_pre_encoder(v); }},
        {"ddbm.beta_min",
         [](RunConfig& c, const std::string& v) { c.ddbm.schedule.beta_min = parse_number<double>(v); }},
        {"ddbm.beta_max",
         [](RunConfig& c, const std::string& v) { c.ddbm.schedule.beta_max = parse_number<double>(v); }},
        {"ddbm.resample_len",
         [](RunConfig& c, const std::string& v) { c.ddbm.resample_len = parse_number<std::size_t>(v); }},
        {"ddbm.t_min", [](RunConfig& c, const std::string& v) { c.ddbm.t_min = parse_number<double>(v); }},
        {"ddbm.t_max", [](RunConfig& c, const std::string& v) { c.ddbm.t_max = parse_number<double>(v); }},
        {"pretrain.epochs", set(&RunConfig::pretrain_epochs)},
        {"pretrain.patience", set(&RunConfig::pretrain_patience)},
        {"loss.gamma1", [](RunConfig& c, const std::string& v) { c.loss.weights.gamma1 = parse_number<double>(v); }},
        {"loss.gamma2", [](RunConfig& c, const std::string& v) { c.loss.weights.gamma2 = parse_number<double>(v); }},
        {"loss.tau_mode", [](RunConfig& c, const std::string& v) { c.loss.tau_mode = parse_tau_mode(v); }},
        {"loss.tau_value", [](RunConfig& c, const std::string& v) { c.loss.tau_value = parse_number<double>(v); }},
        {"train.batch_size", set(&RunConfig::batch_size)},
        {"train.lr", set(&RunConfig::lr)},
        {"finetune.epochs", set(&RunConfig::finetune_epochs)},
        {"finetune.patience", set(&RunConfig::finetune_patience)},
        {"seed", set(&RunConfig::seed)},
    };
    return table;
}

}  // namespace

RunConfig parse_config(std::istream& in, const std::string& source) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = trim(line);
        if (text.empty() || text.front() == '#') {
            continue;
        }
        const std::string where = source + ":" + std::to_string(line_no) + ": ";
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + "expected 'key = value'");
        }
        const std::string key = trim(std::string_view(text).substr(0, eq));
        const std::string value = trim(std::string_view(text).substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) {
            throw ConfigError(where + "unknown key '" + key + "'");
        }
        if (!seen.insert(key).second) {
            throw ConfigError(where + "duplicate key '" + key + "'");
        }
        try {
            it->second(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + key + ": " + e.what());
        }
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    return parse_config(in, path.string());
}

std::map<std::string, std::string> config_entries(const RunConfig& c) {
    auto num = [](auto v) {
        std::ostringstream s;
        s.precision(17);
        s << v;
        return s.str();
    };
    return {
        {"bbox.lon_min", num(c.bbox.lon_min)},
        {"bbox.lon_max", num(c.bbox.lon_max)},
        {"bbox.lat_min", num(c.bbox.lat_min)},
        {"bbox.lat_max", num(c.bbox.lat_max)},
        {"grid.cell_size", num(c.cell_size)},
        {"filter.min_len", num(c.min_len)},
        {"filter.max_len", num(c.max_len)},
        {"split.seed", num(c.split_seed)},
        {"model.d", num(c.model.d)},
        {"model.d_hid", num(c.model.d_hid)},
        {"model.layers", num(c.model.layers)},
        {"model.heads", num(c.model.heads)},
        {"model.epsilon", num(c.model.epsilon)},
        {"model.pre_encoder", std::string(to_string(c.model.pre_encoder))},
        {"ddbm.beta_min", num(c.ddbm.schedule.beta_min)},
        {"ddbm.beta_max", num(c.ddbm.schedule.beta_max)},
        {"ddbm.resample_len", num(c.ddbm.resample_len)},
        {"ddbm.t_min", num(c.ddbm.t_min)},
        {"ddbm.t_max", num(c.ddbm.t_max)},
        {"pretrain.epochs", num(c.pretrain_epochs)},
        {"pretrain.patience", num(c.pretrain_patience)},
        {"loss.gamma1", num(c.loss.weights.gamma1)},
        {"loss.gamma2", num(c.loss.weights.gamma2)},
        {"loss.tau_mode", std::string(to_string(c.loss.tau_mode))},
        {"loss.tau_value", num(c.loss.tau_value)},
        {"train.batch_size", num(c.batch_size)},
        {"train.lr", num(c.lr)},
        {"finetune.epochs", num(c.finetune_epochs)},
        {"finetune.patience", num(c.finetune_patience)},
        {"seed", num(c.seed)},
    };
}

void write_config(std::ostream& out, const RunConfig& cfg) {
    for (const auto& [k, v] : config_entries(cfg)) {
        out << k << " = " << v << '\n';
    }
}

}  // namespace trajsim
