#include "trajsim/param_store.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "trajsim/error.hpp"
#include "trajsim/io.hpp"

namespace trajsim {

namespace {
constexpr std::uint32_t kParamsVersion = 1;
}

Gradients::Gradients(const std::vector<Tensor>& like) : present_(like.size(), false) {
    values_.reserve(like.size());
    for (const auto& t : like) {
        values_.emplace_back(t.shape(), 0.0);
    }
}

void Gradients::add(std::size_t index, const Tensor& g) {
    values_[index] += g;
    present_[index] = true;
}

void Gradients::merge(const Gradients& other) {
    if (other.size() != size()) {
        throw std::logic_error("Gradients::merge: size mismatch");
    }
    for (std::size_t i = 0; i < size(); ++i) {
        if (other.present_[i]) {
            add(i, other.values_[i]);
        }
    }
}

void Gradients::clear() {
    for (auto& v : values_) {
        v.fill(0.0);
    }
    std::fill(present_.begin(), present_.end(), false);
}

std::size_t ParamStore::add(std::string name, Tensor init) {
    if (lookup_.contains(name)) {
        throw std::invalid_argument("duplicate parameter name '" + name + "'");
    }
    const std::size_t i = values_.size();
    lookup_.emplace(name, i);
    names_.push_back(std::move(name));
    values_.push_back(std::move(init));
    grads_ = Gradients(values_);
    return i;
}

bool ParamStore::contains(std::string_view name) const { return lookup_.contains(std::string(name)); }

std::size_t ParamStore::index(std::string_view name) const {
    auto it = lookup_.find(std::string(name));
    if (it == lookup_.end()) {
        throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
    }
    return it->second;
}

std::size_t ParamStore::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& v : values_) {
        n += v.size();
    }
    return n;
}

void ParamStore::assign(const ParamStore& other) {
    if (other.names_ != names_) {
        throw std::invalid_argument("ParamStore::assign: parameter names differ");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!values_[i].same_shape(other.values_[i])) {
            throw ShapeError("ParamStore::assign: shape mismatch for '" + names_[i] + "'");
        }
    }
    values_ = other.values_;
}

void write_params(std::ostream& out, const ParamStore& store) {
    out.write("TSPS", 4);
    binary::put<std::uint32_t>(out, kParamsVersion);
    binary::put<std::uint64_t>(out, store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& name = store.name(i);
        const auto& t = store.value(i);
        binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) {
            binary::put<std::uint64_t>(out, d);
        }
        binary::put_doubles(out, t.data(), t.size());
    }
}

ParamStore read_params(std::istream& in) {
    binary::expect_magic(in, "TSPS");
    const auto version = binary::get<std::uint32_t>(in, "version");
    if (version != kParamsVersion) {
        throw DataError("unsupported TSPS version " + std::to_string(version));
    }
    const auto count = binary::get<std::uint64_t>(in, "entry count");
    ParamStore store;
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto len = binary::get<std::uint32_t>(in, "name length");
        if (len > 4096) {
            throw DataError("implausible parameter name length");
        }
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) {
            throw DataError("truncated file while reading parameter name");
        }
        const auto rank = binary::get<std::uint32_t>(in, "rank");
        if (rank > 8) {
            throw DataError("implausible rank for '" + name + "'");
        }
        std::vector<std::size_t> shape(rank);
        std::size_t elements = 1;
        for (auto& d : shape) {
            d = static_cast<std::size_t>(binary::get<std::uint64_t>(in, "dimension"));
            elements *= d;
        }
        if (elements > (std::size_t{1} << 28)) {
            throw DataError("implausible size for '" + name + "'");
        }
        Tensor t(shape);
        binary::get_doubles(in, t.data(), t.size(), "parameter payload");
        if (!t.all_finite()) {
            throw DataError("parameter '" + name + "' holds non-finite values");
        }
        try {
            store.add(name, std::move(t));
        } catch (const std::invalid_argument& e) {
            throw DataError(e.what());
        }
    }
    return store;
}

void save_params(const std::filesystem::path& path, const ParamStore& store) {
    write_atomically(path, [&](std::ostream& out) { write_params(out, store); }, true);
}

ParamStore load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint " + path.string());
    }
    return read_params(in);
}

void load_params_into(const std::filesystem::path& path, ParamStore& store) {
    const ParamStore loaded = load_params(path);
    try {
        store.assign(loaded);
    } catch (const std::exception& e) {
        throw DataError("checkpoint " + path.string() + " does not match the model: " + e.what());
    }
}

void Adam::step(ParamStore& store) {
    auto& grads = store.grads();
    for (std::size_t i = 0; i < store.size(); ++i) {
        if (!grads.present(i)) {
            throw std::logic_error("Adam::step: parameter '" + store.name(i) + "' has no gradient");
        }
    }
    if (m_.size() != store.size()) {
        m_.clear();
        v_.clear();
        for (std::size_t i = 0; i < store.size(); ++i) {
            m_.emplace_back(store.value(i).shape(), 0.0);
            v_.emplace_back(store.value(i).shape(), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
        Tensor& p = store.value(i);
        const Tensor& g = grads[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = opts_.beta1 * m[k] + (1.0 - opts_.beta1) * g[k];
            v[k] = opts_.beta2 * v[k] + (1.0 - opts_.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            p[k] -= opts_.lr * m_hat / (std::sqrt(v_hat) + opts_.eps);
        }
        if (!p.all_finite()) {
            throw NumericError("Adam::step produced non-finite values in '" + store.name(i) + "'");
        }
    }
}

}  // namespace trajsim
