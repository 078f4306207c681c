#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trajsim/tensor.hpp"

namespace trajsim {

/// Gradient slots aligned with a ParamStore's parameter indices. A slot is
/// "present" once something has been accumulated into it.
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(const std::vector<Tensor>& like);

    void add(std::size_t index, const Tensor& g);
    void merge(const Gradients& other);
    void clear();

    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] bool present(std::size_t i) const noexcept { return present_[i]; }
    [[nodiscard]] const Tensor& operator[](std::size_t i) const noexcept { return values_[i]; }
    Tensor& operator[](std::size_t i) noexcept { return values_[i]; }

private:
    std::vector<Tensor> values_;
    std::vector<bool> present_;
};

/// Named trainable tensors with one gradient slot each.
class ParamStore {
public:
    /// Registers a parameter and returns its index. Names must be unique.
    std::size_t add(std::string name, Tensor init);

    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] bool contains(std::string_view name) const;
    [[nodiscard]] std::size_t index(std::string_view name) const;
    [[nodiscard]] const std::string& name(std::size_t i) const noexcept { return names_[i]; }

    [[nodiscard]] const Tensor& value(std::size_t i) const noexcept { return values_[i]; }
    Tensor& value(std::size_t i) noexcept { return values_[i]; }
    [[nodiscard]] const Tensor& value(std::string_view name) const { return values_[index(name)]; }
    Tensor& value(std::string_view name) { return values_[index(name)]; }
    [[nodiscard]] const std::vector<Tensor>& values() const noexcept { return values_; }

    [[nodiscard]] Gradients& grads() noexcept { return grads_; }
    [[nodiscard]] const Gradients& grads() const noexcept { return grads_; }
    [[nodiscard]] Gradients make_gradients() const { return Gradients(values_); }
    void zero_grad() { grads_.clear(); }

    [[nodiscard]] std::size_t parameter_count() const noexcept;

    /// Copies values from `other`, which must have identical names and shapes.
    void assign(const ParamStore& other);

    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        return a.names_ == b.names_ && a.values_ == b.values_;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::unordered_map<std::string, std::size_t> lookup_;
    Gradients grads_;
};

// TSPS checkpoint: "TSPS", u32 version = 1, u64 count, then per entry
// u32 name length, name bytes, u32 rank, rank x u64 dims, float64 payload
// (all little-endian).
void write_params(std::ostream& out, const ParamStore& store);
ParamStore read_params(std::istream& in);
void save_params(const std::filesystem::path& path, const ParamStore& store);
ParamStore load_params(const std::filesystem::path& path);

/// Overwrites `store` values from a checkpoint. Throws DataError if the
/// names or shapes differ from what `store` already holds.
void load_params_into(const std::filesystem::path& path, ParamStore& store);

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over every parameter of a store. Throws std::logic_error when a
/// parameter has no gradient and NumericError when an update is not finite.
class Adam {
public:
    explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

    void step(ParamStore& store);

    [[nodiscard]] std::size_t steps() const noexcept { return t_; }
    [[nodiscard]] const AdamOptions& options() const noexcept { return opts_; }

private:
    AdamOptions opts_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace trajsim
