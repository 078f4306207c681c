#include "trajsim/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "trajsim/error.hpp"

namespace trajsim {

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    const std::size_t n =
        std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
    data_.assign(n, fill);
}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill) : Tensor({rows, cols}, fill) {}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) {
        throw ShapeError("Tensor::matrix: " + std::to_string(data.size()) + " values for shape [" +
                         std::to_string(rows) + "x" + std::to_string(cols) + "]");
    }
    Tensor t;
    t.shape_ = {rows, cols};
    t.data_ = std::move(data);
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("Tensor::from_rows: ragged rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return matrix(r, c, std::move(data));
}

Tensor Tensor::row(std::vector<double> data) {
    const std::size_t n = data.size();
    return matrix(1, n, std::move(data));
}

Tensor Tensor::scalar(double v) { return matrix(1, 1, {v}); }

std::size_t Tensor::rows() const noexcept {
    if (shape_.size() < 2) {
        return 1;
    }
    return std::accumulate(shape_.begin(), shape_.end() - 1, std::size_t{1}, std::multiplies<>());
}

std::size_t Tensor::cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("Tensor::item on shape " + shape_string());
    }
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        s += (i ? "x" : "") + std::to_string(shape_[i]);
    }
    return s + "]";
}

void Tensor::fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
    if (other.size() != size()) {
        throw ShapeError("Tensor +=: " + shape_string() + " vs " + other.shape_string());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

}  // namespace trajsim
