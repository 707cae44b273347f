#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dnmt/error.hpp"

namespace dnmt {

using Shape = std::vector<std::size_t>;

inline std::string shape_to_string(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i > 0) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

// Dense row-major tensor. Values are immutable by convention once a tensor
// has been handed to the tape; mutation is only done by owners (parameters,
// builders).
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_numel(shape_), T(0)) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
        if (shape_numel(shape_) != values_.size()) {
            raise(ErrorKind::dimension, "tensor value count " + std::to_string(values_.size()) +
                                            " does not match shape " + shape_to_string(shape_));
        }
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.values_.begin(), t.values_.end(), value);
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

    static Tensor identity(std::size_t n) {
        Tensor t(Shape{n, n});
        for (std::size_t i = 0; i < n; ++i) t.at(i, i) = T(1);
        return t;
    }

    static Tensor row(std::vector<T> values) {
        Shape s{1, values.size()};
        return Tensor(std::move(s), std::move(values));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    // Rows/cols of a matrix view: rank-1 tensors count as a single row.
    std::size_t rows() const { return rank() >= 2 ? shape_[0] : (rank() == 1 ? 1 : 0); }
    std::size_t cols() const { return rank() >= 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

    T* data() { return values_.data(); }
    const T* data() const { return values_.data(); }
    std::vector<T>& values() { return values_; }
    const std::vector<T>& values() const { return values_; }

    T& at(std::size_t i) { return values_[i]; }
    T at(std::size_t i) const { return values_[i]; }
    T& at(std::size_t i, std::size_t j) { return values_[i * cols() + j]; }
    T at(std::size_t i, std::size_t j) const { return values_[i * cols() + j]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (T v : values_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    // Checked mode: call sites that want the finiteness invariant enforced.
    void require_finite(const std::string& label) const {
        if (!all_finite()) {
            raise(ErrorKind::contract, "non-finite values in tensor " + label);
        }
    }

    void fill(T value) { std::fill(values_.begin(), values_.end(), value); }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(values_.size());
        for (std::size_t i = 0; i < values_.size(); ++i) out[i] = static_cast<U>(values_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && values_ == other.values_;
    }

  private:
    Shape shape_;
    std::vector<T> values_;
};

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T low, T high, std::mt19937_64& rng) {
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> dist(static_cast<double>(low), static_cast<double>(high));
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = static_cast<T>(dist(rng));
    return t;
}

} // namespace dnmt
