#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace uqst {

// Dense row-major array of doubles, arbitrary rank.
class NDArray {
public:
    NDArray() = default;
    explicit NDArray(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}
    NDArray(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw std::invalid_argument("NDArray: data size does not match shape");
    }

    static NDArray zeros(std::vector<std::size_t> shape) { return NDArray(std::move(shape)); }
    static NDArray scalar(double v) { return NDArray({1}, {v}); }
    static NDArray vector(std::vector<double> v) {
        std::size_t n = v.size();
        return NDArray({n}, std::move(v));
    }
    static NDArray identity(std::size_t n) {
        NDArray out({n, n});
        for (std::size_t i = 0; i < n; ++i) out.at2(i, i) = 1.0;
        return out;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const NDArray& o) const { return shape_ == o.shape_; }

    NDArray reshaped(std::vector<std::size_t> shape) const {
        if (count(shape) != data_.size())
            throw std::invalid_argument("NDArray: reshape size mismatch");
        return NDArray(std::move(shape), data_);
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    static std::string shape_str(const std::vector<std::size_t>& s) {
        std::string out = "(";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + ")";
    }
    std::string shape_str() const { return shape_str(shape_); }

private:
    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace uqst
