#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "artadapter/common.hpp"

namespace artadapter {

// Dense row-major tensor of doubles. Value semantics; shapes are small
// vectors of int64.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::initializer_list<int64_t> shape) : Tensor(std::vector<int64_t>(shape)) {}

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, scalar_t v);
    static Tensor scalar(scalar_t v);
    static Tensor from_vector(std::vector<int64_t> shape, std::vector<scalar_t> values);

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const;
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    scalar_t* data() { return data_.data(); }
    const scalar_t* data() const { return data_.data(); }
    std::vector<scalar_t>& vec() { return data_; }
    const std::vector<scalar_t>& vec() const { return data_; }

    scalar_t& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
    scalar_t at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
    scalar_t& at2(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    scalar_t at2(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

    // Reinterpret with a new shape of identical element count.
    Tensor reshaped(std::vector<int64_t> shape) const;

    void fill(scalar_t v);
    void add_(const Tensor& o);           // elementwise, shapes must match
    void add_scaled_(const Tensor& o, scalar_t a);
    void scale_(scalar_t a);
    bool all_finite() const;

    bool bitwise_equal(const Tensor& o) const;

private:
    std::vector<int64_t> shape_;
    std::vector<scalar_t> data_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_to_string(const std::vector<int64_t>& shape);

}  // namespace artadapter
