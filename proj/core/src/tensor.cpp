#include "artadapter/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace artadapter {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw ShapeError("negative dimension in " + shape_to_string(shape));
        n *= d;
    }
    return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<int64_t> shape, scalar_t v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::scalar(scalar_t v) {
    Tensor t(std::vector<int64_t>{1});
    t.at(0) = v;
    return t;
}

Tensor Tensor::from_vector(std::vector<int64_t> shape, std::vector<scalar_t> values) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        throw ShapeError("from_vector: " + shape_to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
}

int64_t Tensor::dim(int i) const {
    if (i < 0) i += rank();
    if (i < 0 || i >= rank()) throw ShapeError("dim index out of range");
    return shape_[static_cast<size_t>(i)];
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    if (shape_numel(shape) != numel())
        throw ShapeError("reshape " + shape_str() + " -> " + shape_to_string(shape));
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
}

void Tensor::fill(scalar_t v) {
    for (auto& x : data_) x = v;
}

void Tensor::add_(const Tensor& o) {
    if (!same_shape(o)) throw ShapeError("add_: " + shape_str() + " vs " + o.shape_str());
    const scalar_t* src = o.data();
    scalar_t* dst = data();
    for (int64_t i = 0; i < numel(); ++i) dst[i] += src[i];
}

void Tensor::add_scaled_(const Tensor& o, scalar_t a) {
    if (!same_shape(o)) throw ShapeError("add_scaled_: " + shape_str() + " vs " + o.shape_str());
    const scalar_t* src = o.data();
    scalar_t* dst = data();
    for (int64_t i = 0; i < numel(); ++i) dst[i] += a * src[i];
}

void Tensor::scale_(scalar_t a) {
    for (auto& x : data_) x *= a;
}

bool Tensor::all_finite() const {
    for (scalar_t x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

bool Tensor::bitwise_equal(const Tensor& o) const {
    if (!same_shape(o)) return false;
    if (data_.empty()) return true;
    return std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(scalar_t)) == 0;
}

}  // namespace artadapter
