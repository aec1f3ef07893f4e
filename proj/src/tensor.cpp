#include "simvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace simvit {

const char* dtype_name(DType dtype) {
    return dtype == DType::f32 ? "f32" : "f64";
}

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    return os.str();
}

template <Real T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_size(shape_), T(0)) {}

template <Real T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_size(shape_)) {
        throw DimensionError("tensor of shape " + shape_string(shape_) + " needs " +
                             std::to_string(shape_size(shape_)) + " values, got " +
                             std::to_string(values_.size()));
    }
}

template <Real T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

template <Real T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
    return Tensor(*this).reshaped(std::move(shape));
}

template <Real T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
    if (shape_size(shape) != values_.size()) {
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
}

template <Real T>
void Tensor<T>::fill(T value) {
    std::fill(values_.begin(), values_.end(), value);
}

template <Real T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
    if (other.shape_ != shape_) {
        throw DimensionError("cannot add " + shape_string(other.shape_) + " into " +
                             shape_string(shape_));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

template <Real T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) {
        throw DimensionError("index of rank " + std::to_string(idx.size()) + " into tensor " +
                             shape_string(shape_));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
        if (i >= shape_[axis]) {
            throw DimensionError("index " + std::to_string(i) + " out of range on axis " +
                                 std::to_string(axis) + " of " + shape_string(shape_));
        }
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

template <Real T>
bool all_finite(const Tensor<T>& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;
template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);

}  // namespace simvit
