#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace simvit {

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

using Shape = std::vector<std::size_t>;

// Numeric tags are part of the weight file format.
enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <Real T>
constexpr DType dtype_of() {
    return std::same_as<T, float> ? DType::f32 : DType::f64;
}

const char* dtype_name(DType dtype);

class DimensionError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

class GeometryError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array. Token maps are laid out H x W x C with channels
// contiguous.
template <Real T>
class Tensor {
   public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<T> values);

    static Tensor full(Shape shape, T value);
    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    static constexpr DType dtype() { return dtype_of<T>(); }

    std::span<T> data() { return values_; }
    std::span<const T> data() const { return values_; }
    T* ptr() { return values_.data(); }
    const T* ptr() const { return values_.data(); }

    T& operator[](std::size_t i) { return values_[i]; }
    const T& operator[](std::size_t i) const { return values_[i]; }

    template <typename... Idx>
    T& at(Idx... idx) {
        return values_[offset({static_cast<std::size_t>(idx)...})];
    }
    template <typename... Idx>
    const T& at(Idx... idx) const {
        return values_[offset({static_cast<std::size_t>(idx)...})];
    }

    // Same elements, new extents; sizes must agree.
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    void fill(T value);
    Tensor& operator+=(const Tensor& other);

    template <Real U>
    Tensor<U> cast() const {
        std::vector<U> out(values_.begin(), values_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor& other) const = default;

   private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const;

    Shape shape_;
    std::vector<T> values_;
};

template <Real T>
bool all_finite(const Tensor<T>& t);

// Learnable tensor plus its gradient accumulator. The accumulator is
// mutable so forward passes can take parameters by const reference while
// backward still deposits gradients.
template <Real T>
struct Parameter {
    Parameter() = default;
    Parameter(std::string param_name, Tensor<T> initial)
        : name(std::move(param_name)), value(std::move(initial)), grad(value.shape()) {}

    void zero_grad() { grad.fill(T(0)); }
    const Shape& shape() const { return value.shape(); }
    std::size_t size() const { return value.size(); }

    std::string name;
    Tensor<T> value;
    mutable Tensor<T> grad;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace simvit
