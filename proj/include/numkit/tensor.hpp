#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace numkit {

using Shape = std::vector<int>;

// Additive-mask "minus infinity". Finite on purpose: exp(x + kNegInf)
// underflows to 0 without ever producing NaN.
inline constexpr double kNegInf = -1e9;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major tensor. Invariant: data.size() == product(shape).
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0), bool rg = false)
      : shape(std::move(s)),
        data(static_cast<std::size_t>(shape_numel(shape)), fill),
        requires_grad(rg) {}

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor from(Shape s, std::vector<T> values, bool rg = false) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    t.requires_grad = rg;
    if (static_cast<std::int64_t>(t.data.size()) != shape_numel(t.shape))
      throw std::invalid_argument("Tensor::from: " + shape_str(t.shape) +
                                  " does not hold " + std::to_string(t.data.size()) +
                                  " values");
    return t;
  }

  std::int64_t numel() const { return shape_numel(shape); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  T& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
  const T& at(int i, int j) const {
    return data[static_cast<std::size_t>(i) * cols() + j];
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.requires_grad = requires_grad;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

}  // namespace numkit
