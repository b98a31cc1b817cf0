#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scatterfusion {

struct Tensor;
[[noreturn]] void throw_not_2d(const char* who, const Tensor& t);

// Dense row-major tensor of 64-bit floats.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> s, std::vector<double> d);

  static Tensor zeros(const std::vector<std::int64_t>& s);
  static Tensor full(const std::vector<std::int64_t>& s, double v);
  static Tensor scalar(double v);
  static Tensor from_vector(std::vector<double> v);
  static Tensor from_vector(std::vector<double> v, std::vector<std::int64_t> s);

  std::int64_t numel() const;
  int ndim() const { return static_cast<int>(shape.size()); }

  // 2-D accessors; throw DimensionError when the tensor is not 2-D.
  std::int64_t rows() const {
    if (shape.size() != 2) throw_not_2d("rows", *this);
    return shape[0];
  }
  std::int64_t cols() const {
    if (shape.size() != 2) throw_not_2d("cols", *this);
    return shape[1];
  }
  double& at(std::int64_t r, std::int64_t c) {
    return data[static_cast<std::size_t>(r * cols() + c)];
  }
  double at(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * cols() + c)];
  }

  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

// Enforces: data length equals product of shape, every dimension >= 1.
void check_tensor(const Tensor& t);

// Pair of same-shape real tensors holding complex values.
struct ComplexTensor {
  Tensor real;
  Tensor imag;

  ComplexTensor() = default;
  ComplexTensor(Tensor re, Tensor im);

  std::int64_t numel() const { return real.numel(); }
};

std::string shape_to_string(const std::vector<std::int64_t>& s);

}  // namespace scatterfusion
