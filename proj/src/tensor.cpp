#include "scatterfusion/tensor.hpp"

#include <cmath>
#include <sstream>

#include "scatterfusion/errors.hpp"

namespace scatterfusion {

std::string shape_to_string(const std::vector<std::int64_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

static std::int64_t shape_product(const std::vector<std::int64_t>& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::int64_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  check_tensor(*this);
}

Tensor Tensor::zeros(const std::vector<std::int64_t>& s) {
  Tensor t;
  t.shape = s;
  t.data.assign(static_cast<std::size_t>(shape_product(s)), 0.0);
  check_tensor(t);
  return t;
}

Tensor Tensor::full(const std::vector<std::int64_t>& s, double v) {
  Tensor t = zeros(s);
  for (auto& x : t.data) x = v;
  return t;
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::from_vector(std::vector<double> v) {
  auto n = static_cast<std::int64_t>(v.size());
  return Tensor({n}, std::move(v));
}

Tensor Tensor::from_vector(std::vector<double> v, std::vector<std::int64_t> s) {
  return Tensor(std::move(s), std::move(v));
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(data.size()); }

void throw_not_2d(const char* who, const Tensor& t) {
  throw DimensionError(std::string(who) + "(): tensor is not 2-D, shape " + t.shape_str());
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

void check_tensor(const Tensor& t) {
  if (t.shape.empty()) throw DimensionError("tensor must have at least one dimension");
  for (auto d : t.shape)
    if (d < 1) throw DimensionError("tensor dimensions must be >= 1, got " + t.shape_str());
  if (static_cast<std::int64_t>(t.data.size()) != shape_product(t.shape))
    throw DimensionError("tensor data length " + std::to_string(t.data.size()) +
                         " does not match shape " + t.shape_str());
}

ComplexTensor::ComplexTensor(Tensor re, Tensor im) : real(std::move(re)), imag(std::move(im)) {
  if (!real.same_shape(imag))
    throw DimensionError("complex tensor parts differ in shape: " + real.shape_str() + " vs " +
                         imag.shape_str());
}

}  // namespace scatterfusion
