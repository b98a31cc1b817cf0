#include <limits>

#include "doctest.h"
#include "scatterfusion/errors.hpp"
#include "scatterfusion/tensor.hpp"

using namespace scatterfusion;

TEST_CASE("tensor construction and accessors") {
  Tensor t = Tensor::zeros({3, 4});
  CHECK(t.numel() == 12);
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 4);
  t.at(2, 3) = 7.0;
  CHECK(t.at(2, 3) == 7.0);
  CHECK(t.data[11] == 7.0);

  Tensor s = Tensor::scalar(2.5);
  CHECK(s.numel() == 1);
  CHECK(s.data[0] == 2.5);

  Tensor f = Tensor::full({2, 2}, -1.0);
  for (double v : f.data) CHECK(v == -1.0);
}

TEST_CASE("tensor shape checks throw") {
  Tensor t = Tensor::zeros({6});
  CHECK_THROWS_AS((void)t.rows(), DimensionError);

  Tensor bad;
  bad.shape = {2, 3};
  bad.data.assign(5, 0.0);
  CHECK_THROWS_AS(check_tensor(bad), DimensionError);
}

TEST_CASE("same_shape and all_finite") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  Tensor c = Tensor::zeros({3, 2});
  CHECK(a.same_shape(b));
  CHECK(!a.same_shape(c));
  CHECK(a.all_finite());
  a.data[0] = std::numeric_limits<double>::infinity();
  CHECK(!a.all_finite());
}

TEST_CASE("complex tensor enforces matching parts") {
  Tensor re = Tensor::zeros({4});
  Tensor im = Tensor::zeros({5});
  CHECK_THROWS_AS(ComplexTensor(re, im), DimensionError);
  ComplexTensor z(Tensor::zeros({4}), Tensor::zeros({4}));
  CHECK(z.real.numel() == 4);
}
