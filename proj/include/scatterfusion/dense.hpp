#pragma once

#include "scatterfusion/tensor.hpp"

namespace scatterfusion::dense {

// Row-pointer matrix products shared by the tape ops and the plain forward
// paths. Shapes are the caller's responsibility.

// a [m x k] times b [k x n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const long m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  for (long i = 0; i < m; ++i) {
    const double* arow = a.data.data() + i * k;
    double* orow = out.data.data() + i * n;
    for (long p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data.data() + p * n;
      for (long j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// a [m x k] times b^T where b is [n x k].
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const long m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = Tensor::zeros({m, n});
  for (long i = 0; i < m; ++i) {
    const double* arow = a.data.data() + i * k;
    double* orow = out.data.data() + i * n;
    for (long j = 0; j < n; ++j) {
      const double* brow = b.data.data() + j * k;
      double acc = 0.0;
      for (long p = 0; p < k; ++p) acc += arow[p] * brow[p];
      orow[j] = acc;
    }
  }
  return out;
}

// a^T times b where a is [k x m], b is [k x n].
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const long k = a.rows(), m = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  for (long p = 0; p < k; ++p) {
    const double* arow = a.data.data() + p * m;
    const double* brow = b.data.data() + p * n;
    for (long i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = out.data.data() + i * n;
      for (long j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

}  // namespace scatterfusion::dense
