#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace xlrec {

// Dense row-major tensor of 64-bit floats. Everything in the model is
// rank 2 (vectors are 1xN rows or Nx1 columns); rank 1 is accepted where
// a plain vector reads better, e.g. softmax().
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values);     // 1 x n
  static Tensor col(std::vector<double> values);     // n x 1
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> values);
  static Tensor zeros_like(const Tensor& t);

  std::size_t numel() const { return data.size(); }
  bool is_scalar() const { return numel() == 1; }

  // Rank 1 tensors count as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  double item() const;  // ContractError unless numel() == 1

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;  // "[2x3]", for error messages
};

// C = A * B for rank-2 operands. DimensionError names both shapes on
// mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);

// A * B^T and A^T * B without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

// Numerically stable softmax of a vector (rank 1, 1xN or Nx1); output has
// the input's shape and sums to 1.
Tensor softmax(const Tensor& v);

// In-place row-wise stable softmax of a rank-2 tensor.
void softmax_rows_inplace(Tensor& m);

void accumulate(Tensor& dst, const Tensor& src);  // dst += src

}  // namespace xlrec
