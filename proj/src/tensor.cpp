#include "xlrec/tensor.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numeric>

#include "xlrec/errors.hpp"

namespace xlrec {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EMat>;
using MutMap = Eigen::Map<EMat>;

std::size_t shape_product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

void require_rank2(const Tensor& t, const char* who) {
  if (t.shape.size() != 2)
    throw DimensionError(std::string(who) + ": expected rank-2 tensor, got " +
                         t.shape_str());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, double fill)
    : shape(std::move(s)), data(shape_product(shape), fill) {
  for (std::size_t d : shape)
    if (d == 0) throw DimensionError("tensor dimension must be positive");
}

Tensor Tensor::scalar(double v) {
  Tensor t({1, 1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  Tensor t;
  t.shape = {1, values.size()};
  t.data = std::move(values);
  return t;
}

Tensor Tensor::col(std::vector<double> values) {
  Tensor t;
  t.shape = {values.size(), 1};
  t.data = std::move(values);
  return t;
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> values) {
  if (values.size() != r * c)
    throw DimensionError("matrix: " + std::to_string(values.size()) +
                         " values for " + std::to_string(r) + "x" +
                         std::to_string(c));
  Tensor t;
  t.shape = {r, c};
  t.data = std::move(values);
  return t;
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape); }

std::size_t Tensor::rows() const {
  if (shape.size() == 1) return 1;
  require_rank2(*this, "rows");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() == 1) return shape[0];
  require_rank2(*this, "cols");
  return shape[1];
}

double Tensor::item() const {
  if (!is_scalar())
    throw ContractError("item: tensor " + shape_str() + " is not scalar");
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.shape[1] != b.shape[0])
    throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() +
                         " * " + b.shape_str());
  Tensor out({a.shape[0], b.shape[1]});
  ConstMap ma(a.data.data(), a.shape[0], a.shape[1]);
  ConstMap mb(b.data.data(), b.shape[0], b.shape[1]);
  MutMap(out.data.data(), out.shape[0], out.shape[1]).noalias() = ma * mb;
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.shape[1] != b.shape[1])
    throw DimensionError("matmul_nt: inner dimensions disagree, " +
                         a.shape_str() + " * " + b.shape_str() + "^T");
  Tensor out({a.shape[0], b.shape[0]});
  ConstMap ma(a.data.data(), a.shape[0], a.shape[1]);
  ConstMap mb(b.data.data(), b.shape[0], b.shape[1]);
  MutMap(out.data.data(), out.shape[0], out.shape[1]).noalias() =
      ma * mb.transpose();
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  if (a.shape[0] != b.shape[0])
    throw DimensionError("matmul_tn: inner dimensions disagree, " +
                         a.shape_str() + "^T * " + b.shape_str());
  Tensor out({a.shape[1], b.shape[1]});
  ConstMap ma(a.data.data(), a.shape[0], a.shape[1]);
  ConstMap mb(b.data.data(), b.shape[0], b.shape[1]);
  MutMap(out.data.data(), out.shape[0], out.shape[1]).noalias() =
      ma.transpose() * mb;
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out({a.shape[1], a.shape[0]});
  for (std::size_t r = 0; r < a.shape[0]; ++r)
    for (std::size_t c = 0; c < a.shape[1]; ++c)
      out.at(c, r) = a.at(r, c);
  return out;
}

Tensor softmax(const Tensor& v) {
  if (v.numel() == 0) throw DimensionError("softmax: empty input");
  bool vector_like = v.shape.size() == 1 ||
                     (v.shape.size() == 2 && (v.shape[0] == 1 || v.shape[1] == 1));
  if (!vector_like)
    throw DimensionError("softmax: expected a vector, got " + v.shape_str());
  Tensor out = v;
  double m = out.data[0];
  for (double x : out.data) m = std::max(m, x);
  double sum = 0.0;
  for (double& x : out.data) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : out.data) x /= sum;
  return out;
}

void softmax_rows_inplace(Tensor& m) {
  require_rank2(m, "softmax_rows");
  const std::size_t nr = m.shape[0], nc = m.shape[1];
  for (std::size_t r = 0; r < nr; ++r) {
    double* row = m.data.data() + r * nc;
    double mx = row[0];
    for (std::size_t c = 1; c < nc; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < nc; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < nc; ++c) row[c] /= sum;
  }
}

void accumulate(Tensor& dst, const Tensor& src) {
  if (!dst.same_shape(src))
    throw DimensionError("accumulate: shape mismatch, " + dst.shape_str() +
                         " += " + src.shape_str());
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace xlrec
