#include "dualmatch/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "dualmatch/errors.hpp"

namespace dualmatch {

namespace {

std::string shape_string(const Tensor2& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorCode::ShapeMismatch, "ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
  Tensor2 out(1, values.size());
  std::copy(values.begin(), values.end(), out.data_.begin());
  return out;
}

void Tensor2::fill(double value) {
  std::fill(data_.begin(), data_.end(), value);
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::ShapeMismatch,
                "matmul " + shape_string(a) + " * " + shape_string(b));
  }
  Tensor2 out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* __restrict o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      const double* __restrict w = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += s * w[j];
    }
  }
  return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) {
    throw Error(ErrorCode::ShapeMismatch,
                "matmul_tn " + shape_string(a) + "^T * " + shape_string(b));
  }
  Tensor2 out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* __restrict g = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = a(r, i);
      double* __restrict o = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += s * g[j];
    }
  }
  return out;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch,
                "matmul_nt " + shape_string(a) + " * " + shape_string(b) + "^T");
  }
  Tensor2 out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void add_row_broadcast(Tensor2& m, const Tensor2& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "bias " + shape_string(bias) + " for " + shape_string(m));
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
  }
}

Tensor2 column_sums(const Tensor2& m) {
  Tensor2 out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out(0, j) += r[j];
  }
  return out;
}

Tensor2 gather_rows(const Tensor2& m, std::span<const std::size_t> rows) {
  Tensor2 out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) throw Error(ErrorCode::ShapeMismatch, "gather_rows index out of range");
    auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

bool bit_equal(const Tensor2& a, const Tensor2& b) {
  return a.same_shape(b) &&
         (a.size() == 0 ||
          std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0);
}

void require_finite(const Tensor2& m, const char* where) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.values()[i])) {
      throw Error(ErrorCode::NonFiniteValue,
                  std::string(where) + ": entry (" + std::to_string(i / m.cols()) + "," +
                      std::to_string(i % m.cols()) + ") is not finite");
    }
  }
}

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* where) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(where) + ": " + shape_string(a) + " vs " + shape_string(b));
  }
}

}  // namespace dualmatch
