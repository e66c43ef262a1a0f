#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace dualmatch {

/// Dense row-major matrix of doubles.
///
/// The products below accumulate every output element in a fixed order
/// (ascending inner index), independent of how many rows are in the batch.
/// Row-chunked evaluation is therefore bit-identical to one-shot evaluation.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor2 row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Tensor2& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  void fill(double value);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a * b
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
/// transpose(a) * b
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);
/// a * transpose(b)
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);

double dot(std::span<const double> a, std::span<const double> b);

/// Adds `bias` (1 x cols) to every row.
void add_row_broadcast(Tensor2& m, const Tensor2& bias);
/// Column sums as a 1 x cols tensor.
Tensor2 column_sums(const Tensor2& m);

Tensor2 gather_rows(const Tensor2& m, std::span<const std::size_t> rows);

/// Bitwise equality, distinguishing -0.0 from 0.0 and comparing NaN payloads.
bool bit_equal(const Tensor2& a, const Tensor2& b);

/// Throws Error(NonFiniteValue) naming `where` if any entry is NaN or infinite.
void require_finite(const Tensor2& m, const char* where);

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* where);

}  // namespace dualmatch
