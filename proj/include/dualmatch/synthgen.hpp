#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dualmatch/tabular.hpp"

namespace dualmatch {

/// Category in {1..5}, two uniform(0,1) covariates and the three targets.
struct SyntheticRecord {
  int c = 1;
  double n1 = 0.0;
  double n2 = 0.0;
  double y1 = 0.0;
  double y2 = 0.0;
  double y3 = 0.0;

  std::array<double, 3> y() const { return {y1, y2, y3}; }
};

/// y1 = sin(pi (0.5 n1 + 0.3 n2 + 0.2 c/5))
/// y2 = exp(0.4 n1 + 0.4 n2 + 0.2 c/5)
/// y3 = tanh(0.3 n1 + 0.3 n2 + 0.4 c/5)
/// Throws DomainError unless c in {1..5} and n1, n2 in [0, 1].
std::array<double, 3> oracle_y(int c, double n1, double n2);

/// `n` records with balanced categories (record i has c = i mod 5 + 1) and
/// n1, n2 drawn per record from stream (seed, i). Triples are unique.
std::vector<SyntheticRecord> generate_synthetic(std::size_t n, std::uint64_t seed);

/// Dense binary relevance: label(i, j) = 1 iff max_k |y_j,k - oracle_y(x_i)_k| <= tau.
class GroundTruthMatrix {
 public:
  GroundTruthMatrix(std::size_t rows, std::size_t cols, double tau);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double tau() const { return tau_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * cols_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool value) { bits_[i * cols_ + j] = value ? 1 : 0; }
  std::size_t count_positive() const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  double tau_;
  std::vector<std::uint8_t> bits_;
};

/// X-side triples and Y-side targets may come from different subsets; row i
/// of the result corresponds to x_rows[i], column j to y_rows[j].
GroundTruthMatrix build_gt_matrix(std::span<const SyntheticRecord> x_rows,
                                  std::span<const SyntheticRecord> y_rows, double tau);

/// Schema of the synthetic benchmark: c (categorical 1..5), n1, n2 on side A;
/// y1, y2, y3 on side B.
FeatureSchema synthetic_schema();
MicrodataTable synthetic_table(std::span<const SyntheticRecord> records);
/// Reads the records back from a table with the synthetic schema.
std::vector<SyntheticRecord> records_from_table(const MicrodataTable& table);

/// Writes X.csv (c,n1,n2), Y.csv (y1,y2,y3), gt_pairs.csv (i,j of every
/// positive) and meta.json (seed, n, tau) into `dir`.
void write_synthetic_dataset(const std::filesystem::path& dir, std::span<const SyntheticRecord> records,
                             std::uint64_t seed, double tau);

struct SyntheticDataset {
  std::vector<SyntheticRecord> records;
  std::uint64_t seed = 0;
  double tau = 0.05;
};

SyntheticDataset read_synthetic_dataset(const std::filesystem::path& dir);
bool is_synthetic_dataset(const std::filesystem::path& dir);

}  // namespace dualmatch
