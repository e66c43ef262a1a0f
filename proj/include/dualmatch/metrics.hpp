#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dualmatch {

/// Step-sum area under the precision-recall curve, sum_n (R_n - R_{n-1}) P_n,
/// with one step per distinct score (tied scores form a single threshold).
/// Throws NoPositives if no label is 1.
double average_precision(std::span<const double> scores, std::span<const int> labels);

struct NdcgResult {
  double value = 0.0;
  /// Set when no item is relevant; value is 0 then.
  bool degenerate = false;
};

/// DCG@k of the score-sorted order over the ideal DCG@k with log2(i+1)
/// discounts. Ties in scores keep index order.
NdcgResult ndcg_at_k(std::span<const double> scores, std::span<const double> relevance, std::size_t k);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// One point per distinct score, thresholds descending.
std::vector<PrPoint> pr_curve(std::span<const double> scores, std::span<const int> labels);

/// Applies the AP step sum to an emitted curve.
double average_precision_from_curve(std::span<const PrPoint> curve);

/// Indices sorted by descending score; equal scores keep ascending index.
std::vector<std::size_t> rank_descending(std::span<const double> scores);

enum class PairSource { CoOccurrence, TenureNegative, SyntheticGt };

const char* to_string(PairSource source);

struct LabeledPair {
  std::size_t row_a = 0;
  std::size_t row_b = 0;
  int relevance = 0;
  PairSource source = PairSource::CoOccurrence;
};

struct LabeledPairSet {
  std::vector<LabeledPair> pairs;

  std::size_t size() const { return pairs.size(); }
  std::size_t positives() const;
  std::size_t negatives() const { return pairs.size() - positives(); }
  std::vector<int> labels() const;

  /// Throws if a (row_a, row_b) repeats or the set lacks a positive or a negative.
  void validate() const;
};

}  // namespace dualmatch
