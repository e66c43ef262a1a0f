#include "dualmatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dualmatch/errors.hpp"

namespace dualmatch {

std::vector<std::size_t> rank_descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<PrPoint> pr_curve(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "scores and labels differ in length");
  }
  std::size_t total_pos = 0;
  for (int l : labels) total_pos += (l != 0);
  if (total_pos == 0) throw Error(ErrorCode::NoPositives, "precision-recall needs at least one positive");

  const auto order = rank_descending(scores);
  std::vector<PrPoint> curve;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      tp += (labels[order[i]] != 0);
      ++seen;
      ++i;
    }
    curve.push_back({threshold, static_cast<double>(tp) / static_cast<double>(seen),
                     static_cast<double>(tp) / static_cast<double>(total_pos)});
  }
  return curve;
}

double average_precision_from_curve(std::span<const PrPoint> curve) {
  double ap = 0.0;
  double prev_recall = 0.0;
  for (const auto& p : curve) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  const auto curve = pr_curve(scores, labels);
  return average_precision_from_curve(curve);
}

NdcgResult ndcg_at_k(std::span<const double> scores, std::span<const double> relevance, std::size_t k) {
  if (scores.size() != relevance.size()) {
    throw Error(ErrorCode::ShapeMismatch, "scores and relevance differ in length");
  }
  if (k < 1) throw Error(ErrorCode::DomainError, "k must be at least 1");
  const std::size_t depth = std::min(k, scores.size());
  const auto order = rank_descending(scores);
  std::vector<double> ideal(relevance.begin(), relevance.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());

  double dcg = 0.0;
  double idcg = 0.0;
  for (std::size_t i = 0; i < depth; ++i) {
    const double discount = std::log2(static_cast<double>(i) + 2.0);
    dcg += relevance[order[i]] / discount;
    idcg += ideal[i] / discount;
  }
  if (idcg <= 0.0) return {0.0, true};
  return {dcg / idcg, false};
}

const char* to_string(PairSource source) {
  switch (source) {
    case PairSource::CoOccurrence: return "co-occurrence";
    case PairSource::TenureNegative: return "tenure-negative";
    case PairSource::SyntheticGt: return "synthetic-gt";
  }
  return "unknown";
}

std::size_t LabeledPairSet::positives() const {
  std::size_t n = 0;
  for (const auto& p : pairs) n += (p.relevance != 0);
  return n;
}

std::vector<int> LabeledPairSet::labels() const {
  std::vector<int> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.relevance != 0 ? 1 : 0);
  return out;
}

void LabeledPairSet::validate() const {
  std::vector<std::pair<std::size_t, std::size_t>> keys;
  keys.reserve(pairs.size());
  for (const auto& p : pairs) keys.emplace_back(p.row_a, p.row_b);
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
    throw Error(ErrorCode::DomainError, "labeled pair set contains a duplicate pair");
  }
  if (positives() == 0) throw Error(ErrorCode::NoPositives, "labeled pair set has no positive pair");
  if (negatives() == 0) throw Error(ErrorCode::DomainError, "labeled pair set has no negative pair");
}

}  // namespace dualmatch
