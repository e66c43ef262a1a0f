#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualmatch/metrics.hpp"
#include "dualmatch/model.hpp"
#include "dualmatch/synthgen.hpp"
#include "dualmatch/tabular.hpp"

namespace dualmatch {

inline constexpr int kReportFormatVersion = 1;

struct TenureTestSet {
  LabeledPairSet set;
  /// Households that received fewer than m conflicting units.
  std::size_t short_households = 0;
  /// Households with unknown tenure; they keep their positive but get no negatives.
  std::size_t unknown_tenure_households = 0;
  std::vector<std::string> warnings;
};

/// Positives are the held-out co-occurring pairs (r, r). For every household
/// with known tenure, m held-out units of the conflicting tenure are drawn
/// without replacement as negatives. Throws NoTenureColumn when the schema
/// has no tenure column on either side.
TenureTestSet build_tenure_testset(const MicrodataTable& table, std::span<const std::size_t> rows,
                                   std::size_t negatives_per_positive, std::uint64_t seed);

/// Every (x_rows[i], y_rows[j]) pair labeled by the ground-truth matrix.
LabeledPairSet synthetic_gt_pairs(const GroundTruthMatrix& gt, std::span<const std::size_t> x_rows,
                                  std::span<const std::size_t> y_rows);

struct EvalReport {
  double ap = 0.0;
  double ndcg = 0.0;
  std::size_t k = 10;
  std::size_t households = 0;
  std::size_t degenerate_households = 0;
  std::vector<PrPoint> pr;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  nlohmann::json provenance = nlohmann::json::object();
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  /// report.json and pr_curve.csv.
  void write(const std::filesystem::path& dir) const;
};

void write_pr_curve_csv(std::span<const PrPoint> curve, const std::filesystem::path& path);
std::vector<PrPoint> read_pr_curve_csv(const std::filesystem::path& path);

/// NDCG@k per household (row_a) over its candidates in set order, averaged
/// over households with at least one positive.
double mean_household_ndcg(const LabeledPairSet& set, std::span<const double> scores, std::size_t k,
                           std::size_t* households = nullptr, std::size_t* degenerate = nullptr);

/// Scores the set in sparse mode and fills AP, NDCG and the PR curve.
EvalReport evaluate(const DualEncoderModel& model, const LabeledPairSet& set, const EncodedMatrix& xa,
                    const EncodedMatrix& xb, std::size_t k = 10, bool use_ema = true);

/// Metrics of an arbitrary score vector aligned with `set.pairs`.
EvalReport evaluate_scores(const LabeledPairSet& set, std::span<const double> scores, std::size_t k = 10);

struct SweepRow {
  int k = 0;
  double median_cluster_size = 0.0;
  double ap = 0.0;
  double ndcg = 0.0;
  std::size_t positives = 0;
  double runtime_s = 0.0;
  std::uint64_t seed = 0;
  /// "Singleton" when every cluster holds one row.
  std::string label;
};

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);

struct FeatureImportance {
  std::string feature;
  Side side = Side::A;
  std::vector<std::size_t> columns;
  double mean_drop = 0.0;
  double std_drop = 0.0;
};

/// Copy of `x` whose `columns` are permuted across rows by `perm` together.
Tensor2 permute_columns(const Tensor2& x, std::span<const std::size_t> columns, std::span<const std::size_t> perm);

/// Mean AP drop per source column (one-hot groups move as a unit), sorted
/// descending by drop, ties by side then name.
std::vector<FeatureImportance> permutation_importance(const DualEncoderModel& model, const LabeledPairSet& set,
                                                      const EncodedMatrix& xa, const EncodedMatrix& xb,
                                                      std::size_t repeats, std::uint64_t seed);

void write_importance_csv(std::span<const FeatureImportance> rows, const std::filesystem::path& path);

}  // namespace dualmatch
