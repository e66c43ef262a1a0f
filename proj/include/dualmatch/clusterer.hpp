#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dualmatch/tabular.hpp"
#include "dualmatch/tensor.hpp"

namespace dualmatch {

struct SplitEvent {
  int parent = 0;
  /// Id given to the second child; the first child keeps the parent's id.
  int child = 0;
  double parent_sse = 0.0;
  double total_sse_before = 0.0;
  double total_sse_after = 0.0;
};

struct ClusterAssignment {
  int k = 0;
  /// Cluster id per matrix row.
  std::vector<int> labels;
  Tensor2 centroids;
  std::vector<double> sse;
  std::vector<SplitEvent> split_trace;

  double total_sse() const;
  std::vector<std::size_t> sizes() const;
  std::vector<std::vector<std::size_t>> members() const;
  double median_size() const;
};

/// Divisive clustering: start from one cluster and repeatedly 2-means-split the
/// cluster with the largest SSE (ties to the lowest id) until `k` clusters
/// exist. Only clusters with at least two members are eligible. The seed is
/// recorded for provenance; initialization is deterministic.
ClusterAssignment bisecting_kmeans(const Tensor2& x, int k, std::uint64_t seed = 0, int max_iter = 100);

/// Lloyd's 2-means on `members` (row indices into `x`) from farthest-point
/// initialization. Neither child is empty.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> two_means_split(
    const Tensor2& x, std::span<const std::size_t> members, int max_iter = 100);

/// Rewinds the split trace so only the first `k - 1` splits remain. The result
/// equals what bisecting_kmeans would return for `k` on the same data.
ClusterAssignment truncate_assignment(const ClusterAssignment& full, const Tensor2& x, int k);

/// Line-oriented split log: "split <n> parent=<id> child=<id> parent_sse=..".
void write_split_trace(const ClusterAssignment& assignment, std::ostream& out);
/// CSV with columns row_id,cluster_id.
void write_assignment_csv(const ClusterAssignment& assignment, std::span<const std::size_t> row_ids,
                          const std::filesystem::path& path);
/// Reads labels written by write_assignment_csv; the caller recomputes geometry.
std::vector<int> read_assignment_csv(const std::filesystem::path& path, std::span<const std::size_t> row_ids);
/// Rebuilds centroids and SSE for given labels.
ClusterAssignment assignment_from_labels(const Tensor2& x, std::vector<int> labels, int k);

/// Cluster pairs (a, b) spanned by at least one co-occurring record.
class ClusterLinkMatrix {
 public:
  ClusterLinkMatrix(int k_a, int k_b, std::vector<std::pair<int, int>> links);

  int k_a() const { return k_a_; }
  int k_b() const { return k_b_; }
  bool linked(int a, int b) const;
  std::size_t count() const { return links_.size(); }
  /// Sorted, duplicate-free.
  const std::vector<std::pair<int, int>>& links() const { return links_; }

 private:
  int k_a_;
  int k_b_;
  std::vector<std::pair<int, int>> links_;
};

/// `co_occurrence` holds (row in A matrix, row in B matrix) index pairs.
ClusterLinkMatrix link_clusters(const ClusterAssignment& a, const ClusterAssignment& b,
                                std::span<const std::pair<std::size_t, std::size_t>> co_occurrence);

/// Own/rent class per table row and side, read from the schema's tenure
/// columns. -1 marks an unknown tenure (missing or no tenure column).
class TenureMask {
 public:
  TenureMask() = default;
  explicit TenureMask(const MicrodataTable& table);

  int tenure_a(std::size_t row) const { return row < class_a_.size() ? class_a_[row] : -1; }
  int tenure_b(std::size_t row) const { return row < class_b_.size() ? class_b_[row] : -1; }

  /// True when both tenures are known and differ (owner with rented unit or
  /// renter with owned unit).
  bool conflicts(std::size_t row_a, std::size_t row_b) const {
    const int a = tenure_a(row_a);
    const int b = tenure_b(row_b);
    return a >= 0 && b >= 0 && a != b;
  }

  static constexpr int kOwner = 1;
  static constexpr int kRenter = 0;

 private:
  std::vector<std::int8_t> class_a_;
  std::vector<std::int8_t> class_b_;
};

enum class PairProvenance : std::uint8_t { Diagonal, ClusterExpanded };

/// Training supervision over table row ids. Pairs in the exclusion mask are
/// neither positive nor negative.
class PairLabelSet {
 public:
  PairLabelSet() = default;
  PairLabelSet(std::vector<std::uint64_t> sorted_keys, std::vector<PairProvenance> provenance,
               std::optional<TenureMask> mask);

  static std::uint64_t key(std::size_t row_a, std::size_t row_b) {
    return (static_cast<std::uint64_t>(row_a) << 32) | static_cast<std::uint64_t>(row_b);
  }

  bool is_positive(std::size_t row_a, std::size_t row_b) const;
  bool is_excluded(std::size_t row_a, std::size_t row_b) const {
    return mask_ && mask_->conflicts(row_a, row_b);
  }
  std::size_t num_positives() const { return keys_.size(); }
  std::size_t num_diagonal() const;
  std::size_t num_excluded() const { return excluded_; }
  void set_excluded_count(std::size_t n) { excluded_ = n; }

  std::vector<std::pair<std::size_t, std::size_t>> positives() const;
  PairProvenance provenance(std::size_t index) const { return provenance_[index]; }
  bool has_mask() const { return mask_.has_value(); }

 private:
  std::vector<std::uint64_t> keys_;
  std::vector<PairProvenance> provenance_;
  std::optional<TenureMask> mask_;
  std::size_t excluded_ = 0;
};

/// Positives are all (i, j) whose clusters are linked, over the rows the
/// assignments cover (`row_ids_a[i]` is the table row of A-matrix row i).
/// Pairs with conflicting tenure move to the exclusion mask.
PairLabelSet expand_pairs(const ClusterLinkMatrix& links, const ClusterAssignment& a,
                          const ClusterAssignment& b, std::span<const std::size_t> row_ids_a,
                          std::span<const std::size_t> row_ids_b, const TenureMask* mask = nullptr);

}  // namespace dualmatch
