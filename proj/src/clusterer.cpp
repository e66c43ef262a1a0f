#include "dualmatch/clusterer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>

#include "dualmatch/csv.hpp"
#include "dualmatch/errors.hpp"

namespace dualmatch {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<double> mean_of(const Tensor2& x, std::span<const std::size_t> members) {
  std::vector<double> c(x.cols(), 0.0);
  for (std::size_t r : members) {
    auto row = x.row(r);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += row[j];
  }
  if (!members.empty()) {
    for (double& v : c) v /= static_cast<double>(members.size());
  }
  return c;
}

double sse_of(const Tensor2& x, std::span<const std::size_t> members, std::span<const double> centroid) {
  double s = 0.0;
  for (std::size_t r : members) s += squared_distance(x.row(r), centroid);
  return s;
}

// Member farthest from `point`; ties go to the lowest row index.
std::size_t farthest_from(const Tensor2& x, std::span<const std::size_t> members,
                          std::span<const double> point) {
  std::size_t best = members.front();
  double best_d = -1.0;
  for (std::size_t r : members) {
    const double d = squared_distance(x.row(r), point);
    if (d > best_d || (d == best_d && r < best)) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

void repair_empty(const Tensor2& x, std::vector<std::size_t>& full, std::vector<std::size_t>& empty) {
  const auto centroid = mean_of(x, full);
  const std::size_t mover = farthest_from(x, full, centroid);
  full.erase(std::find(full.begin(), full.end(), mover));
  empty.push_back(mover);
}

}  // namespace

double ClusterAssignment::total_sse() const {
  double total = 0.0;
  for (double s : sse) total += s;
  return total;
}

std::vector<std::size_t> ClusterAssignment::sizes() const {
  std::vector<std::size_t> out(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++out[static_cast<std::size_t>(l)];
  return out;
}

std::vector<std::vector<std::size_t>> ClusterAssignment::members() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(i);
  return out;
}

double ClusterAssignment::median_size() const {
  auto s = sizes();
  if (s.empty()) return 0.0;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  if (n % 2 == 1) return static_cast<double>(s[n / 2]);
  return 0.5 * static_cast<double>(s[n / 2 - 1] + s[n / 2]);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> two_means_split(
    const Tensor2& x, std::span<const std::size_t> members, int max_iter) {
  if (members.size() < 2) {
    throw Error(ErrorCode::TooFewMembers, "two_means_split needs at least two members");
  }
  if (max_iter < 1) throw Error(ErrorCode::TooFewMembers, "max_iter must be at least 1");

  const auto centroid = mean_of(x, members);
  const std::size_t first = farthest_from(x, members, centroid);
  const std::size_t second = farthest_from(x, members, x.row(first));
  std::vector<double> c0(x.row(first).begin(), x.row(first).end());
  std::vector<double> c1(x.row(second).begin(), x.row(second).end());

  std::vector<std::uint8_t> side(members.size(), 0);
  auto assign = [&]() {
    bool changed = false;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto row = x.row(members[i]);
      const std::uint8_t s = squared_distance(row, c1) < squared_distance(row, c0) ? 1 : 0;
      changed |= (s != side[i]);
      side[i] = s;
    }
    return changed;
  };
  auto collect = [&]() {
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < members.size(); ++i) {
      (side[i] ? out.second : out.first).push_back(members[i]);
    }
    return out;
  };

  assign();
  for (int iter = 0; iter < max_iter; ++iter) {
    auto [left, right] = collect();
    if (!left.empty()) c0 = mean_of(x, left);
    if (!right.empty()) c1 = mean_of(x, right);
    if (!assign()) break;
  }

  auto out = collect();
  if (out.second.empty()) repair_empty(x, out.first, out.second);
  if (out.first.empty()) repair_empty(x, out.second, out.first);
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

ClusterAssignment bisecting_kmeans(const Tensor2& x, int k, std::uint64_t /*seed*/, int max_iter) {
  const std::size_t n = x.rows();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "cannot cluster an empty matrix");
  if (k < 1 || static_cast<std::size_t>(k) > n) {
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  }
  if (max_iter < 1) throw Error(ErrorCode::TooFewMembers, "max_iter must be at least 1");

  std::vector<std::vector<std::size_t>> members(1);
  members[0].resize(n);
  for (std::size_t i = 0; i < n; ++i) members[0][i] = i;
  std::vector<std::vector<double>> centroids{mean_of(x, members[0])};
  std::vector<double> sse{sse_of(x, members[0], centroids[0])};

  ClusterAssignment out;
  while (members.size() < static_cast<std::size_t>(k)) {
    std::size_t target = members.size();
    for (std::size_t c = 0; c < members.size(); ++c) {
      if (members[c].size() < 2) continue;
      if (target == members.size() || sse[c] > sse[target]) target = c;
    }
    if (target == members.size()) throw Error(ErrorCode::Internal, "no splittable cluster left");

    SplitEvent event;
    event.parent = static_cast<int>(target);
    event.child = static_cast<int>(members.size());
    event.parent_sse = sse[target];
    for (double s : sse) event.total_sse_before += s;

    auto [left, right] = two_means_split(x, members[target], max_iter);
    centroids[target] = mean_of(x, left);
    sse[target] = sse_of(x, left, centroids[target]);
    centroids.push_back(mean_of(x, right));
    sse.push_back(sse_of(x, right, centroids.back()));
    members[target] = std::move(left);
    members.push_back(std::move(right));

    for (double s : sse) event.total_sse_after += s;
    out.split_trace.push_back(event);
  }

  out.k = k;
  out.labels.assign(n, 0);
  out.centroids = Tensor2(members.size(), x.cols());
  for (std::size_t c = 0; c < members.size(); ++c) {
    for (std::size_t r : members[c]) out.labels[r] = static_cast<int>(c);
    std::copy(centroids[c].begin(), centroids[c].end(), out.centroids.row(c).begin());
  }
  out.sse = std::move(sse);
  return out;
}

ClusterAssignment assignment_from_labels(const Tensor2& x, std::vector<int> labels, int k) {
  if (labels.size() != x.rows()) throw Error(ErrorCode::UnassignedRow, "label count does not match rows");
  ClusterAssignment out;
  out.k = k;
  out.labels = std::move(labels);
  for (int l : out.labels) {
    if (l < 0 || l >= k) throw Error(ErrorCode::UnassignedRow, "cluster id out of range");
  }
  const auto members = out.members();
  out.centroids = Tensor2(static_cast<std::size_t>(k), x.cols());
  out.sse.assign(static_cast<std::size_t>(k), 0.0);
  for (std::size_t c = 0; c < members.size(); ++c) {
    const auto centroid = mean_of(x, members[c]);
    std::copy(centroid.begin(), centroid.end(), out.centroids.row(c).begin());
    out.sse[c] = sse_of(x, members[c], centroid);
  }
  return out;
}

ClusterAssignment truncate_assignment(const ClusterAssignment& full, const Tensor2& x, int k) {
  if (k < 1 || k > full.k) {
    throw Error(ErrorCode::KTooLarge, "cannot truncate a k=" + std::to_string(full.k) +
                                          " clustering to k=" + std::to_string(k));
  }
  std::vector<int> parent_of(static_cast<std::size_t>(full.k), -1);
  for (const auto& e : full.split_trace) parent_of[static_cast<std::size_t>(e.child)] = e.parent;
  std::vector<int> labels = full.labels;
  for (int& l : labels) {
    while (l >= k) l = parent_of[static_cast<std::size_t>(l)];
  }
  ClusterAssignment out = assignment_from_labels(x, std::move(labels), k);
  out.split_trace.assign(full.split_trace.begin(), full.split_trace.begin() + (k - 1));
  return out;
}

void write_split_trace(const ClusterAssignment& assignment, std::ostream& out) {
  for (std::size_t i = 0; i < assignment.split_trace.size(); ++i) {
    const auto& e = assignment.split_trace[i];
    out << "split " << i << " parent=" << e.parent << " child=" << e.child
        << " parent_sse=" << csv::format_double(e.parent_sse)
        << " total_before=" << csv::format_double(e.total_sse_before)
        << " total_after=" << csv::format_double(e.total_sse_after) << '\n';
  }
}

void write_assignment_csv(const ClusterAssignment& assignment, std::span<const std::size_t> row_ids,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "row_id,cluster_id\n";
  for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
    out << row_ids[i] << ',' << assignment.labels[i] << '\n';
  }
}

std::vector<int> read_assignment_csv(const std::filesystem::path& path, std::span<const std::size_t> row_ids) {
  auto records = csv::read_file(path);
  std::map<std::size_t, int> by_row;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].size() < 2) throw Error(ErrorCode::CorruptFile, path.string() + ": short record");
    by_row[std::stoul(records[i][0])] = std::stoi(records[i][1]);
  }
  std::vector<int> labels;
  labels.reserve(row_ids.size());
  for (std::size_t r : row_ids) {
    auto it = by_row.find(r);
    if (it == by_row.end()) throw Error(ErrorCode::UnassignedRow, "row " + std::to_string(r) + " not in " + path.string());
    labels.push_back(it->second);
  }
  return labels;
}

// ---------------------------------------------------------------------------

ClusterLinkMatrix::ClusterLinkMatrix(int k_a, int k_b, std::vector<std::pair<int, int>> links)
    : k_a_(k_a), k_b_(k_b), links_(std::move(links)) {
  std::sort(links_.begin(), links_.end());
  links_.erase(std::unique(links_.begin(), links_.end()), links_.end());
}

bool ClusterLinkMatrix::linked(int a, int b) const {
  return std::binary_search(links_.begin(), links_.end(), std::make_pair(a, b));
}

ClusterLinkMatrix link_clusters(const ClusterAssignment& a, const ClusterAssignment& b,
                                std::span<const std::pair<std::size_t, std::size_t>> co_occurrence) {
  std::vector<std::pair<int, int>> links;
  links.reserve(co_occurrence.size());
  for (const auto& [ia, ib] : co_occurrence) {
    if (ia >= a.labels.size() || ib >= b.labels.size()) {
      throw Error(ErrorCode::UnassignedRow, "co-occurrence (" + std::to_string(ia) + "," +
                                                std::to_string(ib) + ") references an unassigned row");
    }
    links.emplace_back(a.labels[ia], b.labels[ib]);
  }
  return ClusterLinkMatrix(a.k, b.k, std::move(links));
}

// ---------------------------------------------------------------------------

TenureMask::TenureMask(const MicrodataTable& table) {
  const FeatureSchema& schema = table.schema();
  auto fill = [&](Side side, std::vector<std::int8_t>& out) {
    auto col = schema.tenure_column(side);
    if (!col) return;
    const auto& own = schema[*col].own_codes;
    out.assign(table.num_rows(), -1);
    for (std::size_t r = 0; r < table.num_rows(); ++r) {
      const auto& code = table.code(r, *col);
      if (!code) continue;
      const bool owner = std::find(own.begin(), own.end(), *code) != own.end();
      out[r] = static_cast<std::int8_t>(owner ? kOwner : kRenter);
    }
  };
  fill(Side::A, class_a_);
  fill(Side::B, class_b_);
}

PairLabelSet::PairLabelSet(std::vector<std::uint64_t> sorted_keys, std::vector<PairProvenance> provenance,
                           std::optional<TenureMask> mask)
    : keys_(std::move(sorted_keys)), provenance_(std::move(provenance)), mask_(std::move(mask)) {
  if (keys_.size() != provenance_.size()) throw Error(ErrorCode::Internal, "provenance length mismatch");
}

bool PairLabelSet::is_positive(std::size_t row_a, std::size_t row_b) const {
  return std::binary_search(keys_.begin(), keys_.end(), key(row_a, row_b));
}

std::size_t PairLabelSet::num_diagonal() const {
  return static_cast<std::size_t>(std::count(provenance_.begin(), provenance_.end(), PairProvenance::Diagonal));
}

std::vector<std::pair<std::size_t, std::size_t>> PairLabelSet::positives() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(keys_.size());
  for (std::uint64_t k : keys_) out.emplace_back(static_cast<std::size_t>(k >> 32), static_cast<std::size_t>(k & 0xffffffffULL));
  return out;
}

PairLabelSet expand_pairs(const ClusterLinkMatrix& links, const ClusterAssignment& a,
                          const ClusterAssignment& b, std::span<const std::size_t> row_ids_a,
                          std::span<const std::size_t> row_ids_b, const TenureMask* mask) {
  if (row_ids_a.size() != a.labels.size() || row_ids_b.size() != b.labels.size()) {
    throw Error(ErrorCode::LabelRowMismatch, "row ids do not match cluster assignments");
  }
  if (links.k_a() != a.k || links.k_b() != b.k) {
    throw Error(ErrorCode::LabelRowMismatch, "link matrix does not match the assignments");
  }
  const auto members_a = a.members();
  const auto members_b = b.members();

  std::vector<std::uint64_t> keys;
  std::size_t excluded = 0;
  for (const auto& [ca, cb] : links.links()) {
    for (std::size_t i : members_a[static_cast<std::size_t>(ca)]) {
      for (std::size_t j : members_b[static_cast<std::size_t>(cb)]) {
        const std::size_t ra = row_ids_a[i];
        const std::size_t rb = row_ids_b[j];
        if (mask && mask->conflicts(ra, rb)) {
          ++excluded;
          continue;
        }
        keys.push_back(PairLabelSet::key(ra, rb));
      }
    }
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<PairProvenance> provenance(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const bool diagonal = (keys[i] >> 32) == (keys[i] & 0xffffffffULL);
    provenance[i] = diagonal ? PairProvenance::Diagonal : PairProvenance::ClusterExpanded;
  }
  std::optional<TenureMask> kept;
  if (mask) kept = *mask;
  PairLabelSet out(std::move(keys), std::move(provenance), std::move(kept));
  out.set_excluded_count(excluded);
  return out;
}

}  // namespace dualmatch
