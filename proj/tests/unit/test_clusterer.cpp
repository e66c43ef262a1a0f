#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "dualmatch/clusterer.hpp"
#include "helpers.hpp"

using namespace dualmatch;

namespace {

Tensor2 points(std::initializer_list<std::initializer_list<double>> rows) { return Tensor2(rows); }

double sse_of(const Tensor2& x, const std::vector<std::size_t>& members) {
  if (members.empty()) return 0.0;
  std::vector<double> mean(x.cols(), 0.0);
  for (auto r : members)
    for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += x(r, c);
  for (auto& m : mean) m /= static_cast<double>(members.size());
  double s = 0;
  for (auto r : members)
    for (std::size_t c = 0; c < x.cols(); ++c) s += (x(r, c) - mean[c]) * (x(r, c) - mean[c]);
  return s;
}

/// Minimum total SSE over every bipartition into two non-empty parts.
double best_bipartition_sse(const Tensor2& x) {
  const std::size_t n = x.rows();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
    std::vector<std::size_t> a, b;
    for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1 ? a : b).push_back(i);
    best = std::min(best, sse_of(x, a) + sse_of(x, b));
  }
  return best;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<std::pair<std::size_t, std::size_t>> diagonal(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> d;
  for (std::size_t i = 0; i < n; ++i) d.emplace_back(i, i);
  return d;
}

/// Positives by the defining rule, enumerated pair by pair.
std::set<std::pair<std::size_t, std::size_t>> brute_positives(const ClusterAssignment& a, const ClusterAssignment& b,
                                                             const std::vector<std::pair<std::size_t, std::size_t>>& co) {
  std::set<std::pair<int, int>> links;
  for (auto [i, j] : co) links.emplace(a.labels[i], b.labels[j]);
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    for (std::size_t j = 0; j < b.labels.size(); ++j)
      if (links.count({a.labels[i], b.labels[j]})) out.emplace(i, j);
  return out;
}

}  // namespace

TEST_CASE("k = 1 keeps every row in one cluster with SSE = n * total variance") {
  const Tensor2 x = test::random_tensor(30, 3, 1);
  const auto a = bisecting_kmeans(x, 1);
  CHECK(a.k == 1);
  for (int l : a.labels) CHECK(l == 0);
  CHECK(a.sse[0] == doctest::Approx(sse_of(x, iota(30))).epsilon(1e-12));
  CHECK(a.split_trace.empty());
}

TEST_CASE("four separable points split into the two vertical pairs") {
  const Tensor2 x = points({{0, 0}, {0, 1}, {10, 0}, {10, 1}});
  const auto a = bisecting_kmeans(x, 2);
  CHECK(a.labels[0] == a.labels[1]);
  CHECK(a.labels[2] == a.labels[3]);
  CHECK(a.labels[0] != a.labels[2]);
  CHECK(a.total_sse() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.total_sse() == doctest::Approx(best_bipartition_sse(x)).epsilon(1e-12));
}

TEST_CASE("k = n gives singletons with zero SSE") {
  const Tensor2 x = test::random_tensor(12, 2, 5);
  const auto a = bisecting_kmeans(x, 12);
  std::set<int> labels(a.labels.begin(), a.labels.end());
  CHECK(labels.size() == 12);
  for (double s : a.sse) CHECK(s == 0.0);
}

TEST_CASE("two_means_split examples") {
  SUBCASE("identical points are separated by the empty-child repair") {
    const Tensor2 x = points({{1, 1}, {1, 1}});
    const auto [l, r] = two_means_split(x, iota(2));
    CHECK(l.size() == 1);
    CHECK(r.size() == 1);
  }
  SUBCASE("line with two groups") {
    const Tensor2 x = points({{0}, {0.1}, {9.9}, {10}});
    auto [l, r] = two_means_split(x, iota(4));
    std::sort(l.begin(), l.end());
    std::sort(r.begin(), r.end());
    std::set<std::vector<std::size_t>> got{l, r};
    CHECK(got == std::set<std::vector<std::size_t>>{{0, 1}, {2, 3}});
  }
  SUBCASE("collinear triple") {
    const Tensor2 x = points({{0}, {1}, {2}});
    auto [l, r] = two_means_split(x, iota(3));
    std::sort(l.begin(), l.end());
    std::sort(r.begin(), r.end());
    std::set<std::vector<std::size_t>> got{l, r};
    CHECK(got == std::set<std::vector<std::size_t>>{{0, 1}, {2}});
  }
  SUBCASE("fewer than two members") {
    const Tensor2 x = points({{0}});
    CHECK(test::error_code_of([&] { two_means_split(x, iota(1)); }) == ErrorCode::TooFewMembers);
  }
}

TEST_CASE("bisecting_kmeans preconditions") {
  const Tensor2 x = test::random_tensor(4, 2, 1);
  CHECK(test::error_code_of([&] { bisecting_kmeans(x, 5); }) == ErrorCode::KTooLarge);
  CHECK(test::error_code_of([&] { bisecting_kmeans(x, 0); }) == ErrorCode::KTooLarge);
  CHECK(test::error_code_of([&] { bisecting_kmeans(Tensor2(0, 2), 1); }) == ErrorCode::EmptyInput);
}

TEST_CASE("property: total SSE never increases along the split trace") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Stream s(seed, {31});
    const std::size_t n = 5 + s.below(60);
    const Tensor2 x = test::random_tensor(n, 1 + s.below(4), seed);
    const int k = 1 + static_cast<int>(s.below(n));
    const auto a = bisecting_kmeans(x, k, seed);
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& e : a.split_trace) {
      CHECK(e.total_sse_after <= e.total_sse_before + 1e-9);
      CHECK(e.total_sse_before <= prev + 1e-9);
      prev = e.total_sse_after;
    }
    // Per-cluster SSE equals the brute-force sum over members.
    const auto members = a.members();
    for (int c = 0; c < a.k; ++c) CHECK(a.sse[c] == doctest::Approx(sse_of(x, members[c])).epsilon(1e-9));
  }
}

TEST_CASE("property: determinism and truncation along the split trace") {
  const Tensor2 x = test::random_tensor(80, 3, 9);
  const auto full = bisecting_kmeans(x, 40, 4);
  const auto again = bisecting_kmeans(x, 40, 4);
  CHECK(full.labels == again.labels);
  CHECK(bit_equal(full.centroids, again.centroids));
  for (int k : {1, 2, 7, 23, 40}) {
    const auto direct = bisecting_kmeans(x, k, 4);
    const auto cut = truncate_assignment(full, x, k);
    CHECK(direct.labels == cut.labels);
  }
}

TEST_CASE("link_clusters and expand_pairs on the three-record example") {
  // A-side clusters {U1, U2}, {U3}; B-side clusters {H1}, {H2, H3}.
  const Tensor2 xa = points({{0}, {0.1}, {5}});
  const Tensor2 xb = points({{0}, {5}, {5.1}});
  const auto a = assignment_from_labels(xa, {0, 0, 1}, 2);
  const auto b = assignment_from_labels(xb, {0, 1, 1}, 2);
  const auto co = diagonal(3);
  const auto links = link_clusters(a, b, co);
  CHECK(links.links() == std::vector<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 1}});

  const auto rows = iota(3);
  const auto labels = expand_pairs(links, a, b, rows, rows);
  const auto pos = labels.positives();
  const std::set<std::pair<std::size_t, std::size_t>> got(pos.begin(), pos.end());
  // The pairs named with the example must be present.
  for (auto p : std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}) {
    CHECK(got.count(p) == 1);
  }
  CHECK(got == brute_positives(a, b, co));
  CHECK(labels.num_diagonal() == 3);
  CHECK(labels.num_excluded() == 0);
}

TEST_CASE("singleton and single-cluster limits") {
  const Tensor2 x = test::random_tensor(6, 2, 2);
  const auto rows = iota(6);
  const auto co = diagonal(6);
  SUBCASE("singletons give the diagonal exactly") {
    const auto a = bisecting_kmeans(x, 6);
    const auto labels = expand_pairs(link_clusters(a, a, co), a, a, rows, rows);
    CHECK(labels.positives() == co);
  }
  SUBCASE("one cluster per side links everything") {
    const auto a = bisecting_kmeans(x, 1);
    const auto links = link_clusters(a, a, co);
    CHECK(links.count() == 1);
    CHECK(expand_pairs(links, a, a, rows, rows).num_positives() == 36);
  }
}

TEST_CASE("link matrix invariants") {
  const Tensor2 xa = test::random_tensor(40, 2, 3);
  const Tensor2 xb = test::random_tensor(40, 3, 4);
  const auto a = bisecting_kmeans(xa, 9);
  const auto b = bisecting_kmeans(xb, 6);
  const auto co = diagonal(40);
  const auto links = link_clusters(a, b, co);
  CHECK(links.count() <= co.size());
  for (int c = 0; c < a.k; ++c) {
    bool any = false;
    for (int d = 0; d < b.k; ++d) any = any || links.linked(c, d);
    CHECK(any);
  }
  const auto rows = iota(40);
  const auto labels = expand_pairs(links, a, b, rows, rows);
  for (auto [i, j] : labels.positives()) CHECK(links.linked(a.labels[i], b.labels[j]));
  std::vector<std::pair<std::size_t, std::size_t>> bad{{0, 41}};
  CHECK(test::error_code_of([&] { link_clusters(a, b, bad); }) == ErrorCode::UnassignedRow);
}

TEST_CASE("tenure conflicts move to the exclusion mask") {
  const auto schema = FeatureSchema::parse(
      "[TEN_H]\nside = A\nkind = categorical\nvocabulary = 1,3\nrole = tenure\nown_codes = 1\n\n"
      "[TEN_U]\nside = B\nkind = categorical\nvocabulary = 1,3\nrole = tenure\nown_codes = 1\n");
  MicrodataTable t(schema);
  // Rows 0, 1 own; row 2 rents; row 3 unknown.
  t.append_row({Cell(std::string("1")), Cell(std::string("1"))});
  t.append_row({Cell(std::string("1")), Cell(std::string("1"))});
  t.append_row({Cell(std::string("3")), Cell(std::string("3"))});
  t.append_row({Cell(std::monostate{}), Cell(std::monostate{})});
  const TenureMask mask(t);
  CHECK(mask.conflicts(2, 0));
  CHECK(mask.conflicts(0, 2));
  CHECK_FALSE(mask.conflicts(0, 1));
  CHECK_FALSE(mask.conflicts(3, 0));

  const Tensor2 x(4, 1, 0.0);
  const auto one = assignment_from_labels(x, {0, 0, 0, 0}, 1);
  const auto rows = iota(4);
  const auto links = link_clusters(one, one, diagonal(4));
  const auto masked = expand_pairs(links, one, one, rows, rows, &mask);
  CHECK(masked.num_excluded() == 4);  // (0,2), (1,2), (2,0), (2,1)
  CHECK(masked.num_positives() == 12);
  CHECK_FALSE(masked.is_positive(2, 0));
  CHECK(masked.is_excluded(2, 0));
  CHECK(masked.is_positive(3, 0));

  const auto unmasked = expand_pairs(links, one, one, rows, rows);
  CHECK(unmasked.num_excluded() == 0);
  CHECK(unmasked.num_positives() == 16);
  CHECK_FALSE(unmasked.is_excluded(2, 0));
}

TEST_CASE("property: positives shrink monotonically as k grows along one trace") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 60;
    const Tensor2 xa = test::random_tensor(n, 3, seed);
    const Tensor2 xb = test::random_tensor(n, 2, seed + 100);
    const auto fa = bisecting_kmeans(xa, static_cast<int>(n), seed);
    const auto fb = bisecting_kmeans(xb, static_cast<int>(n), seed);
    const auto rows = iota(n);
    const auto co = diagonal(n);
    std::set<std::pair<std::size_t, std::size_t>> prev;
    bool first = true;
    for (int k : {1, 2, 5, 10, 20, 40, 60}) {
      const auto a = truncate_assignment(fa, xa, k);
      const auto b = truncate_assignment(fb, xb, k);
      const auto pos = expand_pairs(link_clusters(a, b, co), a, b, rows, rows).positives();
      const std::set<std::pair<std::size_t, std::size_t>> cur(pos.begin(), pos.end());
      if (!first) CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
      prev = cur;
      first = false;
    }
    CHECK(prev == std::set<std::pair<std::size_t, std::size_t>>(co.begin(), co.end()));
  }
}

TEST_CASE("assignment CSV round trip and split log") {
  test::TempDir dir("assign");
  const Tensor2 x = test::random_tensor(20, 2, 8);
  const auto a = bisecting_kmeans(x, 5);
  std::vector<std::size_t> ids(20);
  for (std::size_t i = 0; i < 20; ++i) ids[i] = 100 + i;
  write_assignment_csv(a, ids, dir / "a.csv");
  const auto labels = read_assignment_csv(dir / "a.csv", ids);
  CHECK(labels == a.labels);
  const auto rebuilt = assignment_from_labels(x, labels, 5);
  CHECK(rebuilt.total_sse() == doctest::Approx(a.total_sse()).epsilon(1e-12));
  std::ostringstream log;
  write_split_trace(a, log);
  const std::string text = log.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
