#include "dualmatch/synthgen.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <tuple>

#include "dualmatch/csv.hpp"
#include "dualmatch/errors.hpp"
#include "dualmatch/rng.hpp"

namespace dualmatch {

std::array<double, 3> oracle_y(int c, double n1, double n2) {
  if (c < 1 || c > 5) throw Error(ErrorCode::DomainError, "category must be in 1..5, got " + std::to_string(c));
  if (!(n1 >= 0.0 && n1 <= 1.0) || !(n2 >= 0.0 && n2 <= 1.0)) {
    throw Error(ErrorCode::DomainError, "n1 and n2 must lie in [0, 1]");
  }
  const double cn = static_cast<double>(c) / 5.0;
  return {std::sin(std::numbers::pi * (0.5 * n1 + 0.3 * n2 + 0.2 * cn)),
          std::exp(0.4 * n1 + 0.4 * n2 + 0.2 * cn),
          std::tanh(0.3 * n1 + 0.3 * n2 + 0.4 * cn)};
}

std::vector<SyntheticRecord> generate_synthetic(std::size_t n, std::uint64_t seed) {
  std::vector<SyntheticRecord> out;
  out.reserve(n);
  std::set<std::tuple<int, double, double>> seen;
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticRecord rec;
    rec.c = static_cast<int>(i % 5) + 1;
    Stream rng(seed, {0x5e7, i});
    do {
      rec.n1 = rng.uniform();
      rec.n2 = rng.uniform();
    } while (!seen.emplace(rec.c, rec.n1, rec.n2).second);
    const auto y = oracle_y(rec.c, rec.n1, rec.n2);
    rec.y1 = y[0];
    rec.y2 = y[1];
    rec.y3 = y[2];
    out.push_back(rec);
  }
  return out;
}

GroundTruthMatrix::GroundTruthMatrix(std::size_t rows, std::size_t cols, double tau)
    : rows_(rows), cols_(cols), tau_(tau), bits_(rows * cols, 0) {}

std::size_t GroundTruthMatrix::count_positive() const {
  std::size_t n = 0;
  for (auto b : bits_) n += b;
  return n;
}

GroundTruthMatrix build_gt_matrix(std::span<const SyntheticRecord> x_rows,
                                  std::span<const SyntheticRecord> y_rows, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::DomainError, "tau must be positive");
  GroundTruthMatrix gt(x_rows.size(), y_rows.size(), tau);
  for (std::size_t i = 0; i < x_rows.size(); ++i) {
    const auto f = oracle_y(x_rows[i].c, x_rows[i].n1, x_rows[i].n2);
    for (std::size_t j = 0; j < y_rows.size(); ++j) {
      const auto y = y_rows[j].y();
      double dist = 0.0;
      for (int k = 0; k < 3; ++k) dist = std::max(dist, std::abs(y[k] - f[k]));
      gt.set(i, j, dist <= tau);
    }
  }
  return gt;
}

FeatureSchema synthetic_schema() {
  std::vector<ColumnSpec> cols;
  ColumnSpec c;
  c.name = "c";
  c.side = Side::A;
  c.kind = ColumnKind::Categorical;
  c.vocabulary = {"1", "2", "3", "4", "5"};
  cols.push_back(c);
  for (const char* name : {"n1", "n2"}) {
    ColumnSpec s;
    s.name = name;
    s.side = Side::A;
    cols.push_back(s);
  }
  for (const char* name : {"y1", "y2", "y3"}) {
    ColumnSpec s;
    s.name = name;
    s.side = Side::B;
    cols.push_back(s);
  }
  return FeatureSchema(std::move(cols));
}

MicrodataTable synthetic_table(std::span<const SyntheticRecord> records) {
  MicrodataTable table(synthetic_schema());
  for (const auto& r : records) {
    table.append_row({std::to_string(r.c), r.n1, r.n2, r.y1, r.y2, r.y3});
  }
  return table;
}

std::vector<SyntheticRecord> records_from_table(const MicrodataTable& table) {
  const auto& schema = table.schema();
  const std::size_t c = schema.index_of("c"), n1 = schema.index_of("n1"), n2 = schema.index_of("n2");
  const std::size_t y1 = schema.index_of("y1"), y2 = schema.index_of("y2"), y3 = schema.index_of("y3");
  std::vector<SyntheticRecord> out;
  out.reserve(table.num_rows());
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    SyntheticRecord rec;
    const auto& code = table.code(r, c);
    if (!code) throw Error(ErrorCode::DomainError, "synthetic row " + std::to_string(r) + " lacks c");
    rec.c = std::stoi(*code);
    auto get = [&](std::size_t col) {
      auto v = table.numeric(r, col);
      if (!v) throw Error(ErrorCode::DomainError, "synthetic row " + std::to_string(r) + " has a missing value");
      return *v;
    };
    rec.n1 = get(n1);
    rec.n2 = get(n2);
    rec.y1 = get(y1);
    rec.y2 = get(y2);
    rec.y3 = get(y3);
    out.push_back(rec);
  }
  return out;
}

void write_synthetic_dataset(const std::filesystem::path& dir, std::span<const SyntheticRecord> records,
                             std::uint64_t seed, double tau) {
  std::filesystem::create_directories(dir);
  const MicrodataTable table = synthetic_table(records);
  write_csv(table, dir / "X.csv", Side::A);
  write_csv(table, dir / "Y.csv", Side::B);

  // Sweep per X row over Y rows; the full matrix is never materialized.
  std::ofstream gt(dir / "gt_pairs.csv");
  if (!gt) throw Error(ErrorCode::IoError, "cannot write " + (dir / "gt_pairs.csv").string());
  gt << "i,j\n";
  std::size_t positives = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const GroundTruthMatrix row = build_gt_matrix(records.subspan(i, 1), records, tau);
    for (std::size_t j = 0; j < records.size(); ++j) {
      if (row(0, j)) {
        gt << i << ',' << j << '\n';
        ++positives;
      }
    }
  }

  nlohmann::json meta{{"format_version", 1}, {"kind", "synthetic"}, {"seed", seed},
                      {"n", records.size()}, {"tau", tau},       {"positives", positives}};
  std::ofstream m(dir / "meta.json");
  m << meta.dump(2) << '\n';
}

bool is_synthetic_dataset(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir / "meta.json") && std::filesystem::exists(dir / "X.csv") &&
         std::filesystem::exists(dir / "Y.csv");
}

SyntheticDataset read_synthetic_dataset(const std::filesystem::path& dir) {
  if (!is_synthetic_dataset(dir)) {
    throw Error(ErrorCode::IoError, dir.string() + " is not a synthetic dataset (needs meta.json, X.csv, Y.csv)");
  }
  std::ifstream m(dir / "meta.json");
  nlohmann::json meta;
  try {
    m >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, (dir / "meta.json").string() + ": " + e.what());
  }
  SyntheticDataset ds;
  ds.seed = meta.value("seed", std::uint64_t{0});
  ds.tau = meta.value("tau", 0.05);
  const MicrodataTable table = load_csv_pair(dir / "X.csv", dir / "Y.csv", synthetic_schema());
  ds.records = records_from_table(table);
  return ds;
}

}  // namespace dualmatch
