#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualmatch/tensor.hpp"

namespace dualmatch {

/// Side A holds the household attributes, side B the housing-unit attributes.
enum class Side { A, B };
enum class ColumnKind { Numeric, Categorical };
enum class SpecialRole { None, Tenure };

const char* to_string(Side side);
const char* to_string(ColumnKind kind);

struct ColumnSpec {
  std::string name;
  Side side = Side::A;
  ColumnKind kind = ColumnKind::Numeric;
  /// Category codes in one-hot order. Empty with auto_vocabulary set means the
  /// vocabulary is inferred from the fitting rows in first-seen order.
  std::vector<std::string> vocabulary;
  bool auto_vocabulary = false;
  SpecialRole role = SpecialRole::None;
  /// Tenure columns only: codes meaning owner-occupied. Any other observed
  /// code is read as renter.
  std::vector<std::string> own_codes;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<ColumnSpec> columns);

  /// Parses the INI schema format: one section per column, in column order.
  ///
  ///   [TEN_H]
  ///   side = A              ; A | B | household | unit
  ///   kind = categorical    ; numeric | categorical
  ///   vocabulary = 1,2,3,4  ; or "auto"
  ///   role = tenure         ; none | tenure
  ///   own_codes = 1,2
  static FeatureSchema load(const std::filesystem::path& path);
  static FeatureSchema parse(const std::string& text);
  std::string to_ini() const;

  /// Throws BadSchema if names repeat, a fixed vocabulary is empty or has
  /// duplicates, or (with tenure masking) a side lacks exactly one tenure column.
  void validate(bool tenure_masking = false) const;

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  const ColumnSpec& operator[](std::size_t i) const { return columns_[i]; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  std::vector<std::size_t> columns_on(Side side) const;
  std::optional<std::size_t> tenure_column(Side side) const;
  bool has_tenure_pair() const;

  /// Schema restricted to one side, column order preserved.
  FeatureSchema side_subset(Side side) const;

 private:
  std::vector<ColumnSpec> columns_;
};

/// A raw cell: missing, a number, or a category code.
using Cell = std::variant<std::monostate, double, std::string>;

/// Row-aligned table of co-occurring records; row i holds the household and
/// the housing unit of record i. Row ids are dense from 0.
class MicrodataTable {
 public:
  MicrodataTable() = default;
  explicit MicrodataTable(FeatureSchema schema);

  const FeatureSchema& schema() const { return schema_; }
  std::size_t num_rows() const { return num_rows_; }
  std::vector<std::size_t> all_rows() const;

  /// Appends a record with one cell per schema column. A double in a
  /// categorical column is stored as its shortest text form.
  void append_row(const std::vector<Cell>& cells);

  Cell cell(std::size_t row, std::size_t col) const;
  std::optional<double> numeric(std::size_t row, std::size_t col) const;
  const std::optional<std::string>& code(std::size_t row, std::size_t col) const;

  /// Joins two row-aligned tables with disjoint columns.
  static MicrodataTable hconcat(const MicrodataTable& left, const MicrodataTable& right);

 private:
  struct Column {
    std::vector<double> numbers;  // NaN = missing
    std::vector<std::optional<std::string>> codes;
  };

  FeatureSchema schema_;
  std::vector<Column> columns_;
  std::size_t num_rows_ = 0;
};

struct CsvOptions {
  char delimiter = ',';
  /// Strict mode rejects unparseable numeric cells with a TypeError naming
  /// the row and column; lenient mode reads them as missing.
  bool strict = false;
};

/// Loads a CSV whose header contains every schema column (any order; extra
/// columns are ignored). Empty cells are missing.
MicrodataTable load_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                        const CsvOptions& options = {});

/// Loads a household CSV and a housing-unit CSV that are row-aligned.
MicrodataTable load_csv_pair(const std::filesystem::path& path_a, const std::filesystem::path& path_b,
                             const FeatureSchema& schema, const CsvOptions& options = {});

void write_csv(const MicrodataTable& table, const std::filesystem::path& path,
               std::optional<Side> side = std::nullopt);

struct ColumnStats {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  Side side = Side::A;
  double mean = 0.0;
  double stddev = 0.0;
  /// Set when every fitting cell of a numeric column was missing.
  bool all_missing = false;
  std::vector<std::string> vocabulary;

  std::optional<std::size_t> category_index(const std::string& code) const;
  void rebuild_index();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

struct EncodingStats {
  std::vector<ColumnStats> columns;
  std::size_t fitted_rows = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static EncodingStats from_json(const nlohmann::json& j);
};

/// Population mean/std per numeric column over the non-missing cells of
/// `rows`; vocabulary per categorical column (declared or inferred).
EncodingStats fit_stats(const MicrodataTable& table, std::span<const std::size_t> rows);

struct FeatureName {
  std::size_t source_column = 0;
  std::string column;
  std::optional<std::string> category;

  std::string label() const;
};

struct EncodedMatrix {
  Tensor2 values;
  std::vector<FeatureName> feature_names;
  std::vector<std::size_t> row_ids;
  std::size_t unseen_categories = 0;

  std::size_t num_rows() const { return values.rows(); }
  std::size_t num_features() const { return values.cols(); }

  /// Groups of output columns that share a source column (one-hot blocks).
  std::vector<std::vector<std::size_t>> feature_groups() const;

  void write_csv(const std::filesystem::path& path) const;
};

/// z-scores numeric cells (std 0 maps to 0, missing maps to 0) and one-hot
/// encodes categorical cells (missing or unseen maps to an all-zero block).
/// With `side` set only that side's columns are emitted.
EncodedMatrix encode(const MicrodataTable& table, const EncodingStats& stats,
                     std::span<const std::size_t> rows, std::optional<Side> side = std::nullopt);

struct SplitFractions {
  double train = 0.8;
  double val = 0.16;
  double test = 0.04;
};

struct RowSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Deterministic partition into train/val/test. Part sizes use largest-
/// remainder rounding of the fractions; with `stratify_by`, every category's
/// count in every part is within one row of its proportional target.
RowSplit split(const MicrodataTable& table, const SplitFractions& fractions, std::uint64_t seed,
               const std::optional<std::string>& stratify_by = std::nullopt);

struct ColumnSummary {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::size_t present = 0;
  std::size_t missing = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<std::pair<std::string, std::size_t>> frequencies;
};

struct TableSummary {
  std::size_t rows = 0;
  std::vector<ColumnSummary> columns;

  nlohmann::json to_json() const;
  void write_csv(std::ostream& out) const;
};

TableSummary describe(const MicrodataTable& table);

}  // namespace dualmatch
