#include "dualmatch/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dualmatch/csv.hpp"
#include "dualmatch/errors.hpp"
#include "dualmatch/rng.hpp"

namespace dualmatch {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(","));
  std::vector<std::string> out;
  for (auto& p : parts) {
    boost::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

std::string lower(std::string s) {
  boost::to_lower(s);
  return s;
}

Side parse_side(const std::string& text, const std::string& column) {
  const std::string s = lower(text);
  if (s == "a" || s == "household") return Side::A;
  if (s == "b" || s == "unit" || s == "housing" || s == "housing_unit") return Side::B;
  throw Error(ErrorCode::BadSchema, "column " + column + ": unknown side '" + text + "'");
}

ColumnKind parse_kind(const std::string& text, const std::string& column) {
  const std::string s = lower(text);
  if (s == "numeric") return ColumnKind::Numeric;
  if (s == "categorical") return ColumnKind::Categorical;
  throw Error(ErrorCode::BadSchema, "column " + column + ": unknown kind '" + text + "'");
}

SpecialRole parse_role(const std::string& text, const std::string& column) {
  const std::string s = lower(text);
  if (s.empty() || s == "none") return SpecialRole::None;
  if (s == "tenure") return SpecialRole::Tenure;
  throw Error(ErrorCode::BadSchema, "column " + column + ": unknown role '" + text + "'");
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

std::string trimmed(std::string s) {
  boost::trim(s);
  return s;
}

}  // namespace

const char* to_string(Side side) {
  return side == Side::A ? "A" : "B";
}

const char* to_string(ColumnKind kind) {
  return kind == ColumnKind::Numeric ? "numeric" : "categorical";
}

// ---------------------------------------------------------------------------
// FeatureSchema

FeatureSchema::FeatureSchema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open schema " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

FeatureSchema FeatureSchema::parse(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::BadSchema, e.what());
  }
  std::vector<ColumnSpec> columns;
  for (const auto& [name, section] : tree) {
    if (section.empty()) {
      throw Error(ErrorCode::BadSchema, "top-level key '" + name + "' outside a column section");
    }
    ColumnSpec spec;
    spec.name = name;
    spec.side = parse_side(section.get<std::string>("side", ""), name);
    spec.kind = parse_kind(section.get<std::string>("kind", "numeric"), name);
    spec.role = parse_role(section.get<std::string>("role", "none"), name);
    const std::string vocab = trimmed(section.get<std::string>("vocabulary", ""));
    if (spec.kind == ColumnKind::Categorical) {
      if (lower(vocab) == "auto" || vocab.empty()) {
        spec.auto_vocabulary = true;
      } else {
        spec.vocabulary = split_list(vocab);
      }
    }
    if (spec.role == SpecialRole::Tenure) {
      spec.own_codes = split_list(section.get<std::string>("own_codes", "1,2"));
    }
    columns.push_back(std::move(spec));
  }
  FeatureSchema schema(std::move(columns));
  schema.validate(false);
  return schema;
}

std::string FeatureSchema::to_ini() const {
  std::ostringstream out;
  for (const auto& c : columns_) {
    out << "[" << c.name << "]\n";
    out << "side = " << to_string(c.side) << "\n";
    out << "kind = " << to_string(c.kind) << "\n";
    if (c.kind == ColumnKind::Categorical) {
      out << "vocabulary = " << (c.auto_vocabulary ? std::string("auto") : join(c.vocabulary)) << "\n";
    }
    if (c.role == SpecialRole::Tenure) {
      out << "role = tenure\n";
      out << "own_codes = " << join(c.own_codes) << "\n";
    }
    out << "\n";
  }
  return out.str();
}

void FeatureSchema::validate(bool tenure_masking) const {
  std::set<std::string> names;
  for (const auto& c : columns_) {
    if (c.name.empty()) throw Error(ErrorCode::BadSchema, "empty column name");
    if (!names.insert(c.name).second) {
      throw Error(ErrorCode::BadSchema, "duplicate column name " + c.name);
    }
    if (c.kind == ColumnKind::Categorical && !c.auto_vocabulary) {
      if (c.vocabulary.empty()) {
        throw Error(ErrorCode::BadSchema, "column " + c.name + " has an empty vocabulary");
      }
      std::set<std::string> seen(c.vocabulary.begin(), c.vocabulary.end());
      if (seen.size() != c.vocabulary.size()) {
        throw Error(ErrorCode::BadSchema, "column " + c.name + " has duplicate categories");
      }
    }
    if (c.role == SpecialRole::Tenure && c.kind != ColumnKind::Categorical) {
      throw Error(ErrorCode::BadSchema, "tenure column " + c.name + " must be categorical");
    }
  }
  if (tenure_masking) {
    for (Side side : {Side::A, Side::B}) {
      std::size_t count = 0;
      for (const auto& c : columns_) count += (c.side == side && c.role == SpecialRole::Tenure);
      if (count != 1) {
        throw Error(ErrorCode::BadSchema, std::string("side ") + to_string(side) +
                                              " needs exactly one tenure column, found " +
                                              std::to_string(count));
      }
    }
  }
}

std::optional<std::size_t> FeatureSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t FeatureSchema::index_of(std::string_view name) const {
  auto idx = find(name);
  if (!idx) throw Error(ErrorCode::MissingColumn, "schema has no column " + std::string(name));
  return *idx;
}

std::vector<std::size_t> FeatureSchema::columns_on(Side side) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].side == side) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> FeatureSchema::tenure_column(Side side) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].side == side && columns_[i].role == SpecialRole::Tenure) return i;
  }
  return std::nullopt;
}

bool FeatureSchema::has_tenure_pair() const {
  return tenure_column(Side::A) && tenure_column(Side::B);
}

FeatureSchema FeatureSchema::side_subset(Side side) const {
  std::vector<ColumnSpec> cols;
  for (const auto& c : columns_) {
    if (c.side == side) cols.push_back(c);
  }
  return FeatureSchema(std::move(cols));
}

// ---------------------------------------------------------------------------
// MicrodataTable

MicrodataTable::MicrodataTable(FeatureSchema schema)
    : schema_(std::move(schema)), columns_(schema_.size()) {}

std::vector<std::size_t> MicrodataTable::all_rows() const {
  std::vector<std::size_t> rows(num_rows_);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

void MicrodataTable::append_row(const std::vector<Cell>& cells) {
  if (cells.size() != schema_.size()) {
    throw Error(ErrorCode::SchemaMismatch, "row has " + std::to_string(cells.size()) +
                                               " cells, schema has " + std::to_string(schema_.size()));
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    Column& col = columns_[c];
    if (schema_[c].kind == ColumnKind::Numeric) {
      double value = kNaN;
      if (const double* d = std::get_if<double>(&cells[c])) {
        value = *d;
      } else if (const std::string* s = std::get_if<std::string>(&cells[c])) {
        value = csv::parse_double(*s).value_or(kNaN);
      }
      col.numbers.push_back(value);
    } else {
      std::optional<std::string> code;
      if (const double* d = std::get_if<double>(&cells[c])) {
        code = csv::format_double(*d);
      } else if (const std::string* s = std::get_if<std::string>(&cells[c])) {
        code = *s;
      }
      col.codes.push_back(std::move(code));
    }
  }
  ++num_rows_;
}

Cell MicrodataTable::cell(std::size_t row, std::size_t col) const {
  if (schema_[col].kind == ColumnKind::Numeric) {
    const double v = columns_[col].numbers.at(row);
    if (std::isnan(v)) return std::monostate{};
    return v;
  }
  const auto& code = columns_[col].codes.at(row);
  if (!code) return std::monostate{};
  return *code;
}

std::optional<double> MicrodataTable::numeric(std::size_t row, std::size_t col) const {
  const double v = columns_[col].numbers.at(row);
  if (std::isnan(v)) return std::nullopt;
  return v;
}

const std::optional<std::string>& MicrodataTable::code(std::size_t row, std::size_t col) const {
  return columns_[col].codes.at(row);
}

MicrodataTable MicrodataTable::hconcat(const MicrodataTable& left, const MicrodataTable& right) {
  if (left.num_rows() != right.num_rows()) {
    throw Error(ErrorCode::SchemaMismatch, "row-aligned tables differ in length: " +
                                               std::to_string(left.num_rows()) + " vs " +
                                               std::to_string(right.num_rows()));
  }
  std::vector<ColumnSpec> cols = left.schema().columns();
  cols.insert(cols.end(), right.schema().columns().begin(), right.schema().columns().end());
  MicrodataTable out{FeatureSchema(std::move(cols))};
  out.schema_.validate(false);
  out.columns_ = left.columns_;
  out.columns_.insert(out.columns_.end(), right.columns_.begin(), right.columns_.end());
  out.num_rows_ = left.num_rows();
  return out;
}

// ---------------------------------------------------------------------------
// CSV IO

MicrodataTable load_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                        const CsvOptions& options) {
  auto records = csv::read_file(path, options.delimiter);
  if (records.empty()) throw Error(ErrorCode::MissingColumn, path.string() + " has no header row");
  const auto& header = records.front();
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) position.emplace(trimmed(header[i]), i);

  std::vector<std::size_t> source(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = position.find(schema[c].name);
    if (it == position.end()) {
      throw Error(ErrorCode::MissingColumn, path.string() + " lacks column " + schema[c].name);
    }
    source[c] = it->second;
  }

  MicrodataTable table(schema);
  std::vector<Cell> cells(schema.size());
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const std::string raw = source[c] < rec.size() ? trimmed(rec[source[c]]) : std::string();
      if (raw.empty()) {
        cells[c] = std::monostate{};
      } else if (schema[c].kind == ColumnKind::Numeric) {
        auto value = csv::parse_double(raw);
        if (!value && options.strict) {
          throw Error(ErrorCode::TypeError, path.string() + ": row " + std::to_string(r - 1) +
                                                ", column " + schema[c].name + ": cannot parse '" +
                                                raw + "' as a number");
        }
        cells[c] = value ? Cell{*value} : Cell{std::monostate{}};
      } else {
        cells[c] = raw;
      }
    }
    table.append_row(cells);
  }
  return table;
}

MicrodataTable load_csv_pair(const std::filesystem::path& path_a, const std::filesystem::path& path_b,
                             const FeatureSchema& schema, const CsvOptions& options) {
  MicrodataTable a = load_csv(path_a, schema.side_subset(Side::A), options);
  MicrodataTable b = load_csv(path_b, schema.side_subset(Side::B), options);
  return MicrodataTable::hconcat(a, b);
}

void write_csv(const MicrodataTable& table, const std::filesystem::path& path,
               std::optional<Side> side) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < table.schema().size(); ++c) {
    if (!side || table.schema()[c].side == *side) cols.push_back(c);
  }
  std::vector<std::string> fields;
  for (std::size_t c : cols) fields.push_back(table.schema()[c].name);
  csv::write_row(out, fields);
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    fields.clear();
    for (std::size_t c : cols) {
      const Cell cell = table.cell(r, c);
      if (const double* d = std::get_if<double>(&cell)) {
        fields.push_back(csv::format_double(*d));
      } else if (const std::string* s = std::get_if<std::string>(&cell)) {
        fields.push_back(*s);
      } else {
        fields.emplace_back();
      }
    }
    csv::write_row(out, fields);
  }
}

// ---------------------------------------------------------------------------
// Encoding

std::optional<std::size_t> ColumnStats::category_index(const std::string& code) const {
  auto it = index_.find(code);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void ColumnStats::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < vocabulary.size(); ++i) index_.emplace(vocabulary[i], i);
}

nlohmann::json EncodingStats::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    cols.push_back({{"name", c.name},
                    {"kind", to_string(c.kind)},
                    {"side", to_string(c.side)},
                    {"mean", c.mean},
                    {"stddev", c.stddev},
                    {"all_missing", c.all_missing},
                    {"vocabulary", c.vocabulary}});
  }
  return {{"format_version", 1}, {"fitted_rows", fitted_rows}, {"warnings", warnings}, {"columns", cols}};
}

EncodingStats EncodingStats::from_json(const nlohmann::json& j) {
  EncodingStats stats;
  stats.fitted_rows = j.at("fitted_rows").get<std::size_t>();
  stats.warnings = j.value("warnings", std::vector<std::string>{});
  for (const auto& c : j.at("columns")) {
    ColumnStats cs;
    cs.name = c.at("name").get<std::string>();
    cs.kind = c.at("kind").get<std::string>() == "numeric" ? ColumnKind::Numeric : ColumnKind::Categorical;
    cs.side = c.at("side").get<std::string>() == "A" ? Side::A : Side::B;
    cs.mean = c.at("mean").get<double>();
    cs.stddev = c.at("stddev").get<double>();
    cs.all_missing = c.at("all_missing").get<bool>();
    cs.vocabulary = c.at("vocabulary").get<std::vector<std::string>>();
    cs.rebuild_index();
    stats.columns.push_back(std::move(cs));
  }
  return stats;
}

EncodingStats fit_stats(const MicrodataTable& table, std::span<const std::size_t> rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptySubset, "fit_stats needs at least one row");
  const FeatureSchema& schema = table.schema();
  EncodingStats stats;
  stats.fitted_rows = rows.size();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const ColumnSpec& spec = schema[c];
    ColumnStats cs;
    cs.name = spec.name;
    cs.kind = spec.kind;
    cs.side = spec.side;
    if (spec.kind == ColumnKind::Numeric) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t r : rows) {
        if (auto v = table.numeric(r, c)) {
          sum += *v;
          ++count;
        }
      }
      if (count == 0) {
        cs.all_missing = true;
        stats.warnings.push_back("column " + spec.name + " has no values in the fitting rows");
      } else {
        cs.mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (std::size_t r : rows) {
          if (auto v = table.numeric(r, c)) ss += (*v - cs.mean) * (*v - cs.mean);
        }
        cs.stddev = std::sqrt(ss / static_cast<double>(count));
      }
    } else if (spec.auto_vocabulary) {
      std::set<std::string> seen;
      for (std::size_t r : rows) {
        const auto& code = table.code(r, c);
        if (code && seen.insert(*code).second) cs.vocabulary.push_back(*code);
      }
      if (cs.vocabulary.empty()) {
        stats.warnings.push_back("column " + spec.name + " has no categories in the fitting rows");
      }
    } else {
      cs.vocabulary = spec.vocabulary;
    }
    cs.rebuild_index();
    stats.columns.push_back(std::move(cs));
  }
  return stats;
}

std::string FeatureName::label() const {
  return category ? column + "=" + *category : column;
}

std::vector<std::vector<std::size_t>> EncodedMatrix::feature_groups() const {
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t j = 0; j < feature_names.size(); ++j) {
    if (groups.empty() || feature_names[groups.back().front()].source_column != feature_names[j].source_column) {
      groups.emplace_back();
    }
    groups.back().push_back(j);
  }
  return groups;
}

void EncodedMatrix::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  std::vector<std::string> fields{"row_id"};
  for (const auto& f : feature_names) fields.push_back(f.label());
  csv::write_row(out, fields);
  for (std::size_t i = 0; i < values.rows(); ++i) {
    fields.assign(1, std::to_string(row_ids[i]));
    for (double v : values.row(i)) fields.push_back(csv::format_double(v));
    csv::write_row(out, fields);
  }
}

EncodedMatrix encode(const MicrodataTable& table, const EncodingStats& stats,
                     std::span<const std::size_t> rows, std::optional<Side> side) {
  const FeatureSchema& schema = table.schema();
  if (stats.columns.size() != schema.size()) {
    throw Error(ErrorCode::SchemaMismatch, "stats describe " + std::to_string(stats.columns.size()) +
                                               " columns, table has " + std::to_string(schema.size()));
  }
  EncodedMatrix out;
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const ColumnStats& cs = stats.columns[c];
    if (cs.name != schema[c].name || cs.kind != schema[c].kind) {
      throw Error(ErrorCode::SchemaMismatch, "stats column " + cs.name + " does not match " + schema[c].name);
    }
    if (side && schema[c].side != *side) continue;
    cols.push_back(c);
    if (cs.kind == ColumnKind::Numeric) {
      out.feature_names.push_back({c, cs.name, std::nullopt});
    } else {
      for (const auto& cat : cs.vocabulary) out.feature_names.push_back({c, cs.name, cat});
    }
  }

  out.values = Tensor2(rows.size(), out.feature_names.size());
  out.row_ids.assign(rows.begin(), rows.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= table.num_rows()) throw Error(ErrorCode::SchemaMismatch, "row id out of range");
    auto dst = out.values.row(i);
    std::size_t j = 0;
    for (std::size_t c : cols) {
      const ColumnStats& cs = stats.columns[c];
      if (cs.kind == ColumnKind::Numeric) {
        auto v = table.numeric(r, c);
        dst[j++] = (v && cs.stddev > 0.0) ? (*v - cs.mean) / cs.stddev : 0.0;
      } else {
        const auto& code = table.code(r, c);
        if (code) {
          if (auto idx = cs.category_index(*code)) {
            dst[j + *idx] = 1.0;
          } else {
            ++out.unseen_categories;
          }
        }
        j += cs.vocabulary.size();
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split

namespace {

std::array<std::size_t, 3> largest_remainder(std::size_t n, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int p = 0; p < 3; ++p) {
    const double target = static_cast<double>(n) * fractions[p];
    sizes[p] = static_cast<std::size_t>(std::floor(target + 1e-9));
    rem[p] = target - static_cast<double>(sizes[p]);
    assigned += sizes[p];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return rem[x] > rem[y]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[order[i % 3]];
  return sizes;
}

// Chooses which (group, part) cells receive one extra row so that every group
// and every part reaches its size. Cells with larger fractional targets are
// preferred; a BFS over alternating paths completes the assignment.
std::vector<std::array<int, 3>> round_cells(const std::vector<std::array<double, 3>>& remainders,
                                            std::vector<int> group_need, std::array<int, 3> part_need) {
  const std::size_t groups = remainders.size();
  std::vector<std::array<int, 3>> extra(groups, {0, 0, 0});

  struct CellRef {
    double rem;
    std::size_t g;
    int p;
  };
  std::vector<CellRef> cells;
  for (std::size_t g = 0; g < groups; ++g) {
    for (int p = 0; p < 3; ++p) cells.push_back({remainders[g][p], g, p});
  }
  std::stable_sort(cells.begin(), cells.end(), [](const CellRef& a, const CellRef& b) { return a.rem > b.rem; });
  for (const auto& cell : cells) {
    if (group_need[cell.g] > 0 && part_need[cell.p] > 0) {
      extra[cell.g][cell.p] = 1;
      --group_need[cell.g];
      --part_need[cell.p];
    }
  }

  // Augment along group -> (unused cell) -> part -> (used cell) -> group paths.
  for (std::size_t start = 0; start < groups; ++start) {
    while (group_need[start] > 0) {
      std::vector<int> prev_part_of_group(groups, -2);  // part we arrived from
      std::array<long, 3> prev_group_of_part{-1, -1, -1};
      std::queue<std::size_t> queue;
      prev_part_of_group[start] = -1;
      queue.push(start);
      int found_part = -1;
      while (!queue.empty() && found_part < 0) {
        const std::size_t g = queue.front();
        queue.pop();
        for (int p = 0; p < 3 && found_part < 0; ++p) {
          if (extra[g][p] || prev_group_of_part[p] >= 0) continue;
          prev_group_of_part[p] = static_cast<long>(g);
          if (part_need[p] > 0) {
            found_part = p;
            break;
          }
          for (std::size_t g2 = 0; g2 < groups; ++g2) {
            if (extra[g2][p] && prev_part_of_group[g2] == -2) {
              prev_part_of_group[g2] = p;
              queue.push(g2);
            }
          }
        }
      }
      if (found_part < 0) throw Error(ErrorCode::Internal, "stratified rounding found no assignment");
      --part_need[found_part];
      --group_need[start];
      int p = found_part;
      while (true) {
        const std::size_t g = static_cast<std::size_t>(prev_group_of_part[p]);
        extra[g][p] = 1;
        const int back = prev_part_of_group[g];
        if (back < 0) break;
        extra[g][back] = 0;
        p = back;
      }
    }
  }
  return extra;
}

}  // namespace

RowSplit split(const MicrodataTable& table, const SplitFractions& fractions, std::uint64_t seed,
               const std::optional<std::string>& stratify_by) {
  const std::array<double, 3> f{fractions.train, fractions.val, fractions.test};
  for (double x : f) {
    if (!(x >= 0.0) || x > 1.0) throw Error(ErrorCode::BadFractions, "fractions must lie in [0,1]");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
    throw Error(ErrorCode::BadFractions, "fractions must sum to 1");
  }
  const std::size_t n = table.num_rows();
  const auto sizes = largest_remainder(n, f);

  // Groups in order of first appearance; missing codes form their own group.
  std::vector<std::vector<std::size_t>> groups;
  if (stratify_by) {
    const std::size_t col = table.schema().index_of(*stratify_by);
    if (table.schema()[col].kind != ColumnKind::Categorical) {
      throw Error(ErrorCode::BadFractions, "stratify column " + *stratify_by + " must be categorical");
    }
    std::map<std::optional<std::string>, std::size_t> group_of;
    for (std::size_t r = 0; r < n; ++r) {
      auto [it, inserted] = group_of.emplace(table.code(r, col), groups.size());
      if (inserted) groups.emplace_back();
      groups[it->second].push_back(r);
    }
  } else {
    groups.push_back(table.all_rows());
  }

  std::vector<std::array<std::size_t, 3>> counts(groups.size());
  if (groups.size() == 1) {
    counts[0] = sizes;
  } else {
    std::vector<std::array<double, 3>> rem(groups.size());
    std::vector<int> group_need(groups.size());
    std::array<int, 3> part_need{static_cast<int>(sizes[0]), static_cast<int>(sizes[1]),
                                 static_cast<int>(sizes[2])};
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double ng = static_cast<double>(groups[g].size());
      std::size_t floor_sum = 0;
      for (int p = 0; p < 3; ++p) {
        const double target = ng * f[p];
        counts[g][p] = static_cast<std::size_t>(std::floor(target + 1e-9));
        rem[g][p] = target - static_cast<double>(counts[g][p]);
        floor_sum += counts[g][p];
        part_need[p] -= static_cast<int>(counts[g][p]);
      }
      group_need[g] = static_cast<int>(groups[g].size() - floor_sum);
    }
    const auto extra = round_cells(rem, group_need, part_need);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (int p = 0; p < 3; ++p) counts[g][p] += static_cast<std::size_t>(extra[g][p]);
    }
  }

  RowSplit out;
  std::array<std::vector<std::size_t>*, 3> parts{&out.train, &out.val, &out.test};
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto rows = groups[g];
    Stream rng(seed, {0x5117, g});
    rng.shuffle(std::span<std::size_t>(rows));
    std::size_t pos = 0;
    for (int p = 0; p < 3; ++p) {
      parts[p]->insert(parts[p]->end(), rows.begin() + pos, rows.begin() + pos + counts[g][p]);
      pos += counts[g][p];
    }
  }
  for (auto* part : parts) std::sort(part->begin(), part->end());
  return out;
}

// ---------------------------------------------------------------------------
// Describe

TableSummary describe(const MicrodataTable& table) {
  TableSummary summary;
  summary.rows = table.num_rows();
  if (table.num_rows() == 0) return summary;
  const FeatureSchema& schema = table.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    ColumnSummary cs;
    cs.name = schema[c].name;
    cs.kind = schema[c].kind;
    if (cs.kind == ColumnKind::Numeric) {
      double sum = 0.0;
      cs.min = std::numeric_limits<double>::infinity();
      cs.max = -std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < table.num_rows(); ++r) {
        if (auto v = table.numeric(r, c)) {
          ++cs.present;
          sum += *v;
          cs.min = std::min(cs.min, *v);
          cs.max = std::max(cs.max, *v);
        } else {
          ++cs.missing;
        }
      }
      if (cs.present > 0) {
        cs.mean = sum / static_cast<double>(cs.present);
        double ss = 0.0;
        for (std::size_t r = 0; r < table.num_rows(); ++r) {
          if (auto v = table.numeric(r, c)) ss += (*v - cs.mean) * (*v - cs.mean);
        }
        cs.stddev = std::sqrt(ss / static_cast<double>(cs.present));
      } else {
        cs.min = cs.max = 0.0;
      }
    } else {
      std::map<std::string, std::size_t> slot;
      for (const auto& v : schema[c].vocabulary) {
        slot.emplace(v, cs.frequencies.size());
        cs.frequencies.emplace_back(v, 0);
      }
      for (std::size_t r = 0; r < table.num_rows(); ++r) {
        const auto& code = table.code(r, c);
        if (!code) {
          ++cs.missing;
          continue;
        }
        ++cs.present;
        auto [it, inserted] = slot.emplace(*code, cs.frequencies.size());
        if (inserted) cs.frequencies.emplace_back(*code, 0);
        ++cs.frequencies[it->second].second;
      }
    }
    summary.columns.push_back(std::move(cs));
  }
  return summary;
}

nlohmann::json TableSummary::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    nlohmann::json j{{"name", c.name}, {"kind", to_string(c.kind)}, {"present", c.present}, {"missing", c.missing}};
    if (c.kind == ColumnKind::Numeric) {
      j["min"] = c.min;
      j["max"] = c.max;
      j["mean"] = c.mean;
      j["std"] = c.stddev;
    } else {
      nlohmann::json freq = nlohmann::json::array();
      for (const auto& [code, count] : c.frequencies) freq.push_back({{"code", code}, {"count", count}});
      j["frequencies"] = freq;
    }
    cols.push_back(std::move(j));
  }
  return {{"format_version", 1}, {"rows", rows}, {"columns", cols}};
}

void TableSummary::write_csv(std::ostream& out) const {
  csv::write_row(out, {"column", "kind", "statistic", "value"});
  for (const auto& c : columns) {
    const std::string kind = to_string(c.kind);
    csv::write_row(out, {c.name, kind, "missing", std::to_string(c.missing)});
    if (c.kind == ColumnKind::Numeric) {
      csv::write_row(out, {c.name, kind, "min", csv::format_double(c.min)});
      csv::write_row(out, {c.name, kind, "max", csv::format_double(c.max)});
      csv::write_row(out, {c.name, kind, "mean", csv::format_double(c.mean)});
      csv::write_row(out, {c.name, kind, "std", csv::format_double(c.stddev)});
    } else {
      for (const auto& [code, count] : c.frequencies) {
        csv::write_row(out, {c.name, kind, "count[" + code + "]", std::to_string(count)});
      }
    }
  }
}

}  // namespace dualmatch
