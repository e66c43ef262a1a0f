#include "dualmatch/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <iomanip>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dualmatch/csv.hpp"
#include "dualmatch/errors.hpp"

namespace dualmatch {

namespace {

namespace pt = boost::property_tree;

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = csv::parse_double(item);
    if (!v || *v < 1 || *v != static_cast<double>(static_cast<std::size_t>(*v))) {
      throw Error(ErrorCode::Usage, "bad block width '" + item + "'");
    }
    out.push_back(static_cast<std::size_t>(*v));
  }
  return out;
}

bool parse_bool(const std::string& text, const std::string& key) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw Error(ErrorCode::Usage, key + ": expected a boolean, got '" + text + "'");
}

template <typename T>
T get(const pt::ptree& tree, const std::string& key, T fallback) {
  const auto v = tree.get_optional<std::string>(key);
  if (!v) return fallback;
  if constexpr (std::is_same_v<T, bool>) {
    return parse_bool(*v, key);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return *v;
  } else {
    const auto d = csv::parse_double(*v);
    if (!d) throw Error(ErrorCode::Usage, key + ": expected a number, got '" + *v + "'");
    if constexpr (std::is_integral_v<T>) {
      if (*d != static_cast<double>(static_cast<T>(*d))) {
        throw Error(ErrorCode::Usage, key + ": expected an integer, got '" + *v + "'");
      }
    }
    return static_cast<T>(*d);
  }
}

std::filesystem::path resolve_path(const std::string& text, const std::filesystem::path& base) {
  if (text.empty()) return {};
  std::filesystem::path p(text);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

std::string path_text(const std::filesystem::path& p) {
  return p.empty() ? std::string() : std::filesystem::absolute(p).lexically_normal().string();
}

std::string num(double v) { return csv::format_double(v); }

std::uint64_t fnv(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) h = (h ^ bytes[i]) * 0x100000001b3ULL;
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

ClusterAssignment cluster_side(const EncodedMatrix& m, int k, const PipelineConfig& config, Side side,
                               const std::optional<std::filesystem::path>& cache_dir) {
  if (!cache_dir) return bisecting_kmeans(m.values, k, config.seed, config.max_iter);
  std::uint64_t h = fnv(m.values.values().data(), m.values.size() * sizeof(double));
  const std::uint64_t params[] = {m.values.rows(), m.values.cols(), static_cast<std::uint64_t>(k),
                                  static_cast<std::uint64_t>(config.max_iter), config.seed};
  h = fnv(params, sizeof(params), h);
  const auto path = *cache_dir / ("clusters_" + std::string(to_string(side)) + "_" + hex(h) + ".csv");
  if (std::filesystem::exists(path)) {
    return assignment_from_labels(m.values, read_assignment_csv(path, m.row_ids), k);
  }
  auto assignment = bisecting_kmeans(m.values, k, config.seed, config.max_iter);
  std::filesystem::create_directories(*cache_dir);
  const auto tmp = path.string() + ".tmp";
  write_assignment_csv(assignment, m.row_ids, tmp);
  std::filesystem::rename(tmp, path);
  return assignment;
}

}  // namespace

// ---------------------------------------------------------------------------

PipelineConfig PipelineConfig::synthetic_defaults() {
  PipelineConfig c;
  c.kind = DataKind::Synthetic;
  c.clusters_a = -1;
  c.clusters_b = 100;
  c.tenure_masking = false;
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

PipelineConfig PipelineConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::Usage, std::string("config: ") + e.what());
  }
  const auto kind_text = get<std::string>(tree, "data.kind", "synthetic");
  PipelineConfig c = kind_text == "synthetic" ? synthetic_defaults() : PipelineConfig{};
  if (kind_text == "tabular") {
    c.kind = DataKind::Tabular;
  } else if (kind_text != "synthetic") {
    throw Error(ErrorCode::Usage, "data.kind must be synthetic or tabular");
  }

  c.seed = get(tree, "run.seed", c.seed);
  c.threads = get(tree, "run.threads", c.threads);

  c.data_dir = resolve_path(get<std::string>(tree, "data.dir", ""), base_dir);
  c.schema = resolve_path(get<std::string>(tree, "data.schema", ""), base_dir);
  c.households = resolve_path(get<std::string>(tree, "data.households", ""), base_dir);
  c.units = resolve_path(get<std::string>(tree, "data.units", ""), base_dir);
  const auto delim = get<std::string>(tree, "data.delimiter", ",");
  if (delim == "tab" || delim == "\\t") {
    c.delimiter = '\t';
  } else if (delim.size() == 1) {
    c.delimiter = delim[0];
  } else {
    throw Error(ErrorCode::Usage, "data.delimiter must be one character or 'tab'");
  }
  c.strict = get(tree, "data.strict", c.strict);

  c.fractions.train = get(tree, "split.train", c.fractions.train);
  c.fractions.val = get(tree, "split.val", c.fractions.val);
  c.fractions.test = get(tree, "split.test", c.fractions.test);
  c.stratify_by = get<std::string>(tree, "split.stratify_by", c.stratify_by);

  c.clusters = get(tree, "cluster.k", c.clusters);
  c.clusters_a = get(tree, "cluster.k_a", c.clusters_a);
  c.clusters_b = get(tree, "cluster.k_b", c.clusters_b);
  c.max_iter = get(tree, "cluster.max_iter", c.max_iter);
  c.tenure_masking = get(tree, "cluster.tenure_masking", c.tenure_masking);

  auto& m = c.model;
  if (auto w = tree.get_optional<std::string>("model.block_widths")) m.block_widths = parse_widths(*w);
  m.embed_dim = get(tree, "model.embed_dim", m.embed_dim);
  m.dropout = get(tree, "model.dropout", m.dropout);
  m.normalize_embeddings = get(tree, "model.normalize_embeddings", m.normalize_embeddings);
  m.init_temperature = get(tree, "model.init_temperature", m.init_temperature);
  m.init_bias = get(tree, "model.init_bias", m.init_bias);
  m.batch_size = get(tree, "model.batch_size", m.batch_size);
  m.epochs = get(tree, "model.epochs", m.epochs);
  m.ema_decay = get(tree, "model.ema_decay", m.ema_decay);
  m.ema_warmup = get(tree, "model.ema_warmup", m.ema_warmup);
  m.adam.lr = get(tree, "model.lr", m.adam.lr);
  m.adam.beta1 = get(tree, "model.beta1", m.adam.beta1);
  m.adam.beta2 = get(tree, "model.beta2", m.adam.beta2);
  m.adam.eps = get(tree, "model.adam_eps", m.adam.eps);

  c.negatives_per_positive = get(tree, "eval.negatives_per_positive", c.negatives_per_positive);
  c.ndcg_k = get(tree, "eval.ndcg_k", c.ndcg_k);

  c.synth_n = get(tree, "synth.n", c.synth_n);
  c.tau = get(tree, "synth.tau", c.tau);
  return c;
}

std::string PipelineConfig::to_ini() const {
  std::ostringstream o;
  const auto& m = model;
  o << "[run]\n"
    << "seed = " << seed << "\n"
    << "threads = " << threads << "\n\n"
    << "[data]\n"
    << "kind = " << (kind == DataKind::Synthetic ? "synthetic" : "tabular") << "\n"
    << "dir = " << path_text(data_dir) << "\n"
    << "schema = " << path_text(schema) << "\n"
    << "households = " << path_text(households) << "\n"
    << "units = " << path_text(units) << "\n"
    << "delimiter = " << (delimiter == '\t' ? std::string("tab") : std::string(1, delimiter)) << "\n"
    << "strict = " << (strict ? "true" : "false") << "\n\n"
    << "[split]\n"
    << "train = " << num(fractions.train) << "\n"
    << "val = " << num(fractions.val) << "\n"
    << "test = " << num(fractions.test) << "\n"
    << "stratify_by = " << stratify_by << "\n\n"
    << "[cluster]\n"
    << "k = " << clusters << "\n"
    << "k_a = " << clusters_a << "\n"
    << "k_b = " << clusters_b << "\n"
    << "max_iter = " << max_iter << "\n"
    << "tenure_masking = " << (tenure_masking ? "true" : "false") << "\n\n"
    << "[model]\n"
    << "block_widths = " << join(m.block_widths) << "\n"
    << "embed_dim = " << m.embed_dim << "\n"
    << "dropout = " << num(m.dropout) << "\n"
    << "normalize_embeddings = " << (m.normalize_embeddings ? "true" : "false") << "\n"
    << "init_temperature = " << num(m.init_temperature) << "\n"
    << "init_bias = " << num(m.init_bias) << "\n"
    << "batch_size = " << m.batch_size << "\n"
    << "epochs = " << m.epochs << "\n"
    << "ema_decay = " << num(m.ema_decay) << "\n"
    << "ema_warmup = " << (m.ema_warmup ? "true" : "false") << "\n"
    << "lr = " << num(m.adam.lr) << "\n"
    << "beta1 = " << num(m.adam.beta1) << "\n"
    << "beta2 = " << num(m.adam.beta2) << "\n"
    << "adam_eps = " << num(m.adam.eps) << "\n\n"
    << "[eval]\n"
    << "negatives_per_positive = " << negatives_per_positive << "\n"
    << "ndcg_k = " << ndcg_k << "\n\n"
    << "[synth]\n"
    << "n = " << synth_n << "\n"
    << "tau = " << num(tau) << "\n";
  return o.str();
}

void PipelineConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << to_ini();
}

// ---------------------------------------------------------------------------

PreparedData prepare_data(const PipelineConfig& config) {
  PreparedData d;
  d.kind = config.kind;
  std::optional<std::string> stratify;
  if (config.kind == DataKind::Synthetic) {
    if (config.data_dir.empty()) throw Error(ErrorCode::Usage, "synthetic runs need a data directory");
    auto ds = read_synthetic_dataset(config.data_dir);
    d.records = std::move(ds.records);
    d.tau = config.tau;
    d.table = synthetic_table(d.records);
    stratify = config.stratify_by.empty() ? std::string("c") : config.stratify_by;
  } else {
    if (config.schema.empty() || config.households.empty() || config.units.empty()) {
      throw Error(ErrorCode::Usage, "tabular runs need a schema, a households CSV and a units CSV");
    }
    const FeatureSchema schema = FeatureSchema::load(config.schema);
    schema.validate(config.tenure_masking);
    d.table = load_csv_pair(config.households, config.units, schema, {config.delimiter, config.strict});
    if (!config.stratify_by.empty()) stratify = config.stratify_by;
  }
  if (d.table.num_rows() == 0) throw Error(ErrorCode::EmptyInput, "input has no rows");

  d.split = split(d.table, config.fractions, config.seed, stratify);
  if (d.split.train.empty()) throw Error(ErrorCode::EmptySubset, "training split is empty");
  d.stats = fit_stats(d.table, d.split.train);
  for (const auto& w : d.stats.warnings) d.warnings.push_back(w);
  d.train_a = encode(d.table, d.stats, d.split.train, Side::A);
  d.train_b = encode(d.table, d.stats, d.split.train, Side::B);
  d.val_a = encode(d.table, d.stats, d.split.val, Side::A);
  d.val_b = encode(d.table, d.stats, d.split.val, Side::B);
  d.test_a = encode(d.table, d.stats, d.split.test, Side::A);
  d.test_b = encode(d.table, d.stats, d.split.test, Side::B);

  auto part_pairs = [&](const std::vector<std::size_t>& rows, std::uint64_t salt) {
    if (rows.empty()) return LabeledPairSet{};
    if (config.kind == DataKind::Synthetic) {
      std::vector<SyntheticRecord> recs;
      recs.reserve(rows.size());
      for (std::size_t r : rows) recs.push_back(d.records[r]);
      return synthetic_gt_pairs(build_gt_matrix(recs, recs, d.tau), rows, rows);
    }
    auto ts = build_tenure_testset(d.table, rows, config.negatives_per_positive, config.seed + salt);
    for (const auto& w : ts.warnings) d.warnings.push_back(w);
    return std::move(ts.set);
  };
  d.val_pairs = part_pairs(d.split.val, 1);
  d.test_pairs = part_pairs(d.split.test, 2);
  return d;
}

int resolve_clusters(int requested, int fallback, std::size_t rows) {
  const int n = static_cast<int>(rows);
  int k = requested == 0 ? fallback : requested;
  if (k < 0) return n;
  return std::min(k, n);
}

LabelBuild build_labels_from(const PreparedData& data, const PipelineConfig& config, ClusterAssignment a,
                             ClusterAssignment b) {
  LabelBuild out;
  out.k_a = a.k;
  out.k_b = b.k;
  std::vector<std::pair<std::size_t, std::size_t>> co;
  co.reserve(data.train_a.num_rows());
  for (std::size_t i = 0; i < data.train_a.num_rows(); ++i) co.emplace_back(i, i);
  out.links = link_clusters(a, b, co);
  std::optional<TenureMask> mask;
  if (config.tenure_masking && data.table.schema().has_tenure_pair()) mask.emplace(data.table);
  out.labels = expand_pairs(out.links, a, b, data.train_a.row_ids, data.train_b.row_ids, mask ? &*mask : nullptr);
  out.a = std::move(a);
  out.b = std::move(b);
  return out;
}

LabelBuild build_labels(const PreparedData& data, const PipelineConfig& config,
                        const std::optional<std::filesystem::path>& cache_dir) {
  const std::size_t n = data.train_a.num_rows();
  const int k_a = resolve_clusters(config.clusters_a, config.clusters, n);
  const int k_b = resolve_clusters(config.clusters_b, config.clusters, n);
  auto a = cluster_side(data.train_a, k_a, config, Side::A, cache_dir);
  auto b = cluster_side(data.train_b, k_b, config, Side::B, cache_dir);
  return build_labels_from(data, config, std::move(a), std::move(b));
}

TrainResult train_pipeline(const PreparedData& data, const PipelineConfig& config, const LabelBuild& labels,
                           const std::function<void(const TrainLogEntry&)>& on_epoch) {
  DualEncoderConfig mc = config.model;
  mc.seed = config.seed;
  mc.threads = config.threads;
  const bool usable_val = data.val_pairs.positives() > 0 && data.val_pairs.negatives() > 0;
  ValidationData val{&data.val_a, &data.val_b, &data.val_pairs};
  return train(mc, data.train_a, data.train_b, labels.labels, usable_val ? &val : nullptr, on_epoch);
}

std::vector<SweepRow> sweep_clusters(const PreparedData& data, const PipelineConfig& config,
                                     const std::vector<int>& k_values,
                                     const std::function<void(const SweepRow&)>& on_row) {
  if (k_values.empty()) throw Error(ErrorCode::Usage, "sweep needs at least one k");
  const std::size_t n = data.train_a.num_rows();
  for (int k : k_values) {
    if (k < 1 || static_cast<std::size_t>(k) > n) {
      throw Error(ErrorCode::KTooLarge, "sweep k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    }
  }
  // A side follows the swept k unless its count is pinned by an override.
  const bool sweep_a = config.clusters_a == 0;
  const bool sweep_b = config.clusters_b == 0 || !sweep_a;
  const int k_max = *std::max_element(k_values.begin(), k_values.end());
  const int fixed_a = resolve_clusters(config.clusters_a, config.clusters, n);
  const int fixed_b = resolve_clusters(config.clusters_b, config.clusters, n);
  const auto full_a = bisecting_kmeans(data.train_a.values, sweep_a ? k_max : fixed_a, config.seed, config.max_iter);
  const auto full_b = bisecting_kmeans(data.train_b.values, sweep_b ? k_max : fixed_b, config.seed, config.max_iter);

  std::vector<SweepRow> rows;
  for (int k : k_values) {
    const auto start = std::chrono::steady_clock::now();
    auto a = sweep_a ? truncate_assignment(full_a, data.train_a.values, k) : full_a;
    auto b = sweep_b ? truncate_assignment(full_b, data.train_b.values, k) : full_b;
    SweepRow row;
    row.k = k;
    row.median_cluster_size = sweep_a ? a.median_size() : b.median_size();
    row.seed = config.seed;
    row.label = static_cast<std::size_t>(k) == n ? "Singleton" : "";
    const LabelBuild labels = build_labels_from(data, config, std::move(a), std::move(b));
    row.positives = labels.labels.num_positives();
    const TrainResult tr = train_pipeline(data, config, labels);
    const EvalReport rep = evaluate(tr.model, data.test_pairs, data.test_a, data.test_b, config.ndcg_k);
    row.ap = rep.ap;
    row.ndcg = rep.ndcg;
    row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace dualmatch
