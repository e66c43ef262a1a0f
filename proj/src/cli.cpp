#include "dualmatch/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dualmatch/csv.hpp"
#include "dualmatch/errors.hpp"
#include "dualmatch/evaluator.hpp"
#include "dualmatch/pipeline.hpp"
#include "dualmatch/synthgen.hpp"

namespace dualmatch {

namespace {

namespace fs = std::filesystem;

/// Exclusive ownership of an output directory for the lifetime of a run.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".dualmatch.lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw Error(ErrorCode::IoError, "output directory " + dir.string() + " is locked by another run (remove " +
                                          path_.string() + " if it is stale)");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto written = ::write(fd_, pid.data(), pid.size());
  }
  ~DirectoryLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

struct GlobalOptions {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

struct DataOptions {
  std::string data;
  std::string schema;
  std::string households;
  std::string units;
  std::string delimiter;
  bool strict = false;
  CLI::Option* strict_opt = nullptr;

  void add(CLI::App* app) {
    app->add_option("--data", data, "Synthetic dataset directory (written by synth)");
    app->add_option("--schema", schema, "Schema INI for tabular data");
    app->add_option("--households", households, "Household (side A) CSV");
    app->add_option("--units", units, "Housing-unit (side B) CSV");
    app->add_option("--delimiter", delimiter, "CSV delimiter: one character or 'tab'");
    strict_opt = app->add_flag("--strict", strict, "Reject unparseable numeric cells");
  }
};

struct TrainOptions {
  int clusters = 0;
  int clusters_a = 0;
  int clusters_b = 0;
  int max_iter = 100;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double lr = 0.0;
  bool no_tenure_masking = false;
  CLI::Option* clusters_opt = nullptr;
  CLI::Option* clusters_a_opt = nullptr;
  CLI::Option* clusters_b_opt = nullptr;
  CLI::Option* max_iter_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* batch_opt = nullptr;
  CLI::Option* lr_opt = nullptr;

  void add(CLI::App* app) {
    clusters_opt = app->add_option("--clusters", clusters, "Cluster count per side (-1: one per row)");
    clusters_a_opt = app->add_option("--clusters-a", clusters_a, "Household-side cluster count override");
    clusters_b_opt = app->add_option("--clusters-b", clusters_b, "Unit-side cluster count override");
    max_iter_opt = app->add_option("--max-iter", max_iter, "Lloyd iterations per split")->check(CLI::PositiveNumber);
    epochs_opt = app->add_option("--epochs", epochs, "Training epochs");
    batch_opt = app->add_option("--batch-size", batch_size, "Rows per batch");
    lr_opt = app->add_option("--lr", lr, "Learning rate");
    app->add_flag("--no-tenure-masking", no_tenure_masking, "Keep tenure-conflicting pairs in training");
  }
};

/// Name of the pipeline stage in progress, reported with errors.
std::string g_stage;

struct StageScope {
  explicit StageScope(std::string name) { g_stage = std::move(name); }
};

PipelineConfig resolve_config(const GlobalOptions& g, const DataOptions* d) {
  PipelineConfig c;
  if (!g.config.empty()) {
    c = PipelineConfig::load(g.config);
  } else if (d != nullptr && !d->schema.empty()) {
    c = PipelineConfig{};
    c.kind = DataKind::Tabular;
  } else {
    c = PipelineConfig::synthetic_defaults();
  }
  if (g.seed_opt != nullptr && g.seed_opt->count() > 0) c.seed = g.seed;
  if (g.threads_opt != nullptr && g.threads_opt->count() > 0) c.threads = g.threads;
  if (d != nullptr) {
    if (!d->data.empty() && !d->schema.empty()) {
      throw Error(ErrorCode::Usage, "--data and --schema are mutually exclusive");
    }
    if (!d->data.empty()) {
      if (c.kind != DataKind::Synthetic) c = PipelineConfig::synthetic_defaults();
      c.kind = DataKind::Synthetic;
      c.data_dir = d->data;
    }
    if (!d->schema.empty()) {
      c.kind = DataKind::Tabular;
      c.schema = d->schema;
    }
    if (!d->households.empty()) c.households = d->households;
    if (!d->units.empty()) c.units = d->units;
    if (!d->delimiter.empty()) {
      if (d->delimiter == "tab") {
        c.delimiter = '\t';
      } else if (d->delimiter.size() == 1) {
        c.delimiter = d->delimiter[0];
      } else {
        throw Error(ErrorCode::Usage, "--delimiter must be one character or 'tab'");
      }
    }
    if (d->strict_opt != nullptr && d->strict_opt->count() > 0) c.strict = d->strict;
  }
  return c;
}

void apply_train_options(PipelineConfig& c, const TrainOptions& t) {
  if (t.clusters_opt->count() > 0) {
    c.clusters = t.clusters;
    c.clusters_a = 0;
    c.clusters_b = 0;
  }
  if (t.clusters_a_opt->count() > 0) c.clusters_a = t.clusters_a;
  if (t.clusters_b_opt->count() > 0) c.clusters_b = t.clusters_b;
  if (t.max_iter_opt->count() > 0) c.max_iter = t.max_iter;
  if (t.epochs_opt->count() > 0) c.model.epochs = t.epochs;
  if (t.batch_opt->count() > 0) c.model.batch_size = t.batch_size;
  if (t.lr_opt->count() > 0) c.model.adam.lr = t.lr;
  if (t.no_tenure_masking) c.tenure_masking = false;
}

fs::path require_out(const GlobalOptions& g) {
  if (g.out.empty()) throw Error(ErrorCode::Usage, "--out is required");
  return fs::path(g.out);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
}

void check_widths(const DualEncoderModel& model, const EncodedMatrix& a, const EncodedMatrix& b) {
  if (a.num_features() != model.config.input_width_a || b.num_features() != model.config.input_width_b) {
    throw Error(ErrorCode::SchemaMismatch,
                "checkpoint expects " + std::to_string(model.config.input_width_a) + " + " +
                    std::to_string(model.config.input_width_b) + " encoded features, data gives " +
                    std::to_string(a.num_features()) + " + " + std::to_string(b.num_features()));
  }
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

// ---------------------------------------------------------------------------

int cmd_synth(const GlobalOptions& g, std::size_t n, double tau, std::ostream& out) {
  PipelineConfig c = resolve_config(g, nullptr);
  c.synth_n = n;
  c.tau = tau;
  const fs::path dir = require_out(g);
  DirectoryLock lock(dir);
  StageScope stage("synth");
  const auto records = generate_synthetic(c.synth_n, c.seed);
  write_synthetic_dataset(dir, records, c.seed, c.tau);
  c.data_dir = dir;
  c.save(dir / "resolved_config.ini");
  out << "wrote " << records.size() << " records to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_describe(const GlobalOptions& g, const DataOptions& d, std::ostream& out) {
  const PipelineConfig c = resolve_config(g, &d);
  StageScope stage("load");
  MicrodataTable table;
  if (c.kind == DataKind::Synthetic) {
    if (c.data_dir.empty()) throw Error(ErrorCode::Usage, "describe needs --data or --schema");
    table = synthetic_table(read_synthetic_dataset(c.data_dir).records);
  } else {
    const auto schema = FeatureSchema::load(c.schema);
    table = load_csv_pair(c.households, c.units, schema, {c.delimiter, c.strict});
  }
  StageScope describe_stage("describe");
  const TableSummary summary = describe(table);
  if (!g.out.empty()) {
    const fs::path dir(g.out);
    DirectoryLock lock(dir);
    write_json(dir / "summary.json", summary.to_json());
    std::ofstream csv_out(dir / "summary.csv");
    summary.write_csv(csv_out);
    c.save(dir / "resolved_config.ini");
  }
  summary.write_csv(out);
  return kExitOk;
}

int cmd_train(const GlobalOptions& g, const DataOptions& d, const TrainOptions& t, std::ostream& out,
              std::ostream& err) {
  PipelineConfig c = resolve_config(g, &d);
  apply_train_options(c, t);
  const fs::path dir = require_out(g);
  DirectoryLock lock(dir);
  c.save(dir / "resolved_config.ini");

  StageScope s1("preprocess");
  const PreparedData data = prepare_data(c);
  print_warnings(data.warnings, err);
  write_json(dir / "encoding_stats.json", data.stats.to_json());
  {
    std::ofstream schema_out(dir / "schema.ini");
    schema_out << data.table.schema().to_ini();
  }
  {
    std::ofstream split_out(dir / "split.csv");
    split_out << "row_id,part\n";
    std::vector<std::pair<std::size_t, const char*>> parts;
    for (auto r : data.split.train) parts.emplace_back(r, "train");
    for (auto r : data.split.val) parts.emplace_back(r, "val");
    for (auto r : data.split.test) parts.emplace_back(r, "test");
    std::sort(parts.begin(), parts.end());
    for (const auto& [r, p] : parts) split_out << r << ',' << p << '\n';
  }

  StageScope s2("cluster");
  const LabelBuild labels = build_labels(data, c, dir / "cache");
  write_json(dir / "labels.json", {{"k_a", labels.k_a},
                                   {"k_b", labels.k_b},
                                   {"links", labels.links.count()},
                                   {"positives", labels.labels.num_positives()},
                                   {"diagonal", labels.labels.num_diagonal()},
                                   {"excluded", labels.labels.num_excluded()},
                                   {"train_rows", data.train_a.num_rows()}});
  out << "labels: k_a=" << labels.k_a << " k_b=" << labels.k_b << " positives=" << labels.labels.num_positives()
      << " excluded=" << labels.labels.num_excluded() << '\n';

  StageScope s3("train");
  const TrainResult tr = train_pipeline(data, c, labels, [&](const TrainLogEntry& e) {
    out << "epoch " << e.epoch << " loss " << csv::format_double(e.loss);
    if (!std::isnan(e.val_ap)) out << " val_ap " << csv::format_double(e.val_ap);
    out << '\n';
  });
  write_train_log(tr.log, dir / "train_log.csv");
  save_checkpoint(tr.model, dir / "model.ckpt");
  out << "best epoch " << tr.best_epoch << ", checkpoint " << (dir / "model.ckpt").string() << '\n';
  return kExitOk;
}

struct EvalOptions {
  std::string checkpoint;
  std::size_t negatives = 10;
  std::size_t k = 10;
  bool live = false;
  CLI::Option* negatives_opt = nullptr;
  CLI::Option* k_opt = nullptr;
};

fs::path checkpoint_path(const std::string& flag, const GlobalOptions& g) {
  if (!flag.empty()) return flag;
  if (!g.config.empty()) return fs::path(g.config).parent_path() / "model.ckpt";
  if (!g.out.empty()) return fs::path(g.out) / "model.ckpt";
  throw Error(ErrorCode::Usage, "--checkpoint is required");
}

int cmd_eval(const GlobalOptions& g, const DataOptions& d, const EvalOptions& e, std::ostream& out,
             std::ostream& err) {
  PipelineConfig c = resolve_config(g, &d);
  if (e.negatives_opt->count() > 0) c.negatives_per_positive = e.negatives;
  if (e.k_opt->count() > 0) c.ndcg_k = e.k;
  const fs::path ckpt = checkpoint_path(e.checkpoint, g);
  const fs::path dir = require_out(g);
  StageScope s0("load-checkpoint");
  const DualEncoderModel model = load_checkpoint(ckpt);
  DirectoryLock lock(dir);
  c.save(dir / "resolved_config.ini");

  StageScope s1("preprocess");
  const PreparedData data = prepare_data(c);
  print_warnings(data.warnings, err);
  check_widths(model, data.test_a, data.test_b);

  StageScope s2("evaluate");
  EvalReport report = evaluate(model, data.test_pairs, data.test_a, data.test_b, c.ndcg_k, !e.live);
  report.provenance["checkpoint"] = fs::absolute(ckpt).lexically_normal().string();
  report.provenance["split_seed"] = c.seed;
  report.provenance["data_kind"] = c.kind == DataKind::Synthetic ? "synthetic" : "tabular";
  if (c.kind == DataKind::Synthetic) {
    report.provenance["test_set"] = "synthetic ground truth";
    report.provenance["tau"] = c.tau;
  } else {
    report.provenance["test_set"] = "tenure rule";
    report.provenance["negatives_per_positive"] = c.negatives_per_positive;
  }
  report.write(dir);
  out << "AP " << csv::format_double(report.ap) << " NDCG@" << report.k << " " << csv::format_double(report.ndcg)
      << " positives " << report.positives << " negatives " << report.negatives << '\n';
  return kExitOk;
}

struct ScoreOptions {
  std::string checkpoint;
  std::string households;
  std::string units;
  std::string schema;
  std::string stats;
  std::string pairs;
  std::size_t top = 0;
  bool live = false;
};

EncodingStats side_stats(const EncodingStats& stats, const FeatureSchema& schema, Side side) {
  EncodingStats out;
  out.fitted_rows = stats.fitted_rows;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema[c].side == side) out.columns.push_back(stats.columns.at(c));
  }
  return out;
}

int cmd_score(const GlobalOptions& g, const ScoreOptions& s, std::ostream& out) {
  if (s.households.empty() || s.units.empty()) throw Error(ErrorCode::Usage, "score needs --households and --units");
  const fs::path ckpt = checkpoint_path(s.checkpoint, g);
  const fs::path run_dir = ckpt.parent_path();
  const fs::path dir = require_out(g);
  StageScope s0("load-checkpoint");
  const DualEncoderModel model = load_checkpoint(ckpt);

  StageScope s1("load");
  const fs::path schema_path = s.schema.empty() ? run_dir / "schema.ini" : fs::path(s.schema);
  const fs::path stats_path = s.stats.empty() ? run_dir / "encoding_stats.json" : fs::path(s.stats);
  const FeatureSchema schema = FeatureSchema::load(schema_path);
  const EncodingStats stats = EncodingStats::from_json(read_json(stats_path));
  if (stats.columns.size() != schema.size()) {
    throw Error(ErrorCode::SchemaMismatch, "encoding stats do not match the schema");
  }
  const auto table_a = load_csv(s.households, schema.side_subset(Side::A));
  const auto table_b = load_csv(s.units, schema.side_subset(Side::B));
  const auto xa = encode(table_a, side_stats(stats, schema, Side::A), table_a.all_rows());
  const auto xb = encode(table_b, side_stats(stats, schema, Side::B), table_b.all_rows());
  check_widths(model, xa, xb);

  StageScope s2("score");
  DirectoryLock lock(dir);
  std::ofstream f(dir / "scores.csv");
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + (dir / "scores.csv").string());
  f << "row_a,row_b,logit,probability\n";
  auto emit = [&](std::size_t i, std::size_t j, double logit) {
    const double p = std::clamp(sigmoid(logit), std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
    csv::write_row(f, {std::to_string(i), std::to_string(j), csv::format_double(logit), csv::format_double(p)});
  };
  std::size_t written = 0;
  if (!s.pairs.empty()) {
    const auto records = csv::read_file(s.pairs);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t r = 1; r < records.size(); ++r) {
      const double na = static_cast<double>(xa.num_rows());
      const double nb = static_cast<double>(xb.num_rows());
      const double a = records[r].size() >= 2 ? csv::parse_double(records[r][0]).value_or(-1.0) : -1.0;
      const double b = records[r].size() >= 2 ? csv::parse_double(records[r][1]).value_or(-1.0) : -1.0;
      if (!(a >= 0 && a < na && b >= 0 && b < nb) || a != std::floor(a) || b != std::floor(b)) {
        throw Error(ErrorCode::TypeError, s.pairs + ": bad pair on line " + std::to_string(r + 1));
      }
      pairs.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    }
    const auto logits = score_pair_list(model, xa.values, xb.values, pairs, !s.live);
    for (std::size_t q = 0; q < pairs.size(); ++q) emit(pairs[q].first, pairs[q].second, logits[q]);
    written = pairs.size();
  } else {
    const auto m = score_pairs(model, xa.values, xb.values, !s.live);
    for (std::size_t i = 0; i < m.logits.rows(); ++i) {
      const auto row = m.logits.row(i);
      if (s.top > 0) {
        const auto order = rank_descending(row);
        for (std::size_t q = 0; q < std::min(s.top, order.size()); ++q) emit(i, order[q], row[order[q]]);
        written += std::min(s.top, order.size());
      } else {
        for (std::size_t j = 0; j < row.size(); ++j) emit(i, j, row[j]);
        written += row.size();
      }
    }
  }
  out << "scored " << written << " pairs into " << (dir / "scores.csv").string() << '\n';
  return kExitOk;
}

int cmd_sweep(const GlobalOptions& g, const DataOptions& d, const TrainOptions& t, std::vector<int> ks,
              std::ostream& out, std::ostream& err) {
  PipelineConfig c = resolve_config(g, &d);
  apply_train_options(c, t);
  const fs::path dir = require_out(g);
  DirectoryLock lock(dir);
  c.save(dir / "resolved_config.ini");
  StageScope s1("preprocess");
  const PreparedData data = prepare_data(c);
  print_warnings(data.warnings, err);
  StageScope s2("sweep");
  const auto rows = sweep_clusters(data, c, ks, [&](const SweepRow& r) {
    out << "k " << r.k << " AP " << csv::format_double(r.ap) << " NDCG " << csv::format_double(r.ndcg)
        << " positives " << r.positives << '\n';
  });
  write_sweep_csv(rows, dir / "sweep.csv");
  return kExitOk;
}

int cmd_importance(const GlobalOptions& g, const DataOptions& d, const std::string& checkpoint,
                   std::size_t repeats, std::ostream& out, std::ostream& err) {
  const PipelineConfig c = resolve_config(g, &d);
  const fs::path ckpt = checkpoint_path(checkpoint, g);
  const fs::path dir = require_out(g);
  StageScope s0("load-checkpoint");
  const DualEncoderModel model = load_checkpoint(ckpt);
  DirectoryLock lock(dir);
  c.save(dir / "resolved_config.ini");
  StageScope s1("preprocess");
  const PreparedData data = prepare_data(c);
  print_warnings(data.warnings, err);
  check_widths(model, data.test_a, data.test_b);
  StageScope s2("importance");
  const auto rows = permutation_importance(model, data.test_pairs, data.test_a, data.test_b, repeats, c.seed);
  write_importance_csv(rows, dir / "importance.csv");
  for (const auto& r : rows) {
    out << r.feature << " (" << to_string(r.side) << ") " << csv::format_double(r.mean_drop) << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Household and housing-unit matching with dual encoders"};
  app.name("dualmatch");
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "Run configuration (INI)");
  app.add_option("--out", g.out, "Output directory");
  g.seed_opt = app.add_option("--seed", g.seed, "Seed for splitting, clustering, initialization and sampling");
  g.threads_opt = app.add_option("--threads", g.threads, "Worker threads for scoring")->check(CLI::PositiveNumber);

  std::size_t synth_n = 6400;
  double synth_tau = 0.05;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic benchmark");
  synth->add_option("--n", synth_n, "Number of records")->check(CLI::PositiveNumber);
  synth->add_option("--tau", synth_tau, "Ground-truth tolerance")->check(CLI::PositiveNumber);

  DataOptions describe_data;
  auto* describe_cmd = app.add_subcommand("describe", "Summarize a dataset");
  describe_data.add(describe_cmd);

  DataOptions train_data;
  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "Cluster, expand labels and train a model");
  train_data.add(train_cmd);
  train_opts.add(train_cmd);

  DataOptions eval_data;
  EvalOptions eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval_data.add(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "Model checkpoint");
  eval_opts.negatives_opt =
      eval_cmd->add_option("--negatives-per-positive", eval_opts.negatives, "Tenure negatives per positive")
          ->check(CLI::PositiveNumber);
  eval_opts.k_opt = eval_cmd->add_option("--k", eval_opts.k, "NDCG cutoff")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--live-weights", eval_opts.live, "Score with live instead of averaged weights");

  ScoreOptions score_opts;
  auto* score_cmd = app.add_subcommand("score", "Score household and unit pairs");
  score_cmd->add_option("--checkpoint", score_opts.checkpoint, "Model checkpoint");
  score_cmd->add_option("--households", score_opts.households, "Household CSV")->required();
  score_cmd->add_option("--units", score_opts.units, "Housing-unit CSV")->required();
  score_cmd->add_option("--schema", score_opts.schema, "Schema INI (default: next to the checkpoint)");
  score_cmd->add_option("--stats", score_opts.stats, "Encoding statistics (default: next to the checkpoint)");
  score_cmd->add_option("--pairs", score_opts.pairs, "CSV of row_a,row_b pairs to score");
  score_cmd->add_option("--top", score_opts.top, "Keep the N best units per household");
  score_cmd->add_flag("--live-weights", score_opts.live, "Score with live instead of averaged weights");

  DataOptions sweep_data;
  TrainOptions sweep_opts;
  std::vector<int> sweep_ks;
  auto* sweep_cmd = app.add_subcommand("sweep", "Cluster-count sensitivity table");
  sweep_data.add(sweep_cmd);
  sweep_opts.add(sweep_cmd);
  sweep_cmd->add_option("--k", sweep_ks, "Cluster counts, comma separated")->delimiter(',')->required();

  DataOptions imp_data;
  std::string imp_checkpoint;
  std::size_t imp_repeats = 3;
  auto* imp_cmd = app.add_subcommand("importance", "Permutation feature importance");
  imp_data.add(imp_cmd);
  imp_cmd->add_option("--checkpoint", imp_checkpoint, "Model checkpoint");
  imp_cmd->add_option("--repeats", imp_repeats, "Permutations per feature")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  g_stage = "setup";
  try {
    if (*synth) return cmd_synth(g, synth_n, synth_tau, out);
    if (*describe_cmd) return cmd_describe(g, describe_data, out);
    if (*train_cmd) return cmd_train(g, train_data, train_opts, out, err);
    if (*eval_cmd) return cmd_eval(g, eval_data, eval_opts, out, err);
    if (*score_cmd) return cmd_score(g, score_opts, out);
    if (*sweep_cmd) return cmd_sweep(g, sweep_data, sweep_opts, sweep_ks, out, err);
    if (*imp_cmd) return cmd_importance(g, imp_data, imp_checkpoint, imp_repeats, out, err);
  } catch (const Error& e) {
    err << "error [stage " << g_stage << "]: " << e.what() << '\n';
    if (e.code() == ErrorCode::Usage) return kExitUsage;
    return is_data_error(e.code()) ? kExitData : kExitInternal;
  } catch (const fs::filesystem_error& e) {
    err << "error [stage " << g_stage << "]: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error [stage " << g_stage << "]: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace dualmatch
