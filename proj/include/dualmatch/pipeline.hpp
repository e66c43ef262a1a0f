#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dualmatch/clusterer.hpp"
#include "dualmatch/evaluator.hpp"
#include "dualmatch/model.hpp"
#include "dualmatch/synthgen.hpp"
#include "dualmatch/tabular.hpp"

namespace dualmatch {

enum class DataKind { Synthetic, Tabular };

/// Every setting of a run. Stored as INI with one section per stage; a run
/// directory's resolved_config.ini reproduces the run.
struct PipelineConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // [data]
  DataKind kind = DataKind::Synthetic;
  std::filesystem::path data_dir;    // synthetic dataset directory
  std::filesystem::path schema;      // tabular: schema INI
  std::filesystem::path households;  // tabular: side-A CSV
  std::filesystem::path units;       // tabular: side-B CSV
  char delimiter = ',';
  bool strict = false;

  // [split]
  SplitFractions fractions;
  /// Empty: the synthetic category c for synthetic data, unstratified otherwise.
  std::string stratify_by;

  // [cluster]
  int clusters = 3000;
  /// Per-side overrides; 0 uses `clusters`, a negative value means one
  /// cluster per training row.
  int clusters_a = 0;
  int clusters_b = 0;
  int max_iter = 100;
  bool tenure_masking = true;

  // [model]
  DualEncoderConfig model;

  // [eval]
  std::size_t negatives_per_positive = 10;
  std::size_t ndcg_k = 10;

  // [synth]
  std::size_t synth_n = 6400;
  double tau = 0.05;

  static PipelineConfig load(const std::filesystem::path& path);
  static PipelineConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
  std::string to_ini() const;
  void save(const std::filesystem::path& path) const;

  /// Defaults tuned for the synthetic benchmark.
  static PipelineConfig synthetic_defaults();
};

struct PreparedData {
  DataKind kind = DataKind::Synthetic;
  MicrodataTable table;
  RowSplit split;
  EncodingStats stats;
  EncodedMatrix train_a, train_b;
  EncodedMatrix val_a, val_b;
  EncodedMatrix test_a, test_b;
  LabeledPairSet val_pairs;
  LabeledPairSet test_pairs;
  std::vector<SyntheticRecord> records;  // synthetic only
  double tau = 0.0;                      // synthetic only
  std::vector<std::string> warnings;
};

/// Loads the data, splits it, fits encoding statistics on the training rows,
/// encodes each side of each part, and builds the validation and test pair
/// sets (ground truth for synthetic data, tenure rule otherwise).
PreparedData prepare_data(const PipelineConfig& config);

struct LabelBuild {
  ClusterAssignment a;
  ClusterAssignment b;
  ClusterLinkMatrix links{1, 1, {}};
  PairLabelSet labels;
  int k_a = 0;
  int k_b = 0;
};

/// Resolves the per-side cluster count against the number of training rows.
int resolve_clusters(int requested, int fallback, std::size_t rows);

/// Clusters each side of the training rows, links the clusters through the
/// co-occurring rows and expands them into positives. With `cache_dir` set,
/// assignments are stored under a content hash and reused.
LabelBuild build_labels(const PreparedData& data, const PipelineConfig& config,
                        const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

/// Labels from clusterings already computed, used by the sweep.
LabelBuild build_labels_from(const PreparedData& data, const PipelineConfig& config, ClusterAssignment a,
                             ClusterAssignment b);

/// Trains, selecting the epoch by validation AP.
TrainResult train_pipeline(const PreparedData& data, const PipelineConfig& config, const LabelBuild& labels,
                           const std::function<void(const TrainLogEntry&)>& on_epoch = {});

/// Full pipeline per k with the shared seed, reusing one clustering per side
/// truncated along its split trace.
std::vector<SweepRow> sweep_clusters(const PreparedData& data, const PipelineConfig& config,
                                     const std::vector<int>& k_values,
                                     const std::function<void(const SweepRow&)>& on_row = {});

}  // namespace dualmatch
