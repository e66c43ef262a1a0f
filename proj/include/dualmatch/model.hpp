#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualmatch/clusterer.hpp"
#include "dualmatch/metrics.hpp"
#include "dualmatch/nn.hpp"
#include "dualmatch/tabular.hpp"

namespace dualmatch {

struct DualEncoderConfig {
  std::size_t input_width_a = 0;
  std::size_t input_width_b = 0;
  std::vector<std::size_t> block_widths{128, 64};
  std::size_t embed_dim = 32;
  double dropout = 0.1;
  bool normalize_embeddings = true;
  /// Logit is t * (h . u) - b. A positive initial b starts every pair below
  /// the match threshold, matching the mostly-negative batches.
  double init_temperature = 10.0;
  double init_bias = 10.0;
  std::size_t batch_size = 256;
  std::size_t epochs = 50;
  double ema_decay = 0.999;
  /// Uses min(decay, (1 + step) / (10 + step)) so early averages do not
  /// retain the random initialization.
  bool ema_warmup = true;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static DualEncoderConfig from_json(const nlohmann::json& j);
};

/// stem -> blocks -> projection. The stem lifts the raw features to the first
/// block width before any LayerNorm; its bias starts random so the lifted rows
/// span an affine subspace that avoids the origin and row normalization stays
/// injective.
struct Encoder {
  Tensor2 stem_w;  // input width x first block width
  Tensor2 stem_b;  // 1 x first block width
  std::vector<LayerParams> blocks;
  Tensor2 proj_w;  // last width x embed_dim
  Tensor2 proj_b;  // 1 x embed_dim

  std::size_t input_width() const { return stem_w.rows(); }
};

/// Every learnable of the model. Temperature and bias are 1x1 tensors so the
/// optimizer and averaging treat them like any other parameter.
struct ModelWeights {
  Encoder a;
  Encoder b;
  Tensor2 log_temperature{1, 1};
  Tensor2 bias{1, 1};

  double temperature() const;
  double bias_value() const { return bias(0, 0); }

  std::vector<Tensor2*> tensors();
  std::vector<const Tensor2*> tensors() const;
  std::vector<std::string> tensor_names() const;
  /// Same structure with every tensor zeroed.
  ModelWeights zeros_like() const;
};

class DualEncoderModel {
 public:
  DualEncoderConfig config;
  ModelWeights live;
  ModelWeights ema;

  static DualEncoderModel initialize(const DualEncoderConfig& config);

  const ModelWeights& weights(bool use_ema) const { return use_ema ? ema : live; }
};

/// Rows pushed through any encoder since the last reset. Scoring n_A x n_B
/// pairs must cost n_A + n_B rows.
std::uint64_t encoder_rows_forwarded();
void reset_encoder_rows_forwarded();

/// Eval-mode embeddings of `x` for one side, unit-normalized when configured.
Tensor2 embed(const DualEncoderModel& model, const Tensor2& x, Side side, bool use_ema = true);

double softplus(double x);
double sigmoid(double x);

/// logit(i, j) = t * (h_i . u_j) - b
Tensor2 pair_logits(const Tensor2& h, const Tensor2& u, double t, double b);
double pair_logit(std::span<const double> h, std::span<const double> u, double t, double b);

struct SigmoidLoss {
  double loss = 0.0;
  /// dL/dlogit; zero on masked entries.
  Tensor2 dlogits;
};

/// L = (1/rows) * sum over unmasked (i, j) of softplus(-z_ij * logit_ij), with
/// z in {+1, -1}. `masked` is row-major over the logits (empty: no mask).
SigmoidLoss sigmoid_loss(const Tensor2& logits, const Tensor2& labels, std::span<const std::uint8_t> masked = {});

struct BatchLoss {
  double loss = 0.0;
  ModelWeights grads;
};

/// Loss and gradients of one in-batch block. `dropout_key` selects the dropout
/// masks (train mode); without it the encoders run in eval mode.
BatchLoss batch_loss(const ModelWeights& weights, const DualEncoderConfig& config, const Tensor2& xa,
                     const Tensor2& xb, const Tensor2& labels, std::span<const std::uint8_t> masked,
                     std::optional<std::uint64_t> dropout_key);

struct TrainLogEntry {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  /// NaN except on the last step of an epoch with validation data.
  double val_ap = 0.0;
  double temperature = 0.0;
  double bias = 0.0;
};

struct ValidationData {
  const EncodedMatrix* a = nullptr;
  const EncodedMatrix* b = nullptr;
  const LabeledPairSet* pairs = nullptr;
};

struct TrainResult {
  DualEncoderModel model;
  std::vector<TrainLogEntry> log;
  std::size_t best_epoch = 0;
  double best_val_ap = 0.0;
};

/// Trains on in-batch blocks: each batch takes shuffled side-A rows and their
/// co-occurring side-B rows; z_ij = +1 for labeled positives, -1 otherwise;
/// excluded pairs are masked. The returned model is the epoch whose averaged
/// (EMA) weights scored the best validation AP, or the final one without
/// validation data.
TrainResult train(const DualEncoderConfig& config, const EncodedMatrix& xa, const EncodedMatrix& xb,
                  const PairLabelSet& labels, const ValidationData* val = nullptr,
                  const std::function<void(const TrainLogEntry&)>& on_epoch = {});

struct MatchScoreMatrix {
  Tensor2 logits;
  Tensor2 probabilities;
};

/// Embeds each side once, then takes all pairwise logits.
MatchScoreMatrix score_pairs(const DualEncoderModel& model, const Tensor2& xa, const Tensor2& xb,
                             bool use_ema = true);

/// Logits for (row in xa, row in xb) index pairs; entries equal the dense
/// matrix bit-for-bit.
std::vector<double> score_pair_list(const DualEncoderModel& model, const Tensor2& xa, const Tensor2& xb,
                                    std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                    bool use_ema = true);

/// Logits for a labeled set whose rows are table row ids of `xa`/`xb`.
std::vector<double> score_labeled_pairs(const DualEncoderModel& model, const LabeledPairSet& set,
                                        const EncodedMatrix& xa, const EncodedMatrix& xb, bool use_ema = true);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const DualEncoderModel& model, const std::filesystem::path& path);
DualEncoderModel load_checkpoint(const std::filesystem::path& path);

/// Hex digest of the serialized config, for provenance.
std::string config_hash(const DualEncoderConfig& config);

void write_train_log(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path);

}  // namespace dualmatch
