#include "dualmatch/model.hpp"

#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "dualmatch/csv.hpp"
#include "dualmatch/errors.hpp"
#include "dualmatch/rng.hpp"

namespace dualmatch {

namespace {

std::atomic<std::uint64_t> g_rows_forwarded{0};

constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kShuffleTag = 0x5f1e;
constexpr std::uint64_t kDropoutTag = 0xd0d0;
constexpr std::uint64_t kStemTag = 0x57e3;

std::uint64_t side_tag(Side side) { return side == Side::A ? 0 : 1; }

Encoder init_encoder(const DualEncoderConfig& config, std::size_t input_width, Side side) {
  Encoder enc;
  const std::size_t lifted = config.block_widths.empty() ? input_width : config.block_widths.front();
  {
    Stream rng(config.seed, {kInitTag, side_tag(side), kStemTag});
    enc.stem_w = Tensor2(input_width, lifted);
    enc.stem_b = Tensor2(1, lifted);
    const double scale = 1.0 / std::sqrt(static_cast<double>(input_width));
    for (double& w : enc.stem_w.values()) w = scale * rng.normal();
    for (double& w : enc.stem_b.values()) w = rng.normal();
  }
  std::size_t in = lifted;
  for (std::size_t l = 0; l < config.block_widths.size(); ++l) {
    Stream rng(config.seed, {kInitTag, side_tag(side), l});
    enc.blocks.push_back(init_block(in, config.block_widths[l], config.dropout, rng));
    in = config.block_widths[l];
  }
  Stream rng(config.seed, {kInitTag, side_tag(side), config.block_widths.size()});
  enc.proj_w = Tensor2(in, config.embed_dim);
  enc.proj_b = Tensor2(1, config.embed_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : enc.proj_w.values()) w = scale * rng.normal();
  return enc;
}

std::vector<Tensor2*> encoder_tensors(Encoder& enc) {
  std::vector<Tensor2*> out{&enc.stem_w, &enc.stem_b};
  for (auto& b : enc.blocks) {
    for (Tensor2* t : b.tensors()) out.push_back(t);
  }
  out.push_back(&enc.proj_w);
  out.push_back(&enc.proj_b);
  return out;
}

std::vector<std::string> encoder_names(const Encoder& enc, const std::string& prefix) {
  std::vector<std::string> out{prefix + "stem_w", prefix + "stem_b"};
  for (std::size_t l = 0; l < enc.blocks.size(); ++l) {
    for (const auto& n : LayerParams::tensor_names()) out.push_back(prefix + "block" + std::to_string(l) + "." + n);
  }
  out.push_back(prefix + "proj_w");
  out.push_back(prefix + "proj_b");
  return out;
}

struct EncoderCache {
  Tensor2 input;
  std::vector<BlockCache> blocks;
  Tensor2 hidden;    // input of the projection
  Tensor2 embedded;  // final output
  Tensor2 norms;     // n x 1 pre-normalization norms
};

Tensor2 encoder_forward(const Encoder& enc, const Tensor2& x, bool normalize, std::optional<std::uint64_t> dropout_key,
                        Side side, EncoderCache* cache) {
  if (x.cols() != enc.input_width()) {
    throw Error(ErrorCode::ShapeMismatch, "encoder expects width " + std::to_string(enc.input_width()) + ", got " +
                                              std::to_string(x.cols()));
  }
  g_rows_forwarded.fetch_add(x.rows(), std::memory_order_relaxed);
  Tensor2 h = matmul(x, enc.stem_w);
  add_row_broadcast(h, enc.stem_b);
  if (cache != nullptr) cache->input = x;
  for (std::size_t l = 0; l < enc.blocks.size(); ++l) {
    std::optional<Stream> rng;
    if (dropout_key) rng.emplace(*dropout_key, std::initializer_list<std::uint64_t>{side_tag(side), l});
    auto out = block_forward(enc.blocks[l], h, dropout_key.has_value(), rng ? &*rng : nullptr);
    if (cache != nullptr) cache->blocks.push_back(std::move(out.cache));
    h = std::move(out.y);
  }
  Tensor2 r = matmul(h, enc.proj_w);
  add_row_broadcast(r, enc.proj_b);
  if (cache != nullptr) cache->hidden = std::move(h);
  if (normalize) {
    Tensor2 norms(r.rows(), 1);
    for (std::size_t i = 0; i < r.rows(); ++i) {
      auto row = r.row(i);
      double ss = 0.0;
      for (double v : row) ss += v * v;
      const double n = std::sqrt(ss);
      norms(i, 0) = n;
      for (double& v : row) v = n > 0.0 ? v / n : 0.0;
    }
    if (cache != nullptr) cache->norms = std::move(norms);
  }
  require_finite(r, "encoder_forward");
  if (cache != nullptr) cache->embedded = r;
  return r;
}

Encoder encoder_backward(const Encoder& enc, const EncoderCache& cache, const Tensor2& de, bool normalize) {
  Tensor2 dr = de;
  if (normalize) {
    for (std::size_t i = 0; i < dr.rows(); ++i) {
      const double n = cache.norms(i, 0);
      auto e = cache.embedded.row(i);
      auto g = dr.row(i);
      if (n <= 0.0) {
        std::fill(g.begin(), g.end(), 0.0);
        continue;
      }
      double eg = 0.0;
      for (std::size_t j = 0; j < g.size(); ++j) eg += e[j] * g[j];
      for (std::size_t j = 0; j < g.size(); ++j) g[j] = (g[j] - e[j] * eg) / n;
    }
  }
  Encoder grads;
  grads.proj_w = matmul_tn(cache.hidden, dr);
  grads.proj_b = column_sums(dr);
  Tensor2 dh = matmul_nt(dr, enc.proj_w);
  grads.blocks.resize(enc.blocks.size());
  for (std::size_t l = enc.blocks.size(); l-- > 0;) {
    auto back = block_backward(enc.blocks[l], cache.blocks[l], dh);
    LayerParams& g = grads.blocks[l];
    g.ln_gain = std::move(back.grads.ln_gain);
    g.ln_bias = std::move(back.grads.ln_bias);
    g.w1 = std::move(back.grads.w1);
    g.b1 = std::move(back.grads.b1);
    g.w2 = std::move(back.grads.w2);
    g.b2 = std::move(back.grads.b2);
    dh = std::move(back.dx);
  }
  grads.stem_w = matmul_tn(cache.input, dh);
  grads.stem_b = column_sums(dh);
  return grads;
}

Encoder zeros_like(const Encoder& enc) {
  Encoder z;
  z.stem_w = Tensor2(enc.stem_w.rows(), enc.stem_w.cols());
  z.stem_b = Tensor2(enc.stem_b.rows(), enc.stem_b.cols());
  for (const auto& b : enc.blocks) {
    LayerParams p;
    p.ln_gain = Tensor2(b.ln_gain.rows(), b.ln_gain.cols());
    p.ln_bias = Tensor2(b.ln_bias.rows(), b.ln_bias.cols());
    p.w1 = Tensor2(b.w1.rows(), b.w1.cols());
    p.b1 = Tensor2(b.b1.rows(), b.b1.cols());
    p.w2 = Tensor2(b.w2.rows(), b.w2.cols());
    p.b2 = Tensor2(b.b2.rows(), b.b2.cols());
    p.dropout = b.dropout;
    z.blocks.push_back(std::move(p));
  }
  z.proj_w = Tensor2(enc.proj_w.rows(), enc.proj_w.cols());
  z.proj_b = Tensor2(enc.proj_b.rows(), enc.proj_b.cols());
  return z;
}

const Encoder& encoder_for(const ModelWeights& w, Side side) { return side == Side::A ? w.a : w.b; }

}  // namespace

// ---------------------------------------------------------------------------

void DualEncoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::Usage, msg); };
  if (input_width_a == 0 || input_width_b == 0) fail("input widths must be positive");
  if (embed_dim == 0) fail("embed_dim must be positive");
  for (std::size_t w : block_widths) {
    if (w == 0) fail("block widths must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(init_temperature > 0.0) || !std::isfinite(init_temperature)) fail("init_temperature must be positive");
  if (!std::isfinite(init_bias)) fail("init_bias must be finite");
  if (batch_size < 2) fail("batch_size must be at least 2");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) fail("ema_decay must lie in [0, 1)");
  if (!(adam.lr > 0.0)) fail("learning rate must be positive");
  if (threads == 0) fail("threads must be positive");
}

nlohmann::json DualEncoderConfig::to_json() const {
  return nlohmann::json{
      {"input_width_a", input_width_a},
      {"input_width_b", input_width_b},
      {"block_widths", block_widths},
      {"embed_dim", embed_dim},
      {"dropout", dropout},
      {"normalize_embeddings", normalize_embeddings},
      {"init_temperature", init_temperature},
      {"init_bias", init_bias},
      {"batch_size", batch_size},
      {"epochs", epochs},
      {"ema_decay", ema_decay},
      {"ema_warmup", ema_warmup},
      {"lr", adam.lr},
      {"beta1", adam.beta1},
      {"beta2", adam.beta2},
      {"adam_eps", adam.eps},
      {"seed", seed},
  };
}

DualEncoderConfig DualEncoderConfig::from_json(const nlohmann::json& j) {
  DualEncoderConfig c;
  try {
    c.input_width_a = j.at("input_width_a").get<std::size_t>();
    c.input_width_b = j.at("input_width_b").get<std::size_t>();
    c.block_widths = j.at("block_widths").get<std::vector<std::size_t>>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.normalize_embeddings = j.at("normalize_embeddings").get<bool>();
    c.init_temperature = j.at("init_temperature").get<double>();
    c.init_bias = j.at("init_bias").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.ema_decay = j.at("ema_decay").get<double>();
    c.ema_warmup = j.at("ema_warmup").get<bool>();
    c.adam.lr = j.at("lr").get<double>();
    c.adam.beta1 = j.at("beta1").get<double>();
    c.adam.beta2 = j.at("beta2").get<double>();
    c.adam.eps = j.at("adam_eps").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("model config: ") + e.what());
  }
  return c;
}

double ModelWeights::temperature() const { return std::exp(log_temperature(0, 0)); }

std::vector<Tensor2*> ModelWeights::tensors() {
  auto out = encoder_tensors(a);
  for (Tensor2* t : encoder_tensors(b)) out.push_back(t);
  out.push_back(&log_temperature);
  out.push_back(&bias);
  return out;
}

std::vector<const Tensor2*> ModelWeights::tensors() const {
  auto mut = const_cast<ModelWeights*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> ModelWeights::tensor_names() const {
  auto out = encoder_names(a, "a.");
  for (auto& n : encoder_names(b, "b.")) out.push_back(std::move(n));
  out.push_back("log_temperature");
  out.push_back("bias");
  return out;
}

ModelWeights ModelWeights::zeros_like() const {
  ModelWeights z;
  z.a = dualmatch::zeros_like(a);
  z.b = dualmatch::zeros_like(b);
  return z;
}

DualEncoderModel DualEncoderModel::initialize(const DualEncoderConfig& config) {
  config.validate();
  DualEncoderModel m;
  m.config = config;
  m.live.a = init_encoder(config, config.input_width_a, Side::A);
  m.live.b = init_encoder(config, config.input_width_b, Side::B);
  m.live.log_temperature(0, 0) = std::log(config.init_temperature);
  m.live.bias(0, 0) = config.init_bias;
  m.ema = m.live;
  return m;
}

std::uint64_t encoder_rows_forwarded() { return g_rows_forwarded.load(); }
void reset_encoder_rows_forwarded() { g_rows_forwarded.store(0); }

Tensor2 embed(const DualEncoderModel& model, const Tensor2& x, Side side, bool use_ema) {
  const Encoder& enc = encoder_for(model.weights(use_ema), side);
  const bool normalize = model.config.normalize_embeddings;
  const std::size_t threads = std::min<std::size_t>(model.config.threads, std::max<std::size_t>(1, x.rows() / 64));
  if (threads <= 1) return encoder_forward(enc, x, normalize, std::nullopt, side, nullptr);

  // Rows are independent in eval mode, so chunks reproduce the one-shot result.
  const std::size_t n = x.rows();
  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<Tensor2> parts(threads);
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        const std::size_t lo = std::min(n, t * chunk);
        const std::size_t hi = std::min(n, lo + chunk);
        std::vector<std::size_t> rows(hi - lo);
        std::iota(rows.begin(), rows.end(), lo);
        parts[t] = encoder_forward(enc, gather_rows(x, rows), normalize, std::nullopt, side, nullptr);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  Tensor2 out(n, model.config.embed_dim);
  std::size_t r = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows(); ++i, ++r) std::copy(p.row(i).begin(), p.row(i).end(), out.row(r).begin());
  }
  return out;
}

double softplus(double x) {
  // log(1 + e^x) without overflow.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor2 pair_logits(const Tensor2& h, const Tensor2& u, double t, double b) {
  if (h.cols() != u.cols()) throw Error(ErrorCode::ShapeMismatch, "embedding widths differ");
  Tensor2 s = matmul_nt(h, u);
  for (double& v : s.values()) v = t * v - b;
  return s;
}

double pair_logit(std::span<const double> h, std::span<const double> u, double t, double b) {
  return t * dot(h, u) - b;
}

SigmoidLoss sigmoid_loss(const Tensor2& logits, const Tensor2& labels, std::span<const std::uint8_t> masked) {
  require_same_shape(logits, labels, "sigmoid_loss");
  if (!masked.empty() && masked.size() != logits.size()) {
    throw Error(ErrorCode::ShapeMismatch, "mask size does not match the logits");
  }
  SigmoidLoss out;
  out.dlogits = Tensor2(logits.rows(), logits.cols());
  const double inv_rows = 1.0 / static_cast<double>(std::max<std::size_t>(1, logits.rows()));
  std::size_t active = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!masked.empty() && masked[i] != 0) continue;
    ++active;
    const double z = labels.values()[i];
    const double m = -z * logits.values()[i];
    out.loss += softplus(m);
    out.dlogits.values()[i] = -z * sigmoid(m) * inv_rows;
  }
  if (active == 0 && logits.size() > 0) throw Error(ErrorCode::AllMasked, "every pair in the batch is masked");
  out.loss *= inv_rows;
  return out;
}

BatchLoss batch_loss(const ModelWeights& weights, const DualEncoderConfig& config, const Tensor2& xa,
                     const Tensor2& xb, const Tensor2& labels, std::span<const std::uint8_t> masked,
                     std::optional<std::uint64_t> dropout_key) {
  const bool normalize = config.normalize_embeddings;
  EncoderCache ca;
  EncoderCache cb;
  const Tensor2 h = encoder_forward(weights.a, xa, normalize, dropout_key, Side::A, &ca);
  const Tensor2 u = encoder_forward(weights.b, xb, normalize, dropout_key, Side::B, &cb);
  const double t = weights.temperature();
  const double b = weights.bias_value();
  const Tensor2 s = matmul_nt(h, u);
  Tensor2 logits(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.size(); ++i) logits.values()[i] = t * s.values()[i] - b;

  const SigmoidLoss sl = sigmoid_loss(logits, labels, masked);
  BatchLoss out;
  out.loss = sl.loss;
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::NonFiniteLoss, "batch loss is not finite");

  const Tensor2& g = sl.dlogits;
  Tensor2 ds(g.rows(), g.cols());
  double dlog_t = 0.0;
  double db = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    ds.values()[i] = t * g.values()[i];
    dlog_t += g.values()[i] * s.values()[i];
    db -= g.values()[i];
  }
  const Tensor2 dh = matmul(ds, u);
  const Tensor2 du = matmul_tn(ds, h);
  out.grads.a = encoder_backward(weights.a, ca, dh, normalize);
  out.grads.b = encoder_backward(weights.b, cb, du, normalize);
  out.grads.log_temperature(0, 0) = t * dlog_t;
  out.grads.bias(0, 0) = db;
  return out;
}

// ---------------------------------------------------------------------------

TrainResult train(const DualEncoderConfig& config, const EncodedMatrix& xa, const EncodedMatrix& xb,
                  const PairLabelSet& labels, const ValidationData* val,
                  const std::function<void(const TrainLogEntry&)>& on_epoch) {
  if (xa.row_ids != xb.row_ids) {
    throw Error(ErrorCode::LabelRowMismatch, "training matrices must cover the same co-occurring rows");
  }
  const std::size_t n = xa.num_rows();
  if (n < 2) throw Error(ErrorCode::EmptySubset, "training needs at least two rows");
  DualEncoderConfig cfg = config;
  cfg.input_width_a = xa.num_features();
  cfg.input_width_b = xb.num_features();

  TrainResult result;
  DualEncoderModel model = DualEncoderModel::initialize(cfg);
  const auto live_ptrs = model.live.tensors();
  const auto ema_ptrs = model.ema.tensors();
  const std::vector<const Tensor2*> live_const(live_ptrs.begin(), live_ptrs.end());
  OptimizerState opt = make_optimizer(live_const, cfg.adam);

  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  bool have_best = false;
  result.best_val_ap = -1.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Stream shuffle_rng(cfg.seed, {kShuffleTag, epoch});
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      if (stop - start < 2) break;
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const std::size_t m = batch.size();
      Tensor2 ba = gather_rows(xa.values, batch);
      Tensor2 bb = gather_rows(xb.values, batch);
      Tensor2 z(m, m);
      std::vector<std::uint8_t> mask(m * m, 0);
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t ra = xa.row_ids[batch[i]];
        for (std::size_t j = 0; j < m; ++j) {
          const std::size_t rb = xb.row_ids[batch[j]];
          z(i, j) = labels.is_positive(ra, rb) ? 1.0 : -1.0;
          mask[i * m + j] = labels.is_excluded(ra, rb) ? 1 : 0;
        }
      }
      const BatchLoss bl =
          batch_loss(model.live, cfg, ba, bb, z, mask, stream_key(cfg.seed, {kDropoutTag, step}));
      const auto grad_ptrs = const_cast<ModelWeights&>(bl.grads).tensors();
      const std::vector<const Tensor2*> grads(grad_ptrs.begin(), grad_ptrs.end());
      adam_step(opt, live_ptrs, grads);
      double mu = cfg.ema_decay;
      if (cfg.ema_warmup) {
        mu = std::min(mu, (1.0 + static_cast<double>(step)) / (10.0 + static_cast<double>(step)));
      }
      ema_update(ema_ptrs, live_const, mu);

      TrainLogEntry entry;
      entry.epoch = epoch;
      entry.step = step;
      entry.loss = bl.loss;
      entry.val_ap = std::numeric_limits<double>::quiet_NaN();
      entry.temperature = model.live.temperature();
      entry.bias = model.live.bias_value();
      result.log.push_back(entry);
      ++step;
    }

    if (!result.log.empty() && val != nullptr && val->pairs != nullptr) {
      const auto scores = score_labeled_pairs(model, *val->pairs, *val->a, *val->b, true);
      const auto lab = val->pairs->labels();
      const double ap = average_precision(scores, lab);
      result.log.back().val_ap = ap;
      if (!have_best || ap > result.best_val_ap) {
        have_best = true;
        result.best_val_ap = ap;
        result.best_epoch = epoch;
        result.model = model;
      }
    }
    if (on_epoch && !result.log.empty()) on_epoch(result.log.back());
  }
  if (!have_best) {
    result.model = std::move(model);
    result.best_epoch = cfg.epochs == 0 ? 0 : cfg.epochs - 1;
    result.best_val_ap = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

// ---------------------------------------------------------------------------

MatchScoreMatrix score_pairs(const DualEncoderModel& model, const Tensor2& xa, const Tensor2& xb, bool use_ema) {
  const Tensor2 h = embed(model, xa, Side::A, use_ema);
  const Tensor2 u = embed(model, xb, Side::B, use_ema);
  const ModelWeights& w = model.weights(use_ema);
  MatchScoreMatrix out;
  out.logits = pair_logits(h, u, w.temperature(), w.bias_value());
  out.probabilities = Tensor2(out.logits.rows(), out.logits.cols());
  const double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  for (std::size_t i = 0; i < out.logits.size(); ++i) {
    out.probabilities.values()[i] = std::clamp(sigmoid(out.logits.values()[i]), lo, hi);
  }
  return out;
}

std::vector<double> score_pair_list(const DualEncoderModel& model, const Tensor2& xa, const Tensor2& xb,
                                    std::span<const std::pair<std::size_t, std::size_t>> pairs, bool use_ema) {
  for (const auto& [i, j] : pairs) {
    if (i >= xa.rows() || j >= xb.rows()) throw Error(ErrorCode::ShapeMismatch, "pair index out of range");
  }
  const Tensor2 h = embed(model, xa, Side::A, use_ema);
  const Tensor2 u = embed(model, xb, Side::B, use_ema);
  const ModelWeights& w = model.weights(use_ema);
  const double t = w.temperature();
  const double b = w.bias_value();
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [i, j] : pairs) out.push_back(pair_logit(h.row(i), u.row(j), t, b));
  return out;
}

std::vector<double> score_labeled_pairs(const DualEncoderModel& model, const LabeledPairSet& set,
                                        const EncodedMatrix& xa, const EncodedMatrix& xb, bool use_ema) {
  auto index_of = [](const std::vector<std::size_t>& ids) {
    std::vector<std::pair<std::size_t, std::size_t>> idx;
    idx.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) idx.emplace_back(ids[i], i);
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  const auto ia = index_of(xa.row_ids);
  const auto ib = index_of(xb.row_ids);
  auto lookup = [](const std::vector<std::pair<std::size_t, std::size_t>>& idx, std::size_t row) {
    auto it = std::lower_bound(idx.begin(), idx.end(), std::make_pair(row, std::size_t{0}));
    if (it == idx.end() || it->first != row) {
      throw Error(ErrorCode::LabelRowMismatch, "labeled pair references row " + std::to_string(row) +
                                                   " absent from the encoded matrix");
    }
    return it->second;
  };
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(set.size());
  for (const auto& p : set.pairs) pairs.emplace_back(lookup(ia, p.row_a), lookup(ib, p.row_b));
  return score_pair_list(model, xa.values, xb.values, pairs, use_ema);
}

// ---------------------------------------------------------------------------
// Checkpoints: "DUALMTCH" | u32 version | u32 crc32(payload) | u64 payload size | payload.
// Payload: u64 json size | config json | u64 array count | arrays.
// Array: u32 name size | name | u64 rows | u64 cols | doubles.

namespace {

constexpr char kMagic[8] = {'D', 'U', 'A', 'L', 'M', 'T', 'C', 'H'};
constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 8;

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::CorruptFile, "checkpoint payload is truncated");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(std::string_view data) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

}  // namespace

void save_checkpoint(const DualEncoderModel& model, const std::filesystem::path& path) {
  std::string payload;
  const std::string cfg = model.config.to_json().dump();
  put<std::uint64_t>(payload, cfg.size());
  payload += cfg;
  const auto names = model.live.tensor_names();
  const auto live = model.live.tensors();
  const auto ema = model.ema.tensors();
  put<std::uint64_t>(payload, 2 * names.size());
  auto write_array = [&](const std::string& name, const Tensor2& t) {
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(name.size()));
    payload += name;
    put<std::uint64_t>(payload, t.rows());
    put<std::uint64_t>(payload, t.cols());
    payload.append(reinterpret_cast<const char*>(t.values().data()), t.size() * sizeof(double));
  };
  for (std::size_t k = 0; k < names.size(); ++k) write_array("live/" + names[k], *live[k]);
  for (std::size_t k = 0; k < names.size(); ++k) write_array("ema/" + names[k], *ema[k]);

  std::string file(kMagic, sizeof(kMagic));
  put<std::uint32_t>(file, kCheckpointVersion);
  put<std::uint32_t>(file, crc(payload));
  put<std::uint64_t>(file, payload.size());
  file += payload;

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint " + tmp);
    out.write(file.data(), static_cast<std::streamsize>(file.size()));
    if (!out) throw Error(ErrorCode::IoError, "failed writing checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot move checkpoint into place: " + ec.message());
}

DualEncoderModel load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::MissingCheckpoint, "checkpoint not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read checkpoint " + path.string());
  std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (file.size() < kHeaderSize || std::memcmp(file.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::CorruptFile, path.string() + " is not a model checkpoint");
  }
  Reader header(std::string_view(file).substr(sizeof(kMagic), kHeaderSize - sizeof(kMagic)));
  const auto version = header.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  const auto checksum = header.get<std::uint32_t>();
  const auto size = header.get<std::uint64_t>();
  if (file.size() - kHeaderSize != size) throw Error(ErrorCode::CorruptFile, "checkpoint size does not match header");
  const std::string_view payload = std::string_view(file).substr(kHeaderSize);
  if (crc(payload) != checksum) throw Error(ErrorCode::CorruptFile, "checkpoint checksum mismatch");

  Reader r(payload);
  const auto cfg_size = r.get<std::uint64_t>();
  nlohmann::json cfg_json;
  try {
    cfg_json = nlohmann::json::parse(r.bytes(cfg_size));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("checkpoint config: ") + e.what());
  }
  DualEncoderModel model = DualEncoderModel::initialize(DualEncoderConfig::from_json(cfg_json));
  const auto names = model.live.tensor_names();
  const auto live = model.live.tensors();
  const auto ema = model.ema.tensors();
  const auto count = r.get<std::uint64_t>();
  if (count != 2 * names.size()) throw Error(ErrorCode::CorruptFile, "checkpoint array count mismatch");
  auto read_array = [&](const std::string& expected, Tensor2& t) {
    const auto name_size = r.get<std::uint32_t>();
    const std::string name(r.bytes(name_size));
    if (name != expected) throw Error(ErrorCode::CorruptFile, "expected array " + expected + ", found " + name);
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows != t.rows() || cols != t.cols()) throw Error(ErrorCode::CorruptFile, "array " + name + " has wrong shape");
    const auto raw = r.bytes(rows * cols * sizeof(double));
    std::memcpy(t.values().data(), raw.data(), raw.size());
  };
  for (std::size_t k = 0; k < names.size(); ++k) read_array("live/" + names[k], *live[k]);
  for (std::size_t k = 0; k < names.size(); ++k) read_array("ema/" + names[k], *ema[k]);
  if (!r.done()) throw Error(ErrorCode::CorruptFile, "trailing bytes after checkpoint arrays");
  return model;
}

std::string config_hash(const DualEncoderConfig& config) {
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << crc(config.to_json().dump());
  return os.str();
}

void write_train_log(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "epoch,step,loss,val_ap,temperature,bias\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.step << ',' << csv::format_double(e.loss) << ','
        << (std::isnan(e.val_ap) ? std::string() : csv::format_double(e.val_ap)) << ','
        << csv::format_double(e.temperature) << ',' << csv::format_double(e.bias) << '\n';
  }
}

}  // namespace dualmatch
