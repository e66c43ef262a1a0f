#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "dualmatch/metrics.hpp"
#include "dualmatch/model.hpp"
#include "helpers.hpp"

using namespace dualmatch;

namespace {

DualEncoderConfig small_config(std::size_t in_a, std::size_t in_b) {
  DualEncoderConfig c;
  c.input_width_a = in_a;
  c.input_width_b = in_b;
  c.block_widths = {6, 5};
  c.embed_dim = 4;
  c.dropout = 0.2;
  c.seed = 17;
  return c;
}

/// Moves every parameter away from its initialization so t' and b are not at
/// special points and all gradients are generic.
void perturb(ModelWeights& w, std::uint64_t seed) {
  std::uint64_t k = 0;
  for (Tensor2* t : w.tensors()) {
    const Tensor2 noise = test::random_tensor(t->rows(), t->cols(), seed * 1000 + ++k, 0.2);
    for (std::size_t i = 0; i < t->size(); ++i) t->values()[i] += noise.values()[i];
  }
  w.log_temperature(0, 0) = std::log(3.0);
  w.bias(0, 0) = 0.7;
}

EncodedMatrix as_encoded(const Tensor2& values, std::size_t first_row = 0) {
  EncodedMatrix m;
  m.values = values;
  m.row_ids.resize(values.rows());
  std::iota(m.row_ids.begin(), m.row_ids.end(), first_row);
  for (std::size_t c = 0; c < values.cols(); ++c) m.feature_names.push_back({c, "f" + std::to_string(c), {}});
  return m;
}

Tensor2 labels_pm(std::size_t n, std::initializer_list<std::pair<std::size_t, std::size_t>> pos) {
  Tensor2 z(n, n, -1.0);
  for (std::size_t i = 0; i < n; ++i) z(i, i) = 1.0;
  for (auto [i, j] : pos) z(i, j) = 1.0;
  return z;
}

GradCheckReport full_loss_check(const DualEncoderConfig& cfg, std::optional<std::uint64_t> dropout_key,
                                std::size_t coords) {
  auto model = DualEncoderModel::initialize(cfg);
  ModelWeights w = model.live;
  perturb(w, 5);
  const Tensor2 xa = test::random_tensor(8, cfg.input_width_a, 1);
  const Tensor2 xb = test::random_tensor(8, cfg.input_width_b, 2);
  const Tensor2 z = labels_pm(8, {{0, 3}, {5, 1}});
  std::vector<std::uint8_t> mask(64, 0);
  mask[2 * 8 + 6] = 1;
  const auto analytic = batch_loss(w, cfg, xa, xb, z, mask, dropout_key);
  ModelWeights grads = analytic.grads;
  std::vector<NamedTensor> named;
  const auto names = w.tensor_names();
  const auto ps = w.tensors();
  const auto gs = grads.tensors();
  for (std::size_t i = 0; i < ps.size(); ++i) named.push_back({names[i], ps[i], gs[i]});
  return grad_check([&] { return batch_loss(w, cfg, xa, xb, z, mask, dropout_key).loss; }, named, 1e-5, coords, 3);
}

}  // namespace

TEST_CASE("single-pair loss identities") {
  CHECK(std::abs(sigmoid_loss(Tensor2{{0.0}}, Tensor2{{1.0}}).loss - std::log(2.0)) < 1e-12);
  CHECK(std::abs(sigmoid_loss(Tensor2{{1.5}}, Tensor2{{1.0}}).loss - std::log1p(std::exp(-1.5))) < 1e-12);
  CHECK(std::abs(sigmoid_loss(Tensor2{{1.5}}, Tensor2{{-1.0}}).loss - std::log1p(std::exp(1.5))) < 1e-12);
  CHECK(std::abs(sigmoid_loss(Tensor2{{1.5}}, Tensor2{{1.0}}).loss - 0.201413) < 1e-6);
  CHECK(std::abs(sigmoid_loss(Tensor2{{1.5}}, Tensor2{{-1.0}}).loss - 1.701413) < 1e-6);
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("pair logits") {
  const Tensor2 h{{1.0, 0.0}};
  const Tensor2 u{{0.0, 1.0}};
  CHECK(pair_logits(h, u, 10.0, 0.0)(0, 0) == 0.0);
  CHECK(sigmoid(pair_logits(h, u, 10.0, 0.0)(0, 0)) == 0.5);
  const Tensor2 h2{{2.0}};
  const Tensor2 u2{{1.0}};
  CHECK(pair_logit(h2.row(0), u2.row(0), 1.0, 0.5) == 1.5);
  CHECK(sigmoid_loss(pair_logits(h2, u2, 1.0, 0.5), Tensor2{{1.0}}).loss == doctest::Approx(0.201413).epsilon(1e-6));
  const Tensor2 hr = test::random_tensor(3, 4, 1), ur = test::random_tensor(5, 4, 2);
  const Tensor2 l1 = pair_logits(hr, ur, 2.5, 0.3), l2 = pair_logits(hr, ur, 5.0, 0.3);
  for (std::size_t i = 0; i < l1.size(); ++i)
    CHECK(l2.values()[i] + 0.3 == doctest::Approx(2.0 * (l1.values()[i] + 0.3)).epsilon(1e-14));
}

TEST_CASE("property: per-pair loss decreases in z * logit") {
  double prev = std::numeric_limits<double>::infinity();
  for (double x = -30; x <= 30; x += 0.25) {
    const double l = sigmoid_loss(Tensor2{{x}}, Tensor2{{1.0}}).loss;
    CHECK(l < prev);
    CHECK(l == sigmoid_loss(Tensor2{{-x}}, Tensor2{{-1.0}}).loss);
    prev = l;
  }
}

TEST_CASE("masking contract") {
  const Tensor2 logits = test::random_tensor(4, 4, 7, 2.0);
  const Tensor2 z = labels_pm(4, {{1, 2}});
  std::vector<std::uint8_t> off_diag(16, 1);
  for (std::size_t i = 0; i < 4; ++i) off_diag[i * 4 + i] = 0;
  const auto l = sigmoid_loss(logits, z, off_diag);
  double mean_diag = 0;
  for (std::size_t i = 0; i < 4; ++i) mean_diag += softplus(-logits(i, i)) / 4.0;
  CHECK(l.loss == doctest::Approx(mean_diag).epsilon(1e-15));
  for (std::size_t i = 0; i < 16; ++i)
    if (off_diag[i]) CHECK(l.dlogits.values()[i] == 0.0);

  Tensor2 flipped = z;
  flipped(1, 2) = -1.0;
  const auto l2 = sigmoid_loss(logits, flipped, off_diag);
  CHECK(l2.loss == l.loss);
  CHECK(bit_equal(l2.dlogits, l.dlogits));

  std::vector<std::uint8_t> all(16, 1);
  CHECK(test::error_code_of([&] { sigmoid_loss(logits, z, all); }) == ErrorCode::AllMasked);
}

TEST_CASE("masked pair labels never change model gradients") {
  const auto cfg = small_config(3, 3);
  const auto model = DualEncoderModel::initialize(cfg);
  const Tensor2 xa = test::random_tensor(5, 3, 1), xb = test::random_tensor(5, 3, 2);
  std::vector<std::uint8_t> mask(25, 0);
  mask[0 * 5 + 3] = 1;
  Tensor2 z = labels_pm(5, {});
  const auto a = batch_loss(model.live, cfg, xa, xb, z, mask, 9);
  z(0, 3) = 1.0;
  const auto b = batch_loss(model.live, cfg, xa, xb, z, mask, 9);
  CHECK(a.loss == b.loss);
  const auto ga = a.grads.tensors();
  const auto gb = b.grads.tensors();
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(bit_equal(*ga[i], *gb[i]));
}

TEST_CASE("full-loss gradient matches finite differences") {
  SUBCASE("eval mode") { CHECK(full_loss_check(small_config(3, 3), std::nullopt, 0).max_rel_error < 1e-4); }
  SUBCASE("frozen dropout masks") { CHECK(full_loss_check(small_config(3, 4), 1234, 0).max_rel_error < 1e-4); }
  SUBCASE("without embedding normalization") {
    auto cfg = small_config(3, 3);
    cfg.normalize_embeddings = false;
    CHECK(full_loss_check(cfg, 5, 0).max_rel_error < 1e-4);
  }
}

TEST_CASE("embeddings: unit norm, purity, chunking and threading") {
  auto cfg = small_config(3, 2);
  cfg.block_widths = {16, 8};
  cfg.embed_dim = 6;
  const auto model = DualEncoderModel::initialize(cfg);
  Tensor2 x = test::random_tensor(150, 3, 4);
  for (std::size_t c = 0; c < 3; ++c) x(7, c) = x(3, c);
  const Tensor2 e = embed(model, x, Side::A);
  for (std::size_t i = 0; i < e.rows(); ++i) {
    double n = 0;
    for (double v : e.row(i)) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
  }
  for (std::size_t c = 0; c < e.cols(); ++c) CHECK(e(7, c) == e(3, c));

  std::vector<std::size_t> first(70), second(80);
  std::iota(first.begin(), first.end(), 0);
  std::iota(second.begin(), second.end(), 70);
  const Tensor2 e1 = embed(model, gather_rows(x, first), Side::A);
  const Tensor2 e2 = embed(model, gather_rows(x, second), Side::A);
  for (std::size_t i = 0; i < 150; ++i)
    for (std::size_t c = 0; c < e.cols(); ++c) {
      const double v = i < 70 ? e1(i, c) : e2(i - 70, c);
      const double w = e(i, c);
      CHECK(std::memcmp(&v, &w, sizeof v) == 0);
    }

  auto threaded = model;
  threaded.config.threads = 4;
  CHECK(bit_equal(embed(threaded, x, Side::A), e));
  CHECK(test::error_code_of([&] { embed(model, test::random_tensor(3, 5, 1), Side::A); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("scoring structure") {
  auto cfg = small_config(3, 2);
  auto model = DualEncoderModel::initialize(cfg);
  perturb(model.ema, 3);
  const Tensor2 xa = test::random_tensor(6, 3, 1), xb = test::random_tensor(5, 2, 2);
  const auto m = score_pairs(model, xa, xb);

  SUBCASE("probabilities are the sigmoid of logits") {
    for (std::size_t i = 0; i < m.logits.size(); ++i) {
      CHECK(m.probabilities.values()[i] == sigmoid(m.logits.values()[i]));
      CHECK(m.probabilities.values()[i] > 0.0);
      CHECK(m.probabilities.values()[i] < 1.0);
    }
  }
  SUBCASE("normalized logits are bounded by t") {
    const double t = model.ema.temperature(), b = model.ema.bias_value();
    for (double l : m.logits.values()) CHECK(std::abs(l + b) <= t + 1e-12);
  }
  SUBCASE("swapping two A rows swaps the logit rows") {
    Tensor2 swapped = xa;
    for (std::size_t c = 0; c < 3; ++c) std::swap(swapped(1, c), swapped(4, c));
    const auto ms = score_pairs(model, swapped, xb);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(ms.logits(1, j) == m.logits(4, j));
      CHECK(ms.logits(4, j) == m.logits(1, j));
      CHECK(ms.logits(0, j) == m.logits(0, j));
    }
  }
  SUBCASE("sparse mode equals the dense entries") {
    const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 0}, {1, 3}, {5, 4}};
    const auto s = score_pair_list(model, xa, xb, pairs);
    for (std::size_t q = 0; q < pairs.size(); ++q) CHECK(s[q] == m.logits(pairs[q].first, pairs[q].second));
  }
  SUBCASE("ranking per household follows the raw dot products") {
    const Tensor2 h = embed(model, xa, Side::A), u = embed(model, xb, Side::B);
    const Tensor2 dots = matmul_nt(h, u);
    for (std::size_t i = 0; i < 6; ++i) CHECK(rank_descending(dots.row(i)) == rank_descending(m.logits.row(i)));
  }
  SUBCASE("encoder passes scale as n_A + n_B") {
    reset_encoder_rows_forwarded();
    score_pairs(model, xa, xb);
    CHECK(encoder_rows_forwarded() == 11);
  }
}

TEST_CASE("checkpoint round trip, corruption and versioning") {
  test::TempDir dir("ckpt");
  auto model = DualEncoderModel::initialize(small_config(3, 2));
  perturb(model.live, 8);
  perturb(model.ema, 9);
  save_checkpoint(model, dir / "m.ckpt");
  const auto loaded = load_checkpoint(dir / "m.ckpt");
  const Tensor2 xa = test::random_tensor(4, 3, 1), xb = test::random_tensor(4, 2, 2);
  CHECK(bit_equal(score_pairs(model, xa, xb).logits, score_pairs(loaded, xa, xb).logits));
  CHECK(bit_equal(score_pairs(model, xa, xb, false).logits, score_pairs(loaded, xa, xb, false).logits));
  CHECK(config_hash(loaded.config) == config_hash(model.config));

  const std::string bytes = test::read_text(dir / "m.ckpt");
  test::write_text(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 10));
  CHECK(test::error_code_of([&] { load_checkpoint(dir / "trunc.ckpt"); }) == ErrorCode::CorruptFile);

  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x20;
  test::write_text(dir / "flip.ckpt", flipped);
  CHECK(test::error_code_of([&] { load_checkpoint(dir / "flip.ckpt"); }) == ErrorCode::CorruptFile);

  std::string old = bytes;
  const std::uint32_t v0 = 0;
  std::memcpy(old.data() + 8, &v0, sizeof v0);
  test::write_text(dir / "old.ckpt", old);
  try {
    load_checkpoint(dir / "old.ckpt");
    FAIL("old version accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VersionMismatch);
    CHECK(std::string(e.what()).find("version 0") != std::string::npos);
  }

  test::write_text(dir / "junk.ckpt", "not a checkpoint");
  CHECK(test::error_code_of([&] { load_checkpoint(dir / "junk.ckpt"); }) == ErrorCode::CorruptFile);
  CHECK(test::error_code_of([&] { load_checkpoint(dir / "none.ckpt"); }) == ErrorCode::MissingCheckpoint);
}

TEST_CASE("config validation and serialization") {
  auto cfg = small_config(3, 2);
  CHECK(DualEncoderConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
  cfg.batch_size = 1;
  CHECK(test::error_code_of([&] { cfg.validate(); }) == ErrorCode::Usage);
  cfg = small_config(3, 2);
  cfg.dropout = 1.0;
  CHECK(test::error_code_of([&] { cfg.validate(); }) == ErrorCode::Usage);
}

namespace {

struct ToyTask {
  EncodedMatrix train_a, train_b, val_a, val_b;
  PairLabelSet labels;
  LabeledPairSet val_pairs;
};

/// Two well-separated groups on each side; same-group pairs match.
ToyTask separable_task() {
  ToyTask t;
  const std::size_t n = 200, n_val = 40;
  Tensor2 a(n + n_val, 3), b(n + n_val, 2);
  std::vector<int> group(n + n_val);
  Stream s(3, {});
  for (std::size_t i = 0; i < n + n_val; ++i) {
    group[i] = static_cast<int>(i % 2);
    const double c = group[i] ? 3.0 : -3.0;
    for (std::size_t k = 0; k < 3; ++k) a(i, k) = c + 0.5 * s.normal();
    for (std::size_t k = 0; k < 2; ++k) b(i, k) = -c + 0.5 * s.normal();
  }
  std::vector<std::size_t> tr(n), va(n_val);
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(va.begin(), va.end(), n);
  t.train_a = as_encoded(gather_rows(a, tr));
  t.train_b = as_encoded(gather_rows(b, tr));
  t.val_a = as_encoded(gather_rows(a, va), n);
  t.val_b = as_encoded(gather_rows(b, va), n);
  std::vector<int> la(n), lb(n);
  for (std::size_t i = 0; i < n; ++i) la[i] = lb[i] = group[i];
  const auto ca = assignment_from_labels(t.train_a.values, la, 2);
  const auto cb = assignment_from_labels(t.train_b.values, lb, 2);
  std::vector<std::pair<std::size_t, std::size_t>> co;
  for (std::size_t i = 0; i < n; ++i) co.emplace_back(i, i);
  t.labels = expand_pairs(link_clusters(ca, cb, co), ca, cb, tr, tr);
  for (std::size_t i = n; i < n + n_val; ++i)
    for (std::size_t j = n; j < n + n_val; ++j)
      t.val_pairs.pairs.push_back({i, j, group[i] == group[j] ? 1 : 0, PairSource::SyntheticGt});
  return t;
}

}  // namespace

TEST_CASE("training on a separable toy task") {
  const ToyTask t = separable_task();
  auto cfg = small_config(3, 2);
  cfg.block_widths = {16, 16};
  cfg.embed_dim = 8;
  cfg.batch_size = 32;
  cfg.epochs = 20;
  cfg.dropout = 0.0;
  ValidationData val{&t.val_a, &t.val_b, &t.val_pairs};
  const auto r = train(cfg, t.train_a, t.train_b, t.labels, &val);
  CHECK(r.best_val_ap >= 0.99);
  CHECK(r.best_epoch < 20);
  const auto ev = score_labeled_pairs(r.model, t.val_pairs, t.val_a, t.val_b);
  CHECK(average_precision(ev, t.val_pairs.labels()) == doctest::Approx(r.best_val_ap).epsilon(1e-12));

  // Co-occurring pairs outscore a random re-pairing.
  const auto m = score_pairs(r.model, t.train_a.values, t.train_b.values);
  std::vector<std::size_t> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  Stream s(4, {});
  s.shuffle(std::span<std::size_t>(perm));
  double diag = 0, shuffled = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    diag += m.probabilities(i, i);
    shuffled += m.probabilities(i, perm[i]);
  }
  CHECK(diag > shuffled);
}

TEST_CASE("training is deterministic and zero epochs returns the initialization") {
  const ToyTask t = separable_task();
  auto cfg = small_config(3, 2);
  cfg.batch_size = 16;
  cfg.epochs = 2;
  const auto r1 = train(cfg, t.train_a, t.train_b, t.labels);
  const auto r2 = train(cfg, t.train_a, t.train_b, t.labels);
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) CHECK(r1.log[i].loss == r2.log[i].loss);
  const auto p1 = r1.model.ema.tensors();
  const auto p2 = r2.model.ema.tensors();
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(bit_equal(*p1[i], *p2[i]));

  cfg.epochs = 0;
  const auto r0 = train(cfg, t.train_a, t.train_b, t.labels);
  CHECK(r0.log.empty());
  const auto init = DualEncoderModel::initialize([&] {
    auto c = cfg;
    c.input_width_a = 3;
    c.input_width_b = 2;
    return c;
  }());
  const auto a = r0.model.live.tensors();
  const auto b = init.live.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(*a[i], *b[i]));
  CHECK(score_pairs(r0.model, t.val_a.values, t.val_b.values).logits.rows() == 40);
}

TEST_CASE("training rejects misaligned rows") {
  const ToyTask t = separable_task();
  auto cfg = small_config(3, 2);
  EncodedMatrix shifted = t.train_b;
  shifted.row_ids[0] = 999;
  CHECK(test::error_code_of([&] { train(cfg, t.train_a, shifted, t.labels); }) == ErrorCode::LabelRowMismatch);
}
