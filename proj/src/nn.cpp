#include "dualmatch/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>

#include "dualmatch/errors.hpp"

namespace dualmatch {

double gelu(double x) {
  return 0.5 * x * std::erfc(-x / std::numbers::sqrt2);
}

double gelu_grad(double x) {
  const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

std::vector<Tensor2*> LayerParams::tensors() {
  return {&ln_gain, &ln_bias, &w1, &b1, &w2, &b2};
}

std::vector<const Tensor2*> LayerParams::tensors() const {
  return {&ln_gain, &ln_bias, &w1, &b1, &w2, &b2};
}

const std::vector<std::string>& LayerParams::tensor_names() {
  static const std::vector<std::string> names{"ln_gain", "ln_bias", "w1", "b1", "w2", "b2"};
  return names;
}

std::vector<Tensor2*> BlockGrads::tensors() {
  return {&ln_gain, &ln_bias, &w1, &b1, &w2, &b2};
}

LayerParams init_block(std::size_t in_width, std::size_t width, double dropout, Stream& rng) {
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw Error(ErrorCode::ShapeMismatch, "dropout must lie in [0, 1)");
  }
  LayerParams p;
  p.ln_gain = Tensor2(1, in_width, 1.0);
  p.ln_bias = Tensor2(1, in_width, 0.0);
  p.w1 = Tensor2(in_width, width);
  p.b1 = Tensor2(1, width);
  p.w2 = Tensor2(width, width);
  p.b2 = Tensor2(1, width);
  p.dropout = dropout;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_width));
  for (double& w : p.w1.values()) w = s1 * rng.normal();
  const double s2 = 1.0 / std::sqrt(static_cast<double>(width));
  for (double& w : p.w2.values()) w = s2 * rng.normal();
  return p;
}

std::uint64_t fingerprint(const LayerParams& params) {
  // FNV-1a over the raw bytes.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor2* t : params.tensors()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t->values().data());
    for (std::size_t i = 0; i < t->size() * sizeof(double); ++i) {
      h = (h ^ bytes[i]) * 0x100000001b3ULL;
    }
    h = (h ^ t->rows()) * 0x100000001b3ULL;
  }
  std::uint64_t dropout_bits = 0;
  std::memcpy(&dropout_bits, &params.dropout, sizeof(dropout_bits));
  return (h ^ dropout_bits) * 0x100000001b3ULL;
}

BlockOutput block_forward(const LayerParams& params, const Tensor2& x, bool train_mode, Stream* rng) {
  const std::size_t n = x.rows();
  const std::size_t in = params.in_width();
  if (x.cols() != in) {
    throw Error(ErrorCode::ShapeMismatch, "block expects width " + std::to_string(in) + ", got " +
                                              std::to_string(x.cols()));
  }
  BlockOutput out;
  BlockCache& c = out.cache;
  c.fingerprint = fingerprint(params);
  c.xhat = Tensor2(n, in);
  c.rstd = Tensor2(n, 1);
  c.z = Tensor2(n, in);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(in);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(in);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    c.rstd(i, 0) = rstd;
    for (std::size_t j = 0; j < in; ++j) {
      const double xh = (row[j] - mean) * rstd;
      c.xhat(i, j) = xh;
      c.z(i, j) = xh * params.ln_gain(0, j) + params.ln_bias(0, j);
    }
  }

  c.h1 = matmul(c.z, params.w1);
  add_row_broadcast(c.h1, params.b1);
  c.a1 = Tensor2(c.h1.rows(), c.h1.cols());
  for (std::size_t i = 0; i < c.h1.size(); ++i) c.a1.values()[i] = gelu(c.h1.values()[i]);

  out.y = matmul(c.a1, params.w2);
  add_row_broadcast(out.y, params.b2);

  if (train_mode && params.dropout > 0.0) {
    if (rng == nullptr) throw Error(ErrorCode::Internal, "train-mode dropout needs a random stream");
    const double keep_scale = 1.0 / (1.0 - params.dropout);
    c.mask = Tensor2(out.y.rows(), out.y.cols());
    for (std::size_t i = 0; i < c.mask.size(); ++i) {
      const double m = rng->uniform() < params.dropout ? 0.0 : keep_scale;
      c.mask.values()[i] = m;
      out.y.values()[i] *= m;
    }
  }
  require_finite(out.y, "block_forward");
  return out;
}

BlockBackward block_backward(const LayerParams& params, const BlockCache& cache, const Tensor2& dy) {
  if (cache.fingerprint != fingerprint(params)) {
    throw Error(ErrorCode::StaleCache, "block parameters changed since the forward pass");
  }
  if (dy.rows() != cache.h1.rows() || dy.cols() != params.out_width()) {
    throw Error(ErrorCode::ShapeMismatch, "upstream gradient shape does not match the block output");
  }
  const std::size_t n = dy.rows();
  const std::size_t in = params.in_width();
  BlockBackward out;
  BlockGrads& g = out.grads;

  Tensor2 dh2 = dy;
  if (!cache.mask.empty()) {
    for (std::size_t i = 0; i < dh2.size(); ++i) dh2.values()[i] *= cache.mask.values()[i];
  }
  g.w2 = matmul_tn(cache.a1, dh2);
  g.b2 = column_sums(dh2);
  Tensor2 dh1 = matmul_nt(dh2, params.w2);
  for (std::size_t i = 0; i < dh1.size(); ++i) dh1.values()[i] *= gelu_grad(cache.h1.values()[i]);
  g.w1 = matmul_tn(cache.z, dh1);
  g.b1 = column_sums(dh1);
  Tensor2 dz = matmul_nt(dh1, params.w1);

  g.ln_gain = Tensor2(1, in);
  g.ln_bias = Tensor2(1, in);
  out.dx = Tensor2(n, in);
  std::vector<double> dxhat(in);
  for (std::size_t i = 0; i < n; ++i) {
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t j = 0; j < in; ++j) {
      const double d = dz(i, j);
      g.ln_gain(0, j) += d * cache.xhat(i, j);
      g.ln_bias(0, j) += d;
      dxhat[j] = d * params.ln_gain(0, j);
      mean_d += dxhat[j];
      mean_dx += dxhat[j] * cache.xhat(i, j);
    }
    mean_d /= static_cast<double>(in);
    mean_dx /= static_cast<double>(in);
    const double rstd = cache.rstd(i, 0);
    for (std::size_t j = 0; j < in; ++j) {
      out.dx(i, j) = rstd * (dxhat[j] - mean_d - cache.xhat(i, j) * mean_dx);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

OptimizerState make_optimizer(std::span<const Tensor2* const> params, const AdamConfig& hp) {
  OptimizerState state;
  state.hp = hp;
  for (const Tensor2* p : params) {
    state.m.emplace_back(p->rows(), p->cols());
    state.v.emplace_back(p->rows(), p->cols());
  }
  return state;
}

void adam_step(OptimizerState& state, std::span<Tensor2* const> params, std::span<const Tensor2* const> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer parameter count mismatch");
  }
  ++state.step;
  const auto& hp = state.hp;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor2& p = *params[k];
    const Tensor2& g = *grads[k];
    require_same_shape(p, g, "adam_step");
    require_same_shape(p, state.m[k], "adam_step moments");
    auto pv = p.values();
    auto gv = g.values();
    auto mv = state.m[k].values();
    auto vv = state.v[k].values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      mv[i] = hp.beta1 * mv[i] + (1.0 - hp.beta1) * gv[i];
      vv[i] = hp.beta2 * vv[i] + (1.0 - hp.beta2) * gv[i] * gv[i];
      const double mhat = mv[i] / bc1;
      const double vhat = vv[i] / bc2;
      pv[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
}

EmaState make_ema(std::span<const Tensor2* const> params, double decay) {
  EmaState ema;
  ema.decay = decay;
  for (const Tensor2* p : params) ema.shadow.push_back(*p);
  return ema;
}

void ema_update(EmaState& ema, std::span<const Tensor2* const> params, double mu) {
  std::vector<Tensor2*> shadow;
  for (auto& s : ema.shadow) shadow.push_back(&s);
  ema_update(shadow, params, mu);
}

void ema_update(std::span<Tensor2* const> shadow, std::span<const Tensor2* const> params, double mu) {
  if (params.size() != shadow.size()) throw Error(ErrorCode::ShapeMismatch, "EMA parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(*shadow[k], *params[k], "ema_update");
    auto s = shadow[k]->values();
    auto live = params[k]->values();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = mu * s[i] + (1.0 - mu) * live[i];
  }
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<double()>& f, std::span<const NamedTensor> params,
                           double eps, std::size_t max_coords_per_tensor, std::uint64_t seed, double floor) {
  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const NamedTensor& p = params[t];
    require_same_shape(*p.value, *p.analytic_grad, "grad_check");
    std::vector<std::size_t> coords(p.value->size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_tensor > 0 && coords.size() > max_coords_per_tensor) {
      Stream rng(seed, {0x6c, t});
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      double& theta = p.value->values()[idx];
      const double saved = theta;
      theta = saved + eps;
      const double plus = f();
      theta = saved - eps;
      const double minus = f();
      theta = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double analytic = p.analytic_grad->values()[idx];
      const double abs_err = std::abs(analytic - numeric);
      const double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), floor});
      ++report.coordinates;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err > report.max_rel_error) {
        report.max_rel_error = rel_err;
        report.worst = p.name + "[" + std::to_string(idx) + "]";
      }
    }
  }
  return report;
}

}  // namespace dualmatch
