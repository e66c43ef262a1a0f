#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dualmatch/rng.hpp"
#include "dualmatch/tensor.hpp"

namespace dualmatch {

inline constexpr double kLayerNormEps = 1e-5;

/// Exact GELU: x * Phi(x).
double gelu(double x);
/// d/dx GELU = Phi(x) + x * phi(x).
double gelu_grad(double x);

/// One encoder block: LayerNorm -> Linear -> GELU -> Linear -> Dropout.
/// Linear maps act on row vectors: y = x * W + b with W of shape in x out.
struct LayerParams {
  Tensor2 ln_gain;  // 1 x in
  Tensor2 ln_bias;  // 1 x in
  Tensor2 w1;       // in x width
  Tensor2 b1;       // 1 x width
  Tensor2 w2;       // width x width
  Tensor2 b2;       // 1 x width
  double dropout = 0.0;

  std::size_t in_width() const { return w1.rows(); }
  std::size_t out_width() const { return w2.cols(); }

  /// Parameters in a fixed order with stable names.
  std::vector<Tensor2*> tensors();
  std::vector<const Tensor2*> tensors() const;
  static const std::vector<std::string>& tensor_names();
};

LayerParams init_block(std::size_t in_width, std::size_t width, double dropout, Stream& rng);

struct BlockCache {
  Tensor2 xhat;   // normalized input
  Tensor2 rstd;   // n x 1, 1/sqrt(var + eps)
  Tensor2 z;      // LayerNorm output
  Tensor2 h1;     // pre-activation
  Tensor2 a1;     // GELU(h1)
  Tensor2 mask;   // dropout scale per output entry; empty in eval mode
  std::uint64_t fingerprint = 0;
};

struct BlockOutput {
  Tensor2 y;
  BlockCache cache;
};

/// `rng` drives the dropout mask and is only consulted when `train_mode` is
/// set and dropout > 0.
BlockOutput block_forward(const LayerParams& params, const Tensor2& x, bool train_mode, Stream* rng);

struct BlockGrads {
  Tensor2 ln_gain, ln_bias, w1, b1, w2, b2;

  std::vector<Tensor2*> tensors();
};

struct BlockBackward {
  Tensor2 dx;
  BlockGrads grads;
};

/// Throws StaleCache if `params` changed since the forward pass that filled `cache`.
BlockBackward block_backward(const LayerParams& params, const BlockCache& cache, const Tensor2& dy);

/// Content hash of the block parameters; used to detect stale caches.
std::uint64_t fingerprint(const LayerParams& params);

// ---------------------------------------------------------------------------
// Optimizer and parameter averaging

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig hp;
  std::vector<Tensor2> m;
  std::vector<Tensor2> v;
  std::uint64_t step = 0;
};

OptimizerState make_optimizer(std::span<const Tensor2* const> params, const AdamConfig& hp);

/// Bias-corrected adaptive-moment update, in place.
void adam_step(OptimizerState& state, std::span<Tensor2* const> params, std::span<const Tensor2* const> grads);

struct EmaState {
  std::vector<Tensor2> shadow;
  double decay = 0.999;
};

/// Shadow starts as a copy of the live parameters.
EmaState make_ema(std::span<const Tensor2* const> params, double decay);

/// shadow <- mu * shadow + (1 - mu) * live.
void ema_update(EmaState& ema, std::span<const Tensor2* const> params, double mu);
void ema_update(std::span<Tensor2* const> shadow, std::span<const Tensor2* const> params, double mu);

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct NamedTensor {
  std::string name;
  Tensor2* value;
  const Tensor2* analytic_grad;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;
};

/// Central differences of the scalar `f` against analytic gradients. The
/// relative error of one coordinate is |a - n| / max(|a|, |n|, floor).
/// With `max_coords_per_tensor` > 0 a seeded sample of coordinates is checked.
GradCheckReport grad_check(const std::function<double()>& f, std::span<const NamedTensor> params,
                           double eps = 1e-5, std::size_t max_coords_per_tensor = 0,
                           std::uint64_t seed = 0, double floor = 1e-4);

}  // namespace dualmatch
