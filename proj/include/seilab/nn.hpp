#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "seilab/common.hpp"

namespace seilab::nn {

/// Dense row-major value block. The leading dimension is always the batch.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }
  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int batch() const { return shape.empty() ? 0 : shape[0]; }
};

enum class LayerKind {
  dense,
  conv2d,
  conv2d_transpose,
  maxpool,
  upsample,
  flatten,
  batchnorm,
};

enum class Activation { none, relu, sigmoid, softmax };
enum class Padding { same, valid };

struct LayerSpec {
  LayerKind kind;
  int units = 0;    // dense
  int filters = 0;  // conv / conv_transpose
  std::array<int, 2> kernel{1, 1};
  std::array<int, 2> stride{1, 1};
  Padding padding = Padding::same;
  Activation activation = Activation::none;

  static LayerSpec Dense(int units, Activation act = Activation::none);
  static LayerSpec Conv2d(int filters, std::array<int, 2> kernel,
                          std::array<int, 2> stride = {1, 1},
                          Activation act = Activation::none,
                          Padding pad = Padding::same);
  static LayerSpec Conv2dTranspose(int filters, std::array<int, 2> kernel,
                                   std::array<int, 2> stride = {1, 1},
                                   Activation act = Activation::none);
  static LayerSpec MaxPool(std::array<int, 2> window,
                           std::array<int, 2> stride,
                           Activation act = Activation::none);
  static LayerSpec Upsample(std::array<int, 2> factor);
  static LayerSpec Flatten();
  static LayerSpec BatchNorm(Activation act = Activation::none);
};

/// Fixed-topology feed-forward network. All shapes are validated at
/// construction; forward/backward report the offending layer index on any
/// runtime fault. Parameters live in one flat vector so the optimizer,
/// gradient clipping, and checkpoints can treat them uniformly.
class Network {
 public:
  Network(std::vector<int> input_shape, std::vector<LayerSpec> specs,
          std::uint64_t seed);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;
  ~Network();

  const std::vector<int>& input_shape() const { return input_shape_; }
  const std::vector<int>& output_shape() const { return output_shape_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }

  /// Per-sample shapes through the stack (element 0 = input), useful for
  /// architecture conformance checks.
  std::vector<std::vector<int>> shape_schedule() const;

  /// training=true caches activations for backward and lets batchnorm use
  /// batch statistics.
  Tensor forward(const Tensor& batch, bool training = false);

  /// Inference without touching any shared state; safe to call
  /// concurrently on a frozen network.
  Tensor infer(const Tensor& batch) const;

  /// Gradients of the last forward(training=true) pass. Returns the input
  /// gradient; parameter gradients land in param_grads().
  Tensor backward(const Tensor& output_grad);

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& param_grads() { return grads_; }
  /// true for multiplicative weights (L2 applies), false for biases and
  /// batchnorm affine terms.
  const std::vector<bool>& weight_mask() const { return weight_mask_; }

  void zero_grads();

 private:
  struct Impl;
  std::vector<int> input_shape_;
  std::vector<int> output_shape_;
  std::vector<LayerSpec> specs_;
  std::vector<double> params_;
  std::vector<double> grads_;
  std::vector<bool> weight_mask_;
  std::unique_ptr<Impl> impl_;
};

// ---- losses ----

/// Mean over every element of (pred - target)^2.
double mse(const Tensor& pred, const Tensor& target);
Tensor mse_grad(const Tensor& pred, const Tensor& target);

/// Categorical cross entropy with an epsilon floor of 1e-12 inside the
/// log; mean over the batch. Targets are one-hot rows.
double cce(const Tensor& pred, const Tensor& onehot);
Tensor cce_grad(const Tensor& pred, const Tensor& onehot);

/// Binary cross entropy for scalar sigmoid outputs (the GAN discriminator
/// head); target is 0 or 1 per row.
double bce(const Tensor& pred, double target);
Tensor bce_grad(const Tensor& pred, double target);

enum class LossKind { mse, cce };

// ---- training ----

struct TrainConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip = 1.0;  // global-norm threshold
  double l2 = 1e-4;
  int epochs = 100;
  int minibatch = 250;
  std::uint64_t seed = 1;

  void validate() const;
};

/// ADAM state; step() applies L2, global-norm clipping, then the update.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t param_count, const TrainConfig& cfg);
  void step(std::vector<double>& params, const std::vector<double>& grads,
            const std::vector<bool>& weight_mask);
  /// Global L2 norm of the last effective (post-L2, pre-clip) gradient.
  double last_grad_norm() const { return last_norm_; }

 private:
  TrainConfig cfg_;
  std::vector<double> m_, v_;
  std::vector<double> scratch_;
  long t_ = 0;
  double last_norm_ = 0.0;
};

struct TrainResult {
  std::vector<double> loss_curve;  // one entry per epoch
};

/// Minibatch training with a seed-fixed shuffle schedule. Deterministic:
/// identical seeds give identical final weights. Throws processing_error
/// with the epoch index if the loss turns non-finite.
TrainResult train(Network& net, const Tensor& inputs, const Tensor& targets,
                  LossKind loss, const TrainConfig& cfg);

// ---- verification ----

struct GradCheckReport {
  double max_rel_error = 0.0;
  int checked_params = 0;
};

/// Central finite differences on up to `samples` randomly chosen
/// parameters (eps = 1e-5), against the analytic backward pass.
GradCheckReport gradient_check(Network& net, const Tensor& input,
                               const Tensor& target, LossKind loss,
                               int samples = 16, std::uint64_t seed = 99,
                               double eps = 1e-5);

/// Runs the standard per-layer-kind suite; returns the worst report.
GradCheckReport gradcheck_all_layers(std::uint64_t seed = 7);

// ---- persistence ----

/// Single-file container: magic, JSON architecture descriptor (with an
/// fnv1a-64 content hash), then the float32 little-endian parameter blob.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

void write_loss_csv(const TrainResult& result, const std::string& path);

}  // namespace seilab::nn
