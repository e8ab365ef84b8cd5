#pragma once

#include "myosub/kernel_mmd.hpp"
#include "myosub/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace myosub {

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kAdadeltaEps = 1e-6;

struct LinearLayer {
  Matrix w;  // out x in
  Vector b;  // out
};

// Shared MLP plumbing (generator, encoder and decoder stacks).
Matrix mlp_forward(const std::vector<LinearLayer>& layers, const Matrix& input,
                   std::vector<Matrix>* pre_cache, std::vector<Matrix>* act_cache);

struct ParamGrads {
  std::vector<Matrix> w;
  std::vector<Vector> b;
};

// Backward pass for mlp_forward; returns grads and (optionally) the gradient
// with respect to the input rows.
ParamGrads mlp_backward(const std::vector<LinearLayer>& layers, const Matrix& input,
                        const std::vector<Matrix>& pre_cache,
                        const std::vector<Matrix>& act_cache, const Matrix& grad_out,
                        Matrix* grad_input);

struct TrainingError : std::runtime_error {
  std::size_t epoch;
  TrainingError(const std::string& what, std::size_t ep)
      : std::runtime_error(what + " (epoch " + std::to_string(ep) + ")"), epoch(ep) {}
};

struct TrainConfig {
  std::size_t epochs = 2000;
  std::size_t batch_size = 500;
  double learning_rate = 1.0;  // Adadelta step multiplier at its native scale
  double decay_rho = 0.99;
  double weight_decay = 0.04;
  std::size_t encoder_period = 5;
  bool kernel_learning = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (!(decay_rho > 0.0 && decay_rho < 1.0)) throw std::invalid_argument("decay_rho must be in (0,1)");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be nonnegative");
    if (encoder_period < 1) throw std::invalid_argument("encoder_period must be positive");
    if (kernel_learning && encoder_period < 2)
      throw std::invalid_argument("encoder_period must be >= 2 with kernel learning");
  }
};

struct GeneratorNet {
  std::vector<std::size_t> layer_dims;  // latent, h1..h4, output
  std::vector<LinearLayer> layers;      // 5 linear maps
  std::uint64_t rng_seed = 0;

  std::size_t latent_dim() const { return layer_dims.front(); }
  std::size_t data_dim() const { return layer_dims.back(); }

  static std::vector<std::size_t> dims_for(std::size_t d);
  static GeneratorNet init(std::size_t d, std::uint64_t seed);
};

SubspaceMask upper_softmax(const Vector& pre_activation);

struct GeneratorForward {
  std::vector<SubspaceMask> masks;
  Matrix relaxed;  // row-wise softmax of the final logits
  Matrix logits;
  std::vector<Matrix> pre_cache;
  std::vector<Matrix> act_cache;
};

GeneratorForward generator_forward_batch(const GeneratorNet& net, const Matrix& z);

// Single-vector form: (mask, relaxed, logits).
std::tuple<SubspaceMask, Vector, Vector> generator_forward(const GeneratorNet& net,
                                                           const Vector& z);

// binary: kernel derivatives evaluated at the binary masks (production
// straight-through). relaxed: the softmax surrogate end to end; this is what
// finite differences validate. The backward path is identical in both modes.
enum class MaskMode { binary, relaxed };

// MMD^2 between two samples plus gradients with respect to the rows of either
// sample (plain Gaussian kernel; used by the training losses and their tests).
struct MmdWithGrads {
  double value = 0.0;
  Matrix grad_a;  // d value / d sample_a rows (empty unless requested)
  Matrix grad_b;
};
MmdWithGrads mmd2_with_grads(const Matrix& sample_a, const Matrix& sample_b,
                             const KernelSpec& spec, MmdVariant variant, bool want_grad_a,
                             bool want_grad_b);

struct VganLoss {
  double loss = 0.0;
  ParamGrads grads;
};

VganLoss vgan_loss_and_grad(const GeneratorNet& net, const Matrix& batch, const Matrix& noise,
                            const KernelSpec& spec,
                            MmdVariant variant = MmdVariant::unbiased_cross_full,
                            MaskMode mode = MaskMode::binary);

struct AdadeltaState {
  std::vector<Matrix> eg2_w, ed2_w;
  std::vector<Vector> eg2_b, ed2_b;
  static AdadeltaState like(const std::vector<LinearLayer>& layers);
};

void adadelta_step(std::vector<LinearLayer>& layers, const ParamGrads& grads,
                   AdadeltaState& state, const TrainConfig& config, std::size_t epoch);

struct AutoencoderNet;  // kernel_learning.hpp

struct TrainResult {
  GeneratorNet net;
  std::unique_ptr<AutoencoderNet> autoencoder;  // set when kernel_learning is on
  std::vector<double> loss_history;             // per-epoch mean of the MMD term

  TrainResult();
  TrainResult(TrainResult&&) noexcept;
  TrainResult& operator=(TrainResult&&) noexcept;
  ~TrainResult();
};

TrainResult train_vgan(const Matrix& data, const TrainConfig& config, const KernelSpec& spec);

LensDistribution sample_lens(const GeneratorNet& net, std::size_t count, std::uint64_t seed);

// Algorithm-level alternation between encoder ascents and generator descents.
struct AlternationSchedule {
  std::size_t iternum_encoder = 1;
  std::size_t iternum_generator = 4;
  std::size_t trained_encoder = 0;
  std::size_t trained_generator = 0;

  enum class Step { encoder, generator };

  Step next() {
    if (trained_encoder < iternum_encoder) {
      ++trained_encoder;
      return Step::encoder;
    }
    ++trained_generator;
    if (trained_generator >= iternum_generator && trained_encoder >= iternum_encoder) {
      trained_encoder = 0;
      trained_generator = 0;
    }
    return Step::generator;
  }
};

}  // namespace myosub
