#pragma once

#include "myosub/generator.hpp"

#include <memory>

namespace myosub {

// Encoder/decoder pair for the adversarial composed kernel. Hidden layers are
// leaky ReLU, output layers are identity on both sides.
struct AutoencoderNet {
  std::vector<std::size_t> encoder_dims;  // [d, ceil(d/2), ceil(d/4), ceil(d/8)], floored at 1
  std::vector<LinearLayer> encoder;
  std::vector<LinearLayer> decoder;
  std::uint64_t rng_seed = 0;

  std::size_t data_dim() const { return encoder_dims.front(); }
  std::size_t latent_dim() const { return encoder_dims.back(); }

  static std::vector<std::size_t> dims_for(std::size_t d);
  static AutoencoderNet init(std::size_t d, std::uint64_t seed);

  Matrix encode_rows(const Matrix& rows) const;
  Matrix decode_rows(const Matrix& latents) const;
};

Vector encode(const AutoencoderNet& ae, const Vector& x);

// Sum of unsquared Euclidean reconstruction errors over rows.
double reconstruction_error(const AutoencoderNet& ae, const Matrix& rows);

class AutoencoderRowEncoder : public RowEncoder {
 public:
  explicit AutoencoderRowEncoder(std::shared_ptr<const AutoencoderNet> ae) : ae_(std::move(ae)) {}
  Matrix encode_rows(const Matrix& rows) const override { return ae_->encode_rows(rows); }
  std::size_t input_dim() const override { return ae_->data_dim(); }
  std::size_t output_dim() const override { return ae_->latent_dim(); }

 private:
  std::shared_ptr<const AutoencoderNet> ae_;
};

struct KlLossGrads {
  double loss = 0.0;       // mmd_term - recon_term
  double mmd_term = 0.0;   // MMD^2 under the composed kernel
  double recon_term = 0.0;
  ParamGrads gen_grads;     // d mmd_term / d theta (descend)
  ParamGrads encoder_grads; // d loss / d phi_enc (ascend by negating)
  ParamGrads decoder_grads; // d loss / d phi_dec
};

// base_spec carries the Gaussian bandwidth in encoder space (no composed
// encoder; the composition happens here explicitly so gradients flow).
KlLossGrads kl_loss_and_grads(const GeneratorNet& gen, const AutoencoderNet& ae,
                              const Matrix& batch, const Matrix& noise,
                              const KernelSpec& base_spec,
                              MmdVariant variant = MmdVariant::unbiased_cross_full,
                              MaskMode mode = MaskMode::binary);

double median_heuristic_in_encoder_space(const AutoencoderNet& ae, const Matrix& data);

}  // namespace myosub
