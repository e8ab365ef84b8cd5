#include "myosub/kernel_learning.hpp"

#include "myosub/rng.hpp"

#include <cmath>

namespace myosub {

namespace {

constexpr double kNormFloor = 1e-15;

std::vector<LinearLayer> glorot_layers(const std::vector<std::size_t>& dims, Rng& rng) {
  std::vector<LinearLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    LinearLayer layer;
    layer.w.resize(static_cast<Eigen::Index>(dims[l + 1]), static_cast<Eigen::Index>(dims[l]));
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c)
        layer.w(r, c) = bound * (2.0 * rng.uniform01() - 1.0);
    layer.b.resize(static_cast<Eigen::Index>(dims[l + 1]));
    for (Eigen::Index r = 0; r < layer.b.size(); ++r)
      layer.b(r) = bound * (2.0 * rng.uniform01() - 1.0);
    layers.push_back(std::move(layer));
  }
  return layers;
}

Matrix mask_matrix(const std::vector<SubspaceMask>& masks, std::size_t d) {
  Matrix m(static_cast<Eigen::Index>(masks.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < masks.size(); ++r)
    for (std::size_t c = 0; c < d; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          masks[r].bits[c] ? 1.0 : 0.0;
  return m;
}

Matrix softmax_backward(const Matrix& softmax, const Matrix& grad_softmax) {
  Matrix g(softmax.rows(), softmax.cols());
  for (Eigen::Index r = 0; r < softmax.rows(); ++r) {
    const double dot = softmax.row(r).dot(grad_softmax.row(r));
    g.row(r) = softmax.row(r).cwiseProduct(
        grad_softmax.row(r) - Eigen::RowVectorXd::Constant(softmax.cols(), dot));
  }
  return g;
}

void add_grads(ParamGrads& into, const ParamGrads& from) {
  for (std::size_t l = 0; l < into.w.size(); ++l) {
    into.w[l] += from.w[l];
    into.b[l] += from.b[l];
  }
}

}  // namespace

std::vector<std::size_t> AutoencoderNet::dims_for(std::size_t d) {
  auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
  auto at_least_one = [](std::size_t v) { return v == 0 ? std::size_t{1} : v; };
  return {d, at_least_one(ceil_div(d, 2)), at_least_one(ceil_div(d, 4)),
          at_least_one(ceil_div(d, 8))};
}

AutoencoderNet AutoencoderNet::init(std::size_t d, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("autoencoder needs data dimension >= 1");
  AutoencoderNet ae;
  ae.encoder_dims = dims_for(d);
  ae.rng_seed = seed;
  Rng rng(seed);
  ae.encoder = glorot_layers(ae.encoder_dims, rng);
  std::vector<std::size_t> dec_dims(ae.encoder_dims.rbegin(), ae.encoder_dims.rend());
  ae.decoder = glorot_layers(dec_dims, rng);
  return ae;
}

Matrix AutoencoderNet::encode_rows(const Matrix& rows) const {
  if (static_cast<std::size_t>(rows.cols()) != data_dim())
    throw std::invalid_argument("encode: dimension mismatch");
  return mlp_forward(encoder, rows, nullptr, nullptr);
}

Matrix AutoencoderNet::decode_rows(const Matrix& latents) const {
  if (static_cast<std::size_t>(latents.cols()) != latent_dim())
    throw std::invalid_argument("decode: dimension mismatch");
  return mlp_forward(decoder, latents, nullptr, nullptr);
}

Vector encode(const AutoencoderNet& ae, const Vector& x) {
  Matrix rows(1, x.size());
  rows.row(0) = x.transpose();
  return ae.encode_rows(rows).row(0).transpose();
}

double reconstruction_error(const AutoencoderNet& ae, const Matrix& rows) {
  const Matrix rec = ae.decode_rows(ae.encode_rows(rows));
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows.rows(); ++r)
    total += (rows.row(r) - rec.row(r)).norm();
  return total;
}

double median_heuristic_in_encoder_space(const AutoencoderNet& ae, const Matrix& data) {
  return median_heuristic(ae.encode_rows(data));
}

KlLossGrads kl_loss_and_grads(const GeneratorNet& gen, const AutoencoderNet& ae,
                              const Matrix& batch, const Matrix& noise,
                              const KernelSpec& base_spec, MmdVariant variant, MaskMode mode) {
  if (base_spec.composed_encoder)
    throw std::invalid_argument("kl_loss_and_grads composes the encoder itself");
  if (batch.rows() != noise.rows() || batch.rows() < 2)
    throw std::invalid_argument("kl_loss_and_grads: bad batch/noise row counts");

  GeneratorForward fwd = generator_forward_batch(gen, noise);
  const std::size_t d = static_cast<std::size_t>(batch.cols());
  const Matrix m = (mode == MaskMode::binary) ? mask_matrix(fwd.masks, d) : fwd.relaxed;
  const Matrix masked = m.cwiseProduct(batch);

  // Encoder forward on both samples, with caches for backprop.
  std::vector<Matrix> pre_x, act_x, pre_y, act_y, pre_d, act_d;
  const Matrix ex = mlp_forward(ae.encoder, batch, &pre_x, &act_x);
  const Matrix ey = mlp_forward(ae.encoder, masked, &pre_y, &act_y);

  const MmdWithGrads mm = mmd2_with_grads(ex, ey, base_spec, variant, true, true);

  // Reconstruction branch (decoder on the real batch's codes).
  const Matrix dx = mlp_forward(ae.decoder, ex, &pre_d, &act_d);
  double recon = 0.0;
  Matrix grad_dx(dx.rows(), dx.cols());
  for (Eigen::Index r = 0; r < dx.rows(); ++r) {
    const Eigen::RowVectorXd residual = batch.row(r) - dx.row(r);
    const double norm = residual.norm();
    recon += norm;
    // loss = mmd - recon, so d loss / d dx = residual / ||residual||
    grad_dx.row(r) = (norm > kNormFloor) ? (residual / norm).eval()
                                         : Eigen::RowVectorXd::Zero(dx.cols()).eval();
  }

  KlLossGrads out;
  out.mmd_term = mm.value;
  out.recon_term = recon;
  out.loss = mm.value - recon;

  // Generator side: mmd gradient at enc(Y) -> through encoder -> masked rows
  // -> straight-through -> generator parameters.
  Matrix grad_masked;
  const ParamGrads enc_y = mlp_backward(ae.encoder, masked, pre_y, act_y, mm.grad_b, &grad_masked);
  const Matrix grad_softmax = grad_masked.cwiseProduct(batch);
  const Matrix grad_logits = softmax_backward(fwd.relaxed, grad_softmax);
  out.gen_grads =
      mlp_backward(gen.layers, noise, fwd.pre_cache, fwd.act_cache, grad_logits, nullptr);

  // Autoencoder side: d loss / d phi.
  Matrix grad_ex_recon;
  out.decoder_grads = mlp_backward(ae.decoder, ex, pre_d, act_d, grad_dx, &grad_ex_recon);
  const Matrix grad_ex = mm.grad_a + grad_ex_recon;
  out.encoder_grads = mlp_backward(ae.encoder, batch, pre_x, act_x, grad_ex, nullptr);
  add_grads(out.encoder_grads, enc_y);  // Y-path contribution to the encoder
  return out;
}

}  // namespace myosub
