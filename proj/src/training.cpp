#include "myosub/generator.hpp"
#include "myosub/kernel_learning.hpp"
#include "myosub/rng.hpp"

#include <cmath>
#include <numeric>

namespace myosub {

TrainResult::TrainResult() = default;
TrainResult::TrainResult(TrainResult&&) noexcept = default;
TrainResult& TrainResult::operator=(TrainResult&&) noexcept = default;
TrainResult::~TrainResult() = default;

namespace {

Matrix gather_rows(const Matrix& data, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), data.cols());
  for (std::size_t i = begin; i < end; ++i)
    out.row(static_cast<Eigen::Index>(i - begin)) =
        data.row(static_cast<Eigen::Index>(order[i]));
  return out;
}

Matrix draw_noise(Rng& rng, std::size_t rows, std::size_t latent) {
  Matrix z(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(latent));
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = rng.uniform01();
  return z;
}

void negate(ParamGrads& g) {
  for (auto& w : g.w) w = -w;
  for (auto& b : g.b) b = -b;
}

}  // namespace

TrainResult train_vgan(const Matrix& data, const TrainConfig& config, const KernelSpec& spec) {
  config.validate();
  spec.validate();
  const std::size_t n = static_cast<std::size_t>(data.rows());
  const std::size_t d = static_cast<std::size_t>(data.cols());
  if (d < 2) throw std::invalid_argument("train_vgan: data dimension must be >= 2");
  if (n < 2) throw std::invalid_argument("train_vgan: need at least 2 rows");

  TrainResult result;
  result.net = GeneratorNet::init(d, Rng::derive(config.seed, 1));
  AdadeltaState gen_state = AdadeltaState::like(result.net.layers);

  AdadeltaState enc_state, dec_state;
  KernelSpec enc_spec;  // plain Gaussian in encoder space
  if (config.kernel_learning) {
    result.autoencoder =
        std::make_unique<AutoencoderNet>(AutoencoderNet::init(d, Rng::derive(config.seed, 2)));
    enc_state = AdadeltaState::like(result.autoencoder->encoder);
    dec_state = AdadeltaState::like(result.autoencoder->decoder);
    // Initial encoder-space bandwidth from a seeded row subsample.
    const std::size_t cap = std::min<std::size_t>(n, 2000);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng sub(Rng::derive(config.seed, 3));
    sub.shuffle(idx);
    idx.resize(cap);
    Matrix sample(static_cast<Eigen::Index>(cap), data.cols());
    for (std::size_t i = 0; i < cap; ++i)
      sample.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(idx[i]));
    enc_spec.bandwidth2 = median_heuristic_in_encoder_space(*result.autoencoder, sample);
  }

  Rng rng(config.seed);
  AlternationSchedule schedule;
  schedule.iternum_encoder = 1;
  schedule.iternum_generator = config.encoder_period - 1;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      if (end - start < 2) continue;  // MMD needs two rows; drop a 1-row tail
      const Matrix batch = gather_rows(data, order, start, end);
      const Matrix noise = draw_noise(rng, end - start, result.net.latent_dim());

      double batch_loss = 0.0;
      if (config.kernel_learning) {
        AutoencoderNet& ae = *result.autoencoder;
        const auto step = schedule.next();
        KlLossGrads kl = kl_loss_and_grads(result.net, ae, batch, noise, enc_spec,
                                           MmdVariant::unbiased_cross_full, MaskMode::binary);
        if (!std::isfinite(kl.loss)) throw TrainingError("non-finite loss", epoch);
        if (step == AlternationSchedule::Step::encoder) {
          negate(kl.encoder_grads);  // ascend the adversarial objective
          negate(kl.decoder_grads);
          adadelta_step(ae.encoder, kl.encoder_grads, enc_state, config, epoch);
          adadelta_step(ae.decoder, kl.decoder_grads, dec_state, config, epoch);
          enc_spec.bandwidth2 = median_heuristic_in_encoder_space(ae, batch);
        } else {
          adadelta_step(result.net.layers, kl.gen_grads, gen_state, config, epoch);
        }
        batch_loss = kl.mmd_term;
      } else {
        VganLoss v = vgan_loss_and_grad(result.net, batch, noise, spec,
                                        MmdVariant::unbiased_cross_full, MaskMode::binary);
        if (!std::isfinite(v.loss)) throw TrainingError("non-finite loss", epoch);
        adadelta_step(result.net.layers, v.grads, gen_state, config, epoch);
        batch_loss = v.loss;
      }
      loss_sum += batch_loss;
      ++batches;
    }
    result.loss_history.push_back(batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0);
  }
  return result;
}

}  // namespace myosub
