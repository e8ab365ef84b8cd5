#include "myosub/generator.hpp"
#include "myosub/kernel_learning.hpp"
#include "myosub/parallel.hpp"
#include "myosub/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace myosub;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * rng.normal();
  return m;
}

// Surrogate loss evaluated at the relaxed softmax masks; used as the finite
// difference reference for the straight-through machinery.
double surrogate_loss(const GeneratorNet& net, const Matrix& batch, const Matrix& noise,
                      const KernelSpec& spec, MmdVariant variant) {
  const GeneratorForward fwd = generator_forward_batch(net, noise);
  const Matrix masked = fwd.relaxed.cwiseProduct(batch);
  return mmd2(batch, masked, spec, variant).value;
}

double max_relative_gradient_error(GeneratorNet net, const Matrix& batch, const Matrix& noise,
                                   const KernelSpec& spec, MmdVariant variant) {
  const VganLoss analytic =
      vgan_loss_and_grad(net, batch, noise, spec, variant, MaskMode::relaxed);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto check_param = [&](double& param, double grad) {
      const double saved = param;
      param = saved + h;
      const double up = surrogate_loss(net, batch, noise, spec, variant);
      param = saved - h;
      const double down = surrogate_loss(net, batch, noise, spec, variant);
      param = saved;
      const double fd = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(fd), std::abs(grad), 1e-6});
      worst = std::max(worst, std::abs(fd - grad) / scale);
    };
    for (Eigen::Index r = 0; r < net.layers[l].w.rows(); ++r)
      for (Eigen::Index c = 0; c < net.layers[l].w.cols(); ++c)
        check_param(net.layers[l].w(r, c), analytic.grads.w[l](r, c));
    for (Eigen::Index r = 0; r < net.layers[l].b.size(); ++r)
      check_param(net.layers[l].b(r), analytic.grads.b[l](r));
  }
  return worst;
}

}  // namespace

TEST_CASE("upper_softmax worked examples") {
  Vector pre(3);
  pre << std::log(2.0), 0.0, 0.0;  // softmax (0.5, 0.25, 0.25)
  CHECK(upper_softmax(pre).bits == std::vector<std::uint8_t>{1, 0, 0});

  pre << 0.0, 0.0, 0.0;  // exactly uniform -> repair to the first max
  CHECK(upper_softmax(pre).bits == std::vector<std::uint8_t>{1, 0, 0});

  pre << 1.0, 1.0, -50.0;  // softmax ~ (0.5, 0.5, ~0)
  CHECK(upper_softmax(pre).bits == std::vector<std::uint8_t>{1, 1, 0});

  Vector tiny(1);
  tiny << 1.0;
  CHECK_THROWS_AS(upper_softmax(tiny), std::invalid_argument);
}

TEST_CASE("generator architecture dims") {
  CHECK(GeneratorNet::dims_for(3) == std::vector<std::size_t>{1, 1, 1, 2, 3, 3});
  CHECK(GeneratorNet::dims_for(32) == std::vector<std::size_t>{2, 4, 8, 16, 32, 32});
  CHECK(GeneratorNet::dims_for(100) == std::vector<std::size_t>{7, 13, 25, 50, 100, 100});
  CHECK_THROWS_AS(GeneratorNet::init(1, 0), std::invalid_argument);
}

TEST_CASE("generator forward invariants") {
  const GeneratorNet net = GeneratorNet::init(5, 11);
  Rng rng(3);
  Matrix z(8, static_cast<Eigen::Index>(net.latent_dim()));
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = rng.uniform01();
  const GeneratorForward fwd = generator_forward_batch(net, z);

  for (Eigen::Index r = 0; r < fwd.relaxed.rows(); ++r) {
    CHECK(fwd.relaxed.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fwd.masks[static_cast<std::size_t>(r)].ones() >= 1);
    // composition consistency with the single-vector op
    const SubspaceMask direct = upper_softmax(fwd.logits.row(r).transpose());
    CHECK(direct.bits == fwd.masks[static_cast<std::size_t>(r)].bits);
  }

  // zero final layer -> uniform relaxed output
  GeneratorNet zeroed = net;
  zeroed.layers.back().w.setZero();
  zeroed.layers.back().b.setZero();
  const GeneratorForward uf = generator_forward_batch(zeroed, z);
  for (Eigen::Index r = 0; r < uf.relaxed.rows(); ++r)
    for (Eigen::Index c = 0; c < uf.relaxed.cols(); ++c)
      CHECK(uf.relaxed(r, c) == doctest::Approx(0.2).epsilon(1e-12));

  Matrix bad(4, net.latent_dim() + 1);
  bad.setZero();
  CHECK_THROWS_AS(generator_forward_batch(net, bad), std::invalid_argument);
}

TEST_CASE("identity masks reduce the loss to self-MMD") {
  Rng rng(21);
  const Matrix batch = random_matrix(10, 3, rng);
  KernelSpec spec;
  spec.bandwidth2 = 1.5;
  const Matrix ones = Matrix::Ones(batch.rows(), batch.cols());
  const MmdWithGrads mm = mmd2_with_grads(batch, ones.cwiseProduct(batch), spec,
                                          MmdVariant::unbiased_cross_full, false, true);
  const double self_mmd = mmd2(batch, batch, spec).value;
  CHECK(mm.value == doctest::Approx(self_mmd).epsilon(1e-12));
  CHECK(mm.value < 0.0);  // distinct rows make the unbiased self-estimate negative
}

TEST_CASE("mmd2_with_grads matches finite differences on sample entries") {
  Rng rng(33);
  Matrix a = random_matrix(6, 3, rng);
  Matrix b = random_matrix(6, 3, rng);
  KernelSpec spec;
  spec.bandwidth2 = 0.9;
  for (const auto variant :
       {MmdVariant::unbiased_cross_full, MmdVariant::paper_eq6_cross_offdiag}) {
    const MmdWithGrads mm = mmd2_with_grads(a, b, spec, variant, true, true);
    const double h = 1e-6;
    for (Eigen::Index r = 0; r < b.rows(); ++r)
      for (Eigen::Index c = 0; c < b.cols(); ++c) {
        const double saved = b(r, c);
        b(r, c) = saved + h;
        const double up = mmd2(a, b, spec, variant).value;
        b(r, c) = saved - h;
        const double down = mmd2(a, b, spec, variant).value;
        b(r, c) = saved;
        CHECK(mm.grad_b(r, c) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
      }
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double saved = a(r, c);
        a(r, c) = saved + h;
        const double up = mmd2(a, b, spec, variant).value;
        a(r, c) = saved - h;
        const double down = mmd2(a, b, spec, variant).value;
        a(r, c) = saved;
        CHECK(mm.grad_a(r, c) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
      }
  }
}

TEST_CASE("straight-through gradients match the relaxed surrogate to 1e-4") {
  Rng rng(2000);
  for (int t = 0; t < 10; ++t) {
    const std::size_t d = 3 + rng.uniform_below(6);
    const std::size_t n = 4 + rng.uniform_below(7);
    const GeneratorNet net = GeneratorNet::init(d, 500 + t);
    const Matrix batch = random_matrix(n, d, rng);
    Matrix noise(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(net.latent_dim()));
    for (Eigen::Index r = 0; r < noise.rows(); ++r)
      for (Eigen::Index c = 0; c < noise.cols(); ++c) noise(r, c) = rng.uniform01();
    KernelSpec spec;
    spec.bandwidth2 = 0.8 + rng.uniform01();
    const MmdVariant variant = (t % 2 == 0) ? MmdVariant::unbiased_cross_full
                                            : MmdVariant::paper_eq6_cross_offdiag;
    CHECK(max_relative_gradient_error(net, batch, noise, spec, variant) < 1e-4);
  }
}

TEST_CASE("loss with coupled true-lens masks sits at the self-MMD noise floor") {
  // Build a net emitting (1,1,0) for z < F and (0,0,1) otherwise, and order
  // the batch so each row receives its own component's mask. The masked batch
  // then equals the batch and the loss is the unbiased self-MMD estimate,
  // within 3 standard errors of zero under resampling.
  const double F = 0.5;
  GeneratorNet net = GeneratorNet::init(3, 1);
  for (auto& layer : net.layers) {
    layer.w.setZero();
    layer.b.setZero();
  }
  // layers: 1->1->1->2->3->3; route z through, then steep logits around F.
  net.layers[0].w(0, 0) = 1.0;
  net.layers[1].w(0, 0) = 1.0;
  net.layers[2].w(0, 0) = 1.0;  // h3 = (z, 0)
  net.layers[3].w(0, 0) = 1.0;
  net.layers[3].w(1, 0) = 1.0;
  net.layers[3].w(2, 0) = 1.0;  // h4 = (z, z, z)
  const double steep = 50.0;
  net.layers[4].w.setZero();
  net.layers[4].w(0, 0) = -steep;
  net.layers[4].w(1, 0) = -steep;
  net.layers[4].w(2, 0) = steep;
  net.layers[4].b << steep * F, steep * F, -steep * F;

  Rng rng(77);
  KernelSpec spec;
  spec.bandwidth2 = 1.0;
  auto draw_population = [&](std::size_t n, Matrix* noise_out) {
    Matrix noise(static_cast<Eigen::Index>(n), 1);
    Matrix batch = Matrix::Zero(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
      // keep z away from the softmax switch so every mask is exact
      double z = rng.uniform01();
      while (std::abs(z - F) < 0.02) z = rng.uniform01();
      noise(static_cast<Eigen::Index>(i), 0) = z;
      if (z < F) {
        batch(static_cast<Eigen::Index>(i), 0) = rng.normal();
        batch(static_cast<Eigen::Index>(i), 1) = rng.normal();
      } else {
        batch(static_cast<Eigen::Index>(i), 2) = rng.normal();
      }
    }
    if (noise_out) *noise_out = noise;
    return batch;
  };

  // The coupled masks reproduce each row exactly, so the loss equals the
  // self-MMD estimate of the batch.
  for (int rep = 0; rep < 30; ++rep) {
    Matrix noise;
    const Matrix batch = draw_population(64, &noise);
    const VganLoss v = vgan_loss_and_grad(net, batch, noise, spec,
                                          MmdVariant::unbiased_cross_full, MaskMode::binary);
    CHECK(v.loss == doctest::Approx(mmd2(batch, batch, spec).value).epsilon(1e-12));
  }

  // Noise floor: against an independent equally-distributed projected sample
  // the estimator is unbiased, so the mean sits within 3 SE of zero.
  std::vector<double> values;
  for (int rep = 0; rep < 60; ++rep) {
    const Matrix a = draw_population(64, nullptr);
    const Matrix b = draw_population(64, nullptr);  // coupled-masked fresh rows
    values.push_back(mmd2(a, b, spec).value);
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(values.size()));
  CHECK(std::abs(mean) <= 3.0 * se + 1e-9);
}

TEST_CASE("adadelta zero-gradient fixed point and determinism") {
  GeneratorNet net = GeneratorNet::init(4, 9);
  const GeneratorNet before = net;
  AdadeltaState state = AdadeltaState::like(net.layers);
  ParamGrads zero;
  for (const auto& l : net.layers) {
    zero.w.push_back(Matrix::Zero(l.w.rows(), l.w.cols()));
    zero.b.push_back(Vector::Zero(l.b.size()));
  }
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  adadelta_step(net.layers, zero, state, cfg, 0);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    CHECK(net.layers[l].w == before.layers[l].w);
    CHECK(net.layers[l].b == before.layers[l].b);
  }

  // identical tensors with identical gradients stay identical
  GeneratorNet n2 = before;
  AdadeltaState s2 = AdadeltaState::like(n2.layers);
  ParamGrads g;
  Rng rng(4);
  for (const auto& l : n2.layers) {
    Matrix gw(l.w.rows(), l.w.cols());
    for (Eigen::Index r = 0; r < gw.rows(); ++r)
      for (Eigen::Index c = 0; c < gw.cols(); ++c) gw(r, c) = rng.normal();
    g.w.push_back(gw);
    Vector gb(l.b.size());
    for (Eigen::Index r = 0; r < gb.size(); ++r) gb(r) = rng.normal();
    g.b.push_back(gb);
  }
  GeneratorNet n3 = before;
  AdadeltaState s3 = AdadeltaState::like(n3.layers);
  TrainConfig dcfg;
  adadelta_step(n2.layers, g, s2, dcfg, 0);
  adadelta_step(n3.layers, g, s3, dcfg, 0);
  for (std::size_t l = 0; l < n2.layers.size(); ++l) {
    CHECK(n2.layers[l].w == n3.layers[l].w);
    CHECK(n2.layers[l].b == n3.layers[l].b);
  }

  // non-finite gradients surface as a training error with the epoch
  g.w[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adadelta_step(n2.layers, g, s2, dcfg, 17), TrainingError);
}

TEST_CASE("adadelta drives a 1-d quadratic below 0.5 in 500 steps") {
  // f(w) = w^2 with the config defaults (including weight decay).
  std::vector<LinearLayer> layers(1);
  layers[0].w = Matrix::Constant(1, 1, 1.0);
  layers[0].b = Vector::Zero(1);
  AdadeltaState state = AdadeltaState::like(layers);
  TrainConfig cfg;
  double prev = 1.0;
  bool strictly_decreasing = true;
  for (int step = 0; step < 500; ++step) {
    ParamGrads g;
    g.w.push_back(Matrix::Constant(1, 1, 2.0 * layers[0].w(0, 0)));
    g.b.push_back(Vector::Zero(1));
    adadelta_step(layers, g, state, cfg, 0);
    const double now = std::abs(layers[0].w(0, 0));
    if (now >= prev) strictly_decreasing = false;
    prev = now;
  }
  CHECK(strictly_decreasing);
  CHECK(std::abs(layers[0].w(0, 0)) < 0.5);
}

TEST_CASE("train_vgan epochs=0 returns the initialized net") {
  Rng rng(15);
  const Matrix data = random_matrix(32, 4, rng);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 33;
  KernelSpec spec;
  spec.bandwidth2 = 1.0;
  const TrainResult res = train_vgan(data, cfg, spec);
  CHECK(res.loss_history.empty());
  const GeneratorNet fresh = GeneratorNet::init(4, Rng::derive(cfg.seed, 1));
  for (std::size_t l = 0; l < fresh.layers.size(); ++l) {
    CHECK(res.net.layers[l].w == fresh.layers[l].w);
    CHECK(res.net.layers[l].b == fresh.layers[l].b);
  }
}

TEST_CASE("training is bit-reproducible and thread-cap independent") {
  Rng rng(88);
  const Matrix data = random_matrix(64, 4, rng);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.seed = 7;
  KernelSpec spec;
  spec.bandwidth2 = median_heuristic(data);

  const TrainResult r1 = train_vgan(data, cfg, spec);
  set_thread_cap(1);
  const TrainResult r2 = train_vgan(data, cfg, spec);
  set_thread_cap(std::nullopt);

  REQUIRE(r1.loss_history.size() == r2.loss_history.size());
  for (std::size_t i = 0; i < r1.loss_history.size(); ++i)
    CHECK(r1.loss_history[i] == r2.loss_history[i]);
  for (std::size_t l = 0; l < r1.net.layers.size(); ++l) {
    CHECK(r1.net.layers[l].w == r2.net.layers[l].w);
    CHECK(r1.net.layers[l].b == r2.net.layers[l].b);
  }
}

TEST_CASE("train_vgan input validation") {
  Rng rng(5);
  const Matrix one_col = random_matrix(16, 1, rng);
  TrainConfig cfg;
  cfg.epochs = 1;
  KernelSpec spec;
  spec.bandwidth2 = 1.0;
  CHECK_THROWS_AS(train_vgan(one_col, cfg, spec), std::invalid_argument);
}

TEST_CASE("sample_lens dedup, normalization and constant nets") {
  // constant net: zero weights force a single repaired mask
  GeneratorNet net = GeneratorNet::init(4, 2);
  for (auto& l : net.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  const LensDistribution lens = sample_lens(net, 257, 5);
  REQUIRE(lens.entries.size() == 1);
  CHECK(lens.entries[0].probability == 1.0);
  CHECK(lens.entries[0].mask.ones() == 1);
  CHECK(lens.identity_fraction == 0.0);

  // random nets: probabilities sum to one, masks valid and deduplicated
  for (int t = 0; t < 5; ++t) {
    const GeneratorNet rnet = GeneratorNet::init(6, 100 + t);
    const LensDistribution rl = sample_lens(rnet, 500, 9 + t);
    double total = 0.0;
    for (const auto& e : rl.entries) {
      total += e.probability;
      CHECK(e.mask.ones() >= 1);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t i = 0; i < rl.entries.size(); ++i)
      for (std::size_t j = i + 1; j < rl.entries.size(); ++j)
        CHECK(rl.entries[i].mask.bits != rl.entries[j].mask.bits);
  }

  CHECK_THROWS_AS(sample_lens(net, 0, 1), std::invalid_argument);
}

TEST_CASE("alternation schedule has one encoder ascent per window") {
  AlternationSchedule s;
  s.iternum_encoder = 1;
  s.iternum_generator = 4;
  for (int window = 0; window < 6; ++window) {
    int encoder_steps = 0;
    for (int i = 0; i < 5; ++i)
      encoder_steps += (s.next() == AlternationSchedule::Step::encoder);
    CHECK(encoder_steps == 1);
  }
}
