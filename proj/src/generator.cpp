#include "myosub/generator.hpp"

#include "myosub/rng.hpp"

#include <cmath>
#include <map>

namespace myosub {

Matrix mlp_forward(const std::vector<LinearLayer>& layers, const Matrix& input,
                   std::vector<Matrix>* pre_cache, std::vector<Matrix>* act_cache) {
  Matrix h = input;
  if (act_cache) act_cache->push_back(h);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix pre = h * layers[l].w.transpose();
    pre.rowwise() += layers[l].b.transpose();
    if (pre_cache) pre_cache->push_back(pre);
    if (l + 1 < layers.size()) {
      h = pre.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    } else {
      h = pre;  // linear output; callers apply their own output activation
    }
    if (act_cache) act_cache->push_back(h);
  }
  return h;
}

ParamGrads mlp_backward(const std::vector<LinearLayer>& layers, const Matrix& input,
                        const std::vector<Matrix>& pre_cache,
                        const std::vector<Matrix>& act_cache, const Matrix& grad_out,
                        Matrix* grad_input) {
  (void)input;
  const std::size_t nl = layers.size();
  ParamGrads grads;
  grads.w.resize(nl);
  grads.b.resize(nl);
  Matrix g = grad_out;  // gradient at the (linear) output of the last layer
  for (std::size_t l = nl; l-- > 0;) {
    if (l + 1 < nl) {
      // backward through the leaky ReLU that followed layer l
      g = g.cwiseProduct(pre_cache[l].unaryExpr(
          [](double v) { return v > 0.0 ? 1.0 : kLeakySlope; }));
    }
    grads.w[l].noalias() = g.transpose() * act_cache[l];
    grads.b[l] = g.colwise().sum().transpose();
    if (l > 0 || grad_input) {
      Matrix gi = g * layers[l].w;
      if (l == 0) {
        if (grad_input) *grad_input = std::move(gi);
      } else {
        g = std::move(gi);
      }
    }
  }
  return grads;
}

std::vector<std::size_t> GeneratorNet::dims_for(std::size_t d) {
  auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
  auto at_least_one = [&](std::size_t v) { return v == 0 ? std::size_t{1} : v; };
  return {at_least_one(ceil_div(d, 16)), at_least_one(ceil_div(d, 8)),
          at_least_one(ceil_div(d, 4)), at_least_one(ceil_div(d, 2)), d, d};
}

namespace {

std::vector<LinearLayer> init_layers(const std::vector<std::size_t>& dims, Rng& rng) {
  std::vector<LinearLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t fan_in = dims[l], fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    LinearLayer layer;
    layer.w.resize(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c)
        layer.w(r, c) = bound * (2.0 * rng.uniform01() - 1.0);
    layer.b.resize(static_cast<Eigen::Index>(fan_out));
    for (Eigen::Index r = 0; r < layer.b.size(); ++r)
      layer.b(r) = bound * (2.0 * rng.uniform01() - 1.0);
    layers.push_back(std::move(layer));
  }
  return layers;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix s(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    Eigen::ArrayXd e = (logits.row(r).array() - mx).exp();
    s.row(r) = (e / e.sum()).matrix();
  }
  return s;
}

SubspaceMask mask_from_row(const Eigen::Ref<const Eigen::RowVectorXd>& softmax_row,
                           const Eigen::Ref<const Eigen::RowVectorXd>& logit_row) {
  const std::size_t d = static_cast<std::size_t>(softmax_row.size());
  const double thresh = 1.0 / static_cast<double>(d);
  std::vector<std::uint8_t> bits(d, 0);
  bool any = false;
  for (std::size_t i = 0; i < d; ++i) {
    if (softmax_row(static_cast<Eigen::Index>(i)) > thresh) {
      bits[i] = 1;
      any = true;
    }
  }
  if (!any) {
    Eigen::Index best = 0;
    logit_row.maxCoeff(&best);
    bits[static_cast<std::size_t>(best)] = 1;
  }
  return SubspaceMask(std::move(bits));
}

}  // namespace

GeneratorNet GeneratorNet::init(std::size_t d, std::uint64_t seed) {
  if (d < 2) throw std::invalid_argument("generator needs data dimension >= 2");
  GeneratorNet net;
  net.layer_dims = dims_for(d);
  net.rng_seed = seed;
  Rng rng(seed);
  net.layers = init_layers(net.layer_dims, rng);
  return net;
}

SubspaceMask upper_softmax(const Vector& pre_activation) {
  if (pre_activation.size() < 2) throw std::invalid_argument("upper_softmax needs dimension >= 2");
  Matrix logits(1, pre_activation.size());
  logits.row(0) = pre_activation.transpose();
  const Matrix s = softmax_rows(logits);
  return mask_from_row(s.row(0), logits.row(0));
}

GeneratorForward generator_forward_batch(const GeneratorNet& net, const Matrix& z) {
  if (static_cast<std::size_t>(z.cols()) != net.latent_dim())
    throw std::invalid_argument("generator_forward: latent dimension mismatch");
  GeneratorForward out;
  out.logits = mlp_forward(net.layers, z, &out.pre_cache, &out.act_cache);
  out.relaxed = softmax_rows(out.logits);
  out.masks.reserve(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    out.masks.push_back(mask_from_row(out.relaxed.row(r), out.logits.row(r)));
  return out;
}

std::tuple<SubspaceMask, Vector, Vector> generator_forward(const GeneratorNet& net,
                                                           const Vector& z) {
  Matrix zm(1, z.size());
  zm.row(0) = z.transpose();
  GeneratorForward fwd = generator_forward_batch(net, zm);
  return {fwd.masks[0], fwd.relaxed.row(0).transpose(), fwd.logits.row(0).transpose()};
}

MmdWithGrads mmd2_with_grads(const Matrix& sample_a, const Matrix& sample_b,
                             const KernelSpec& spec, MmdVariant variant, bool want_grad_a,
                             bool want_grad_b) {
  if (spec.composed_encoder)
    throw std::invalid_argument("mmd2_with_grads expects a plain Gaussian kernel");
  const std::size_t n = static_cast<std::size_t>(sample_a.rows());
  const std::size_t m = static_cast<std::size_t>(sample_b.rows());
  if (n < 2 || m < 2) throw std::invalid_argument("mmd2_with_grads needs >= 2 rows per sample");
  if (variant == MmdVariant::paper_eq6_cross_offdiag && n != m)
    throw std::invalid_argument("paper_eq6_cross_offdiag requires equal sample sizes");

  // Persistent buffers: training calls this with a fixed batch shape, so the
  // large kernel matrices are allocated once per thread.
  thread_local Matrix kaa, kbb, kab;
  gaussian_kernel_matrix_into(sample_a, sample_a, spec, kaa);
  gaussian_kernel_matrix_into(sample_b, sample_b, spec, kbb);
  gaussian_kernel_matrix_into(sample_a, sample_b, spec, kab);
  kaa.diagonal().setZero();
  kbb.diagonal().setZero();

  const double caa = 1.0 / (static_cast<double>(n) * (n - 1));
  const double cbb = 1.0 / (static_cast<double>(m) * (m - 1));
  const double ccross = (variant == MmdVariant::unbiased_cross_full)
                            ? 2.0 / (static_cast<double>(n) * m)
                            : 2.0 / (static_cast<double>(n) * n);
  if (variant == MmdVariant::paper_eq6_cross_offdiag) kab.diagonal().setZero();

  MmdWithGrads out;
  out.value = caa * kaa.sum() + cbb * kbb.sum() - ccross * kab.sum();

  const double inv_bw = 1.0 / spec.bandwidth2;
  if (want_grad_b) {
    // d/d b_p [ cbb * sum_{i!=j} k(b_i,b_j) ] = -2 cbb / bw * (diag(rs) B - Kbb B)
    const Vector rs = kbb.rowwise().sum();
    Matrix g = (-2.0 * cbb * inv_bw) * (rs.asDiagonal() * sample_b - kbb * sample_b);
    // d/d b_p [ -ccross * sum k(a_i,b_p) ] = -ccross / bw * (Kab' A - diag(cs) B)
    const Vector cs = kab.colwise().sum().transpose();
    g.noalias() += (-ccross * inv_bw) * (kab.transpose() * sample_a - cs.asDiagonal() * sample_b);
    out.grad_b = std::move(g);
  }
  if (want_grad_a) {
    const Vector rs = kaa.rowwise().sum();
    Matrix g = (-2.0 * caa * inv_bw) * (rs.asDiagonal() * sample_a - kaa * sample_a);
    const Vector rcs = kab.rowwise().sum();
    g.noalias() += (-ccross * inv_bw) * (kab * sample_b - rcs.asDiagonal() * sample_a);
    out.grad_a = std::move(g);
  }
  return out;
}

namespace {

// Gradient with respect to the final logits, through the softmax Jacobian.
Matrix softmax_backward(const Matrix& softmax, const Matrix& grad_softmax) {
  Matrix g(softmax.rows(), softmax.cols());
  for (Eigen::Index r = 0; r < softmax.rows(); ++r) {
    const double dot = softmax.row(r).dot(grad_softmax.row(r));
    g.row(r) = softmax.row(r).cwiseProduct(
        grad_softmax.row(r) - Eigen::RowVectorXd::Constant(softmax.cols(), dot));
  }
  return g;
}

Matrix mask_matrix(const std::vector<SubspaceMask>& masks, std::size_t d) {
  Matrix m(static_cast<Eigen::Index>(masks.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < masks.size(); ++r)
    for (std::size_t c = 0; c < d; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          masks[r].bits[c] ? 1.0 : 0.0;
  return m;
}

}  // namespace

VganLoss vgan_loss_and_grad(const GeneratorNet& net, const Matrix& batch, const Matrix& noise,
                            const KernelSpec& spec, MmdVariant variant, MaskMode mode) {
  if (batch.rows() != noise.rows())
    throw std::invalid_argument("vgan_loss_and_grad: batch and noise row counts differ");
  if (batch.rows() < 2) throw std::invalid_argument("vgan_loss_and_grad: batch smaller than 2");
  if (static_cast<std::size_t>(batch.cols()) != net.data_dim())
    throw std::invalid_argument("vgan_loss_and_grad: batch width mismatch");

  GeneratorForward fwd = generator_forward_batch(net, noise);
  const Matrix m = (mode == MaskMode::binary)
                       ? mask_matrix(fwd.masks, net.data_dim())
                       : fwd.relaxed;
  const Matrix masked = m.cwiseProduct(batch);

  const MmdWithGrads mm = mmd2_with_grads(batch, masked, spec, variant, false, true);

  // Straight-through: d masked / d softmax = batch entries; the unit step is
  // skipped and the softmax Jacobian carries the gradient to the logits.
  const Matrix grad_softmax = mm.grad_b.cwiseProduct(batch);
  const Matrix grad_logits = softmax_backward(fwd.relaxed, grad_softmax);

  VganLoss out;
  out.loss = mm.value;
  out.grads = mlp_backward(net.layers, noise, fwd.pre_cache, fwd.act_cache, grad_logits, nullptr);
  return out;
}

AdadeltaState AdadeltaState::like(const std::vector<LinearLayer>& layers) {
  AdadeltaState s;
  for (const auto& l : layers) {
    s.eg2_w.push_back(Matrix::Zero(l.w.rows(), l.w.cols()));
    s.ed2_w.push_back(Matrix::Zero(l.w.rows(), l.w.cols()));
    s.eg2_b.push_back(Vector::Zero(l.b.size()));
    s.ed2_b.push_back(Vector::Zero(l.b.size()));
  }
  return s;
}

namespace {

template <typename Mat>
void adadelta_update(Mat& param, const Mat& grad, Mat& eg2, Mat& ed2,
                     const TrainConfig& cfg, std::size_t epoch) {
  if (!grad.allFinite()) throw TrainingError("non-finite gradient", epoch);
  const double rho = cfg.decay_rho;
  Mat g = grad + cfg.weight_decay * param;
  eg2 = rho * eg2 + (1.0 - rho) * g.cwiseProduct(g);
  Mat delta = -((ed2.array() + kAdadeltaEps).sqrt() /
                (eg2.array() + kAdadeltaEps).sqrt())
                   .matrix()
                   .cwiseProduct(g);
  ed2 = rho * ed2 + (1.0 - rho) * delta.cwiseProduct(delta);
  param += cfg.learning_rate * delta;
}

}  // namespace

void adadelta_step(std::vector<LinearLayer>& layers, const ParamGrads& grads,
                   AdadeltaState& state, const TrainConfig& config, std::size_t epoch) {
  if (grads.w.size() != layers.size() || grads.b.size() != layers.size())
    throw std::invalid_argument("adadelta_step: shape mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads.w[l].rows() != layers[l].w.rows() || grads.w[l].cols() != layers[l].w.cols() ||
        grads.b[l].size() != layers[l].b.size())
      throw std::invalid_argument("adadelta_step: shape mismatch");
    adadelta_update(layers[l].w, grads.w[l], state.eg2_w[l], state.ed2_w[l], config, epoch);
    adadelta_update(layers[l].b, grads.b[l], state.eg2_b[l], state.ed2_b[l], config, epoch);
  }
}

LensDistribution sample_lens(const GeneratorNet& net, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_lens: count must be positive");
  Rng rng(seed);
  Matrix z(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(net.latent_dim()));
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = rng.uniform01();
  const GeneratorForward fwd = generator_forward_batch(net, z);

  std::map<std::vector<std::uint8_t>, std::size_t> counts;
  for (const auto& mask : fwd.masks) counts[mask.bits]++;

  LensDistribution lens;
  lens.sample_count = static_cast<std::int64_t>(count);
  std::size_t identity = 0;
  for (const auto& [bits, c] : counts) {
    LensEntry e;
    e.mask = SubspaceMask(bits);
    e.probability = static_cast<double>(c) / static_cast<double>(count);
    if (e.mask.all_ones()) identity = c;
    lens.entries.push_back(std::move(e));
  }
  lens.identity_fraction = static_cast<double>(identity) / static_cast<double>(count);
  return lens;
}

}  // namespace myosub
