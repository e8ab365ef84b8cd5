#include "myosub/kernel_mmd.hpp"

#include "malloc_tuning.hpp"
#include "myosub/parallel.hpp"
#include "myosub/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace myosub {

namespace {

Matrix maybe_encode(const Matrix& rows, const KernelSpec& spec) {
  if (!spec.composed_encoder) return rows;
  return spec.composed_encoder->encode_rows(rows);
}

void check_variant(std::size_t n, std::size_t m, MmdVariant variant) {
  if (n < 2 || m < 2) throw std::invalid_argument("mmd2 needs at least 2 rows per sample");
  if (variant == MmdVariant::paper_eq6_cross_offdiag && n != m)
    throw std::invalid_argument("paper_eq6_cross_offdiag requires equal sample sizes");
}

double sum_offdiag(const Matrix& k) {
  return k.sum() - k.diagonal().sum();
}

}  // namespace

double gaussian_kernel(const Vector& x, const Vector& y, const KernelSpec& spec) {
  spec.validate();
  if (x.size() != y.size()) throw std::invalid_argument("gaussian_kernel: dimension mismatch");
  if (spec.composed_encoder) {
    Matrix a(1, x.size()), b(1, y.size());
    a.row(0) = x.transpose();
    b.row(0) = y.transpose();
    const Matrix ea = spec.composed_encoder->encode_rows(a);
    const Matrix eb = spec.composed_encoder->encode_rows(b);
    return std::exp(-(ea.row(0) - eb.row(0)).squaredNorm() / (2.0 * spec.bandwidth2));
  }
  return std::exp(-(x - y).squaredNorm() / (2.0 * spec.bandwidth2));
}

double median_heuristic(const Matrix& data) {
  const std::size_t n = static_cast<std::size_t>(data.rows());
  if (n < 2) throw std::invalid_argument("median_heuristic needs at least 2 rows");
  std::vector<double> d2;
  d2.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      d2.push_back((data.row(i) - data.row(j)).squaredNorm());
  const std::size_t mid = d2.size() / 2;
  std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
  double med = d2[mid];
  if (d2.size() % 2 == 0) {
    const double lower = *std::max_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (lower + med);
  }
  if (med <= 0.0) return 1.0;
  return med / 2.0;
}

namespace {

void pairwise_sq_dists_into(const Matrix& a, const Matrix& b, Matrix& out) {
  static const bool tuned = detail::tune_malloc_for_large_buffers();
  (void)tuned;
  if (a.cols() != b.cols()) throw std::invalid_argument("pairwise_sq_dists: column mismatch");
  const Vector sa = a.rowwise().squaredNorm();
  const Vector sb = b.rowwise().squaredNorm();
  out.resize(a.rows(), b.rows());
  out.noalias() = -2.0 * a * b.transpose();
  out.colwise() += sa;
  out.rowwise() += sb.transpose();
  out = out.cwiseMax(0.0);
}

}  // namespace

Matrix pairwise_sq_dists(const Matrix& a, const Matrix& b) {
  Matrix out;
  pairwise_sq_dists_into(a, b, out);
  return out;
}

void gaussian_kernel_matrix_into(const Matrix& a, const Matrix& b, const KernelSpec& spec,
                                 Matrix& out) {
  spec.validate();
  if (spec.composed_encoder) {
    const Matrix ea = spec.composed_encoder->encode_rows(a);
    const Matrix eb = spec.composed_encoder->encode_rows(b);
    pairwise_sq_dists_into(ea, eb, out);
  } else {
    pairwise_sq_dists_into(a, b, out);
  }
  const double inv = -1.0 / (2.0 * spec.bandwidth2);
  // Row-major storage is contiguous; chunk the flat buffer (boundaries are
  // thread-count independent, so results are bit-stable under any cap).
  double* flat = out.data();
  const std::size_t total = static_cast<std::size_t>(out.size());
  parallel_for_chunks(total, 1 << 16, [&](std::size_t i0, std::size_t i1) {
    Eigen::Map<Eigen::ArrayXd> span(flat + i0, static_cast<Eigen::Index>(i1 - i0));
    span = (span * inv).exp();
  });
}

Matrix gaussian_kernel_matrix(const Matrix& a, const Matrix& b, const KernelSpec& spec) {
  Matrix out;
  gaussian_kernel_matrix_into(a, b, spec, out);
  return out;
}

MmdEstimate mmd2(const Matrix& sample_a, const Matrix& sample_b, const KernelSpec& spec,
                 MmdVariant variant) {
  if (sample_a.cols() != sample_b.cols())
    throw std::invalid_argument("mmd2: samples have different column counts");
  const std::size_t n = static_cast<std::size_t>(sample_a.rows());
  const std::size_t m = static_cast<std::size_t>(sample_b.rows());
  check_variant(n, m, variant);

  const Matrix kaa = gaussian_kernel_matrix(sample_a, sample_a, spec);
  const Matrix kbb = gaussian_kernel_matrix(sample_b, sample_b, spec);
  const Matrix kab = gaussian_kernel_matrix(sample_a, sample_b, spec);

  const double within_a = sum_offdiag(kaa) / (static_cast<double>(n) * (n - 1));
  const double within_b = sum_offdiag(kbb) / (static_cast<double>(m) * (m - 1));
  double cross;
  if (variant == MmdVariant::unbiased_cross_full) {
    cross = 2.0 * kab.sum() / (static_cast<double>(n) * m);
  } else {
    cross = 2.0 * sum_offdiag(kab) / (static_cast<double>(n) * n);
  }
  MmdEstimate est;
  est.value = within_a + within_b - cross;
  est.variant = variant;
  est.n = n;
  est.m = m;
  if (!std::isfinite(est.value)) throw std::runtime_error("mmd2: non-finite value");
  return est;
}

MmdTestResult mmd_permutation_test(const Matrix& sample_a, const Matrix& sample_b,
                                   const KernelSpec& spec, double alpha,
                                   std::size_t num_permutations, std::uint64_t seed,
                                   MmdVariant variant) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  if (num_permutations < 1) throw std::invalid_argument("num_permutations must be positive");
  const std::size_t n = static_cast<std::size_t>(sample_a.rows());
  const std::size_t m = static_cast<std::size_t>(sample_b.rows());
  check_variant(n, m, variant);
  if (sample_a.cols() != sample_b.cols())
    throw std::invalid_argument("permutation test: column mismatch");

  Matrix pooled(n + m, sample_a.cols());
  pooled.topRows(static_cast<Eigen::Index>(n)) = sample_a;
  pooled.bottomRows(static_cast<Eigen::Index>(m)) = sample_b;
  const Matrix k = gaussian_kernel_matrix(pooled, pooled, spec);
  const std::size_t p = n + m;
  const Vector rowsum = k.rowwise().sum();
  const double total = rowsum.sum();

  const double cn = static_cast<double>(n) * (n - 1);
  const double cm = static_cast<double>(m) * (m - 1);
  const double ccross = (variant == MmdVariant::unbiased_cross_full)
                            ? static_cast<double>(n) * m
                            : static_cast<double>(n) * n;

  // Statistic from a 0/1 group-A indicator z over the pooled rows, using
  // S_bb = total - 2*rho_A + S_aa and S_ab = rho_A - S_aa.
  std::vector<std::vector<std::size_t>> perm_groups(num_permutations);
  for (std::size_t r = 0; r < num_permutations; ++r) {
    std::vector<std::size_t> idx(p);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(Rng::derive(seed, r + 1));
    rng.shuffle(idx);
    idx.resize(n);
    perm_groups[r] = std::move(idx);
  }

  // Batched S_aa via one GEMM: V = K * Z, S_aa[r] = z_r . v_r.
  Matrix z = Matrix::Zero(static_cast<Eigen::Index>(p),
                          static_cast<Eigen::Index>(num_permutations));
  for (std::size_t r = 0; r < num_permutations; ++r)
    for (std::size_t i : perm_groups[r])
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) = 1.0;
  Matrix v(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(num_permutations));
  v.noalias() = k * z;

  auto stat_from = [&](const std::vector<std::size_t>& group_a, double s_aa) {
    double rho = 0.0, tr_a = 0.0;
    for (std::size_t i : group_a) {
      rho += rowsum(static_cast<Eigen::Index>(i));
      tr_a += k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    }
    const double tr = k.diagonal().sum();
    const double s_bb = total - 2.0 * rho + s_aa;
    const double tr_b = tr - tr_a;
    double cross_sum = rho - s_aa;  // all A-B pairs
    if (variant == MmdVariant::paper_eq6_cross_offdiag) {
      // positional pairing: A position t vs B position t
      std::vector<std::uint8_t> in_a(p, 0);
      for (std::size_t i : group_a) in_a[i] = 1;
      std::vector<std::size_t> group_b;
      group_b.reserve(m);
      for (std::size_t i = 0; i < p; ++i)
        if (!in_a[i]) group_b.push_back(i);
      for (std::size_t t = 0; t < n; ++t)
        cross_sum -= k(static_cast<Eigen::Index>(group_a[t]),
                       static_cast<Eigen::Index>(group_b[t]));
    }
    return (s_aa - tr_a) / cn + (s_bb - tr_b) / cm - 2.0 * cross_sum / ccross;
  };

  std::vector<std::size_t> observed_group(n);
  std::iota(observed_group.begin(), observed_group.end(), 0);
  double s_aa_obs = 0.0;
  {
    const auto block = k.topLeftCorner(static_cast<Eigen::Index>(n),
                                       static_cast<Eigen::Index>(n));
    s_aa_obs = block.sum();
  }
  const double observed = stat_from(observed_group, s_aa_obs);

  std::vector<double> permuted(num_permutations);
  parallel_for_chunks(num_permutations, 8, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const double s_aa = z.col(static_cast<Eigen::Index>(r))
                              .dot(v.col(static_cast<Eigen::Index>(r)));
      permuted[r] = stat_from(perm_groups[r], s_aa);
    }
  });

  std::size_t count_ge = 0;
  for (double s : permuted)
    if (s >= observed) ++count_ge;

  MmdTestResult res;
  res.statistic = observed;
  res.p_value = static_cast<double>(1 + count_ge) / static_cast<double>(num_permutations + 1);
  res.alpha = alpha;
  res.reject = res.p_value <= alpha;
  res.num_permutations = num_permutations;
  return res;
}

Matrix lens_projection(const Matrix& data, const LensDistribution& lens, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(data.rows());
  const std::size_t d = static_cast<std::size_t>(data.cols());
  lens.validate(d);

  // Largest-remainder apportionment of n draws across lens entries.
  const std::size_t k = lens.entries.size();
  std::vector<std::size_t> counts(k);
  std::vector<std::pair<double, std::size_t>> remainders(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = lens.entries[i].probability * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders[i] = {exact - std::floor(exact), i};
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) counts[remainders[i % k].second]++;

  // Seeded row order, then greedy least-distortion assignment.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::derive(seed, 0xA551));
  rng.shuffle(order);

  Matrix projected(data.rows(), data.cols());
  for (std::size_t row : order) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = k;
    for (std::size_t i = 0; i < k; ++i) {
      if (counts[i] == 0) continue;
      double distortion = 0.0;
      const auto& bits = lens.entries[i].mask.bits;
      for (std::size_t c = 0; c < d; ++c)
        if (!bits[c]) {
          const double v = data(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c));
          distortion += v * v;
        }
      if (distortion < best) {
        best = distortion;
        best_k = i;
      }
    }
    counts[best_k]--;
    const auto& bits = lens.entries[best_k].mask.bits;
    for (std::size_t c = 0; c < d; ++c)
      projected(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) =
          bits[c] ? data(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) : 0.0;
  }
  return projected;
}

MmdTestResult myopicity_test(const Matrix& data, const LensDistribution& lens,
                             const KernelSpec& spec, double alpha,
                             std::size_t num_permutations, std::uint64_t seed,
                             MmdVariant variant) {
  if (lens.entries.empty()) throw std::invalid_argument("myopicity_test: empty lens");
  const Matrix projected = lens_projection(data, lens, seed);
  return mmd_permutation_test(data, projected, spec, alpha, num_permutations,
                              Rng::derive(seed, 0x7E57), variant);
}

}  // namespace myosub
