#include "myosub/kernel_mmd.hpp"
#include "myosub/parallel.hpp"
#include "myosub/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace myosub;

namespace {

Matrix col_matrix(std::initializer_list<double> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index r = 0;
  for (double v : values) m(r++, 0) = v;
  return m;
}

Matrix random_matrix(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * rng.normal();
  return m;
}

// Definitional estimator: explicit kernel evaluations, no shared code with
// the Gram-matrix implementation.
double brute_force_mmd2(const Matrix& a, const Matrix& b, double bw2, MmdVariant variant) {
  const auto n = a.rows(), m = b.rows();
  auto k = [&](const auto& x, const auto& y) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < x.size(); ++c) s += (x(c) - y(c)) * (x(c) - y(c));
    return std::exp(-s / (2.0 * bw2));
  };
  double waa = 0.0, wbb = 0.0, cross = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) waa += k(a.row(i), a.row(j));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) wbb += k(b.row(i), b.row(j));
  if (variant == MmdVariant::unbiased_cross_full) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) cross += k(a.row(i), b.row(j));
    cross *= 2.0 / (static_cast<double>(n) * static_cast<double>(m));
  } else {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        if (i != j) cross += k(a.row(i), b.row(j));
    cross *= 2.0 / (static_cast<double>(n) * static_cast<double>(n));
  }
  return waa / (static_cast<double>(n) * (n - 1)) + wbb / (static_cast<double>(m) * (m - 1)) -
         cross;
}

LensDistribution make_lens(std::initializer_list<std::pair<std::vector<std::uint8_t>, double>> e) {
  LensDistribution lens;
  for (const auto& [bits, p] : e) lens.entries.push_back({SubspaceMask(bits), p});
  lens.sample_count = static_cast<std::int64_t>(lens.entries.size());
  return lens;
}

Matrix synthetic_two_subspace(std::size_t n, double F, std::uint64_t seed) {
  Rng rng(seed);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    if (rng.uniform01() < F) {
      out(r, 0) = rng.normal();
      out(r, 1) = rng.normal();
    } else {
      out(r, 2) = rng.normal();
    }
  }
  return out;
}

}  // namespace

TEST_CASE("gaussian kernel basics") {
  KernelSpec spec;
  spec.bandwidth2 = 2.0;
  Vector x(1), y(1);
  x << 0.0;
  y << 2.0;
  CHECK(gaussian_kernel(x, x, spec) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(gaussian_kernel(x, y, spec) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    Vector a(4), b(4);
    for (int c = 0; c < 4; ++c) {
      a(c) = rng.normal();
      b(c) = rng.normal();
    }
    const double kab = gaussian_kernel(a, b, spec);
    CHECK(kab == gaussian_kernel(b, a, spec));
    CHECK(kab > 0.0);
    CHECK(kab <= 1.0);
  }

  Vector z(2);
  z << 1.0, 2.0;
  CHECK_THROWS_AS(gaussian_kernel(x, z, spec), std::invalid_argument);
  KernelSpec bad;
  bad.bandwidth2 = 0.0;
  CHECK_THROWS_AS(gaussian_kernel(x, y, bad), std::invalid_argument);
}

TEST_CASE("median heuristic") {
  CHECK(median_heuristic(col_matrix({0.0, 2.0})) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(median_heuristic(col_matrix({3.0, 3.0, 3.0})) == 1.0);
  // pairs {1, 4, 9} -> median 4 -> bandwidth2 = 2
  CHECK(median_heuristic(col_matrix({0.0, 1.0, 3.0})) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(median_heuristic(col_matrix({1.0})), std::invalid_argument);
}

TEST_CASE("mmd2 worked n=2 examples to 1e-12") {
  KernelSpec spec;
  spec.bandwidth2 = 2.0;
  const Matrix s = col_matrix({0.0, 2.0});
  const MmdEstimate self = mmd2(s, s, spec, MmdVariant::unbiased_cross_full);
  CHECK(self.value == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));

  const Matrix a = col_matrix({0.0, 0.0});
  const Matrix b = col_matrix({100.0, 100.0});
  const MmdEstimate far = mmd2(a, b, spec, MmdVariant::unbiased_cross_full);
  CHECK(far.value == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("mmd2 matches the triple-loop oracle on random instances") {
  Rng rng(99);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + rng.uniform_below(14);
    const std::size_t m = 2 + rng.uniform_below(14);
    const std::size_t d = 1 + rng.uniform_below(5);
    const Matrix a = random_matrix(n, d, rng);
    const Matrix b = random_matrix(m, d, rng, 1.5);
    KernelSpec spec;
    spec.bandwidth2 = 0.5 + rng.uniform01() * 2.0;
    const double got = mmd2(a, b, spec).value;
    const double want = brute_force_mmd2(a, b, spec.bandwidth2, MmdVariant::unbiased_cross_full);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
    if (n == m) {
      const double got6 = mmd2(a, b, spec, MmdVariant::paper_eq6_cross_offdiag).value;
      const double want6 =
          brute_force_mmd2(a, b, spec.bandwidth2, MmdVariant::paper_eq6_cross_offdiag);
      CHECK(got6 == doctest::Approx(want6).epsilon(1e-9));
    }
  }
}

TEST_CASE("mmd2 symmetry and input errors") {
  Rng rng(123);
  const Matrix a = random_matrix(7, 3, rng);
  const Matrix b = random_matrix(7, 3, rng);
  KernelSpec spec;
  spec.bandwidth2 = 1.3;
  CHECK(mmd2(a, b, spec).value == doctest::Approx(mmd2(b, a, spec).value).epsilon(1e-12));
  CHECK(mmd2(a, b, spec, MmdVariant::paper_eq6_cross_offdiag).value ==
        doctest::Approx(mmd2(b, a, spec, MmdVariant::paper_eq6_cross_offdiag).value)
            .epsilon(1e-12));

  const Matrix one = random_matrix(1, 3, rng);
  CHECK_THROWS_AS(mmd2(one, b, spec), std::invalid_argument);
  const Matrix c = random_matrix(5, 3, rng);
  CHECK_THROWS_AS(mmd2(c, b, spec, MmdVariant::paper_eq6_cross_offdiag), std::invalid_argument);
}

TEST_CASE("mmd2 is near zero for equal distributions") {
  Rng rng(2024);
  KernelSpec spec;
  spec.bandwidth2 = 2.0;

  // Large same-distribution pair.
  const Matrix a = random_matrix(2000, 3, rng);
  const Matrix b = random_matrix(2000, 3, rng);
  CHECK(std::abs(mmd2(a, b, spec).value) <= 0.01);

  // Unbiasedness: across many independent pairs the mean sits within 3
  // standard errors of zero.
  std::vector<double> values;
  for (int t = 0; t < 200; ++t) {
    const Matrix x = random_matrix(30, 2, rng);
    const Matrix y = random_matrix(30, 2, rng);
    values.push_back(mmd2(x, y, spec).value);
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(values.size()));
  CHECK(std::abs(mean) <= 3.0 * se + 1e-12);
}

TEST_CASE("permutation test p-values are calibrated on a true null") {
  // Two genuinely independent same-distribution groups.
  Rng rng(7);
  KernelSpec spec;
  spec.bandwidth2 = 2.0;
  std::size_t rejects = 0;
  const int runs = 200;
  for (int t = 0; t < runs; ++t) {
    const Matrix a = random_matrix(40, 2, rng);
    const Matrix b = random_matrix(40, 2, rng);
    const MmdTestResult res = mmd_permutation_test(a, b, spec, 0.10, 99, 1000 + t);
    CHECK(res.p_value >= 1.0 / 100.0);
    CHECK(res.reject == (res.p_value <= res.alpha));
    rejects += res.reject;
  }
  const double rate = static_cast<double>(rejects) / runs;
  CHECK(rate >= 0.05);
  CHECK(rate <= 0.15);
}

TEST_CASE("myopicity test accepts a true lens and rejects a false one") {
  const auto lens_true = make_lens({{{1, 1, 0}, 0.5}, {{0, 0, 1}, 0.5}});

  std::size_t rejects = 0;
  const int runs = 12;
  for (int t = 0; t < runs; ++t) {
    const Matrix data = synthetic_two_subspace(500, 0.5, 42 + t);
    KernelSpec spec;
    spec.bandwidth2 = median_heuristic(data);
    const MmdTestResult res = myopicity_test(data, lens_true, spec, 0.10, 100, 7 + t);
    rejects += res.reject;
  }
  CHECK(rejects <= 2);  // >= 90% acceptance at the true lens

  // Power: a single-mask lens that zeroes two normal coordinates.
  Rng rng(5);
  const Matrix normal = random_matrix(600, 3, rng);
  KernelSpec spec;
  spec.bandwidth2 = median_heuristic(normal);
  const auto lens_false = make_lens({{{1, 0, 0}, 1.0}});
  const MmdTestResult res = myopicity_test(normal, lens_false, spec, 0.10, 200, 11);
  CHECK(res.reject);
  CHECK(res.p_value <= 0.01);
}

TEST_CASE("myopicity test with the full mask behaves like a duplicate pool") {
  Rng rng(31);
  const Matrix data = random_matrix(300, 3, rng);
  KernelSpec spec;
  spec.bandwidth2 = median_heuristic(data);
  const auto identity = make_lens({{{1, 1, 1}, 1.0}});
  const MmdTestResult res = myopicity_test(data, identity, spec, 0.10, 100, 3);
  // The projected sample equals the data; the statistic is self-MMD noise.
  CHECK(std::abs(res.statistic) <= 0.05);
  CHECK_FALSE(res.reject);
}

TEST_CASE("myopicity test input validation") {
  Rng rng(8);
  const Matrix data = random_matrix(50, 3, rng);
  KernelSpec spec;
  spec.bandwidth2 = 1.0;
  LensDistribution empty;
  CHECK_THROWS_AS(myopicity_test(data, empty, spec, 0.1, 50, 1), std::invalid_argument);
  const auto lens = make_lens({{{1, 0, 0}, 1.0}});
  CHECK_THROWS_AS(myopicity_test(data, lens, spec, 1.5, 50, 1), std::invalid_argument);
  const auto zero_mask = make_lens({{{0, 0, 0}, 1.0}});
  CHECK_THROWS_AS(myopicity_test(data, zero_mask, spec, 0.1, 50, 1), std::invalid_argument);
}

TEST_CASE("lens projection honors mask frequencies and couples by distortion") {
  // Dense data: the applied mask is readable from the zero pattern.
  Rng rng(14);
  Matrix dense = random_matrix(400, 3, rng);
  dense.array() += 5.0;  // keep every entry nonzero
  const auto lens = make_lens({{{1, 1, 0}, 0.5}, {{0, 0, 1}, 0.5}});
  const Matrix proj = lens_projection(dense, lens, 77);
  REQUIRE(proj.rows() == dense.rows());
  std::size_t first_mask = 0;
  for (Eigen::Index r = 0; r < proj.rows(); ++r) {
    const bool used_110 = proj(r, 2) == 0.0 && proj(r, 0) != 0.0;
    const bool used_001 = proj(r, 2) != 0.0 && proj(r, 0) == 0.0 && proj(r, 1) == 0.0;
    CHECK((used_110 || used_001));
    first_mask += used_110;
  }
  CHECK(first_mask == 200);  // largest-remainder apportionment is exact

  // On the two-subspace population the assignment recovers the natural
  // coupling: nearly every row keeps its own subspace (apportionment slack
  // aside) and is therefore unchanged.
  const Matrix data = synthetic_two_subspace(400, 0.5, 9);
  const Matrix coupled = lens_projection(data, lens, 77);
  std::size_t unchanged = 0;
  for (Eigen::Index r = 0; r < coupled.rows(); ++r)
    if ((coupled.row(r) - data.row(r)).norm() == 0.0) ++unchanged;
  CHECK(unchanged >= 370);
}

TEST_CASE("permutation test is deterministic across thread caps") {
  Rng rng(12);
  const Matrix a = random_matrix(80, 3, rng);
  const Matrix b = random_matrix(80, 3, rng);
  KernelSpec spec;
  spec.bandwidth2 = 1.7;
  const MmdTestResult r1 = mmd_permutation_test(a, b, spec, 0.05, 150, 5);
  set_thread_cap(1);
  const MmdTestResult r2 = mmd_permutation_test(a, b, spec, 0.05, 150, 5);
  set_thread_cap(std::nullopt);
  CHECK(r1.statistic == r2.statistic);
  CHECK(r1.p_value == r2.p_value);
}
