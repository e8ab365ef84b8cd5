#pragma once

#include "myosub/types.hpp"

#include <cstdint>
#include <memory>

namespace myosub {

// Encoder hook for composed kernels k(E(x), E(y)).
class RowEncoder {
 public:
  virtual ~RowEncoder() = default;
  virtual Matrix encode_rows(const Matrix& rows) const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
};

struct KernelSpec {
  enum class Kind { gaussian };
  Kind kind = Kind::gaussian;
  double bandwidth2 = 1.0;  // sigma^2 in exp(-||x-y||^2 / (2 sigma^2))
  std::shared_ptr<const RowEncoder> composed_encoder;  // optional

  void validate() const {
    if (!(bandwidth2 > 0.0)) throw std::invalid_argument("bandwidth2 must be positive");
  }
};

enum class MmdVariant {
  unbiased_cross_full,      // cross term over all n*m pairs, factor 2/(n m)
  paper_eq6_cross_offdiag,  // cross term excludes i == j, factor 2/n^2; needs n == m
};

struct MmdEstimate {
  double value = 0.0;
  MmdVariant variant = MmdVariant::unbiased_cross_full;
  std::size_t n = 0, m = 0;
};

struct MmdTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double alpha = 0.0;
  bool reject = false;
  std::size_t num_permutations = 0;
};

double gaussian_kernel(const Vector& x, const Vector& y, const KernelSpec& spec);

// Median of squared pairwise distances over distinct row pairs, halved.
// Returns 1.0 when the median is zero (all rows identical).
double median_heuristic(const Matrix& data);

// Squared pairwise distances, clamped at zero.
Matrix pairwise_sq_dists(const Matrix& a, const Matrix& b);

// Kernel matrix; applies the composed encoder when present.
Matrix gaussian_kernel_matrix(const Matrix& a, const Matrix& b, const KernelSpec& spec);

// Buffer-reusing variant for hot loops: `out` is resized as needed and holds
// the result; repeated equal-shape calls do not allocate.
void gaussian_kernel_matrix_into(const Matrix& a, const Matrix& b, const KernelSpec& spec,
                                 Matrix& out);

MmdEstimate mmd2(const Matrix& sample_a, const Matrix& sample_b, const KernelSpec& spec,
                 MmdVariant variant = MmdVariant::unbiased_cross_full);

// Generic two-sample permutation test on the MMD^2 statistic. The p-value is
// (1 + #{permuted >= observed}) / (num_permutations + 1).
MmdTestResult mmd_permutation_test(const Matrix& sample_a, const Matrix& sample_b,
                                   const KernelSpec& spec, double alpha,
                                   std::size_t num_permutations, std::uint64_t seed,
                                   MmdVariant variant = MmdVariant::unbiased_cross_full);

// Projected sample for the myopicity test: a mask multiset apportioned from
// the lens probabilities (largest remainder) is assigned to rows, visiting
// rows in seeded random order and giving each the remaining mask of least
// distortion ||x - w.x||^2; the row is then multiplied element-wise by its
// mask (zeroed coordinates, full width kept).
Matrix lens_projection(const Matrix& data, const LensDistribution& lens, std::uint64_t seed);

MmdTestResult myopicity_test(const Matrix& data, const LensDistribution& lens,
                             const KernelSpec& spec, double alpha,
                             std::size_t num_permutations, std::uint64_t seed,
                             MmdVariant variant = MmdVariant::unbiased_cross_full);

}  // namespace myosub
