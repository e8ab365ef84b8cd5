#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace myosub {

// Rows are samples, columns are features.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Axis-parallel projection encoded as a 0/1 vector (the diagonal of a binary
// diagonal matrix). The all-zero mask is not a valid projection; producers
// repair it before emitting.
struct SubspaceMask {
  std::vector<std::uint8_t> bits;

  SubspaceMask() = default;
  explicit SubspaceMask(std::vector<std::uint8_t> b) : bits(std::move(b)) {}

  std::size_t dim() const { return bits.size(); }

  std::size_t ones() const {
    std::size_t c = 0;
    for (auto b : bits) c += (b != 0);
    return c;
  }

  bool all_ones() const { return ones() == dim() && dim() > 0; }

  static SubspaceMask full(std::size_t d) {
    return SubspaceMask(std::vector<std::uint8_t>(d, 1));
  }

  std::string to_string() const {
    std::string s(bits.size(), '0');
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) s[i] = '1';
    return s;
  }

  auto operator<=>(const SubspaceMask&) const = default;
};

struct LensEntry {
  SubspaceMask mask;
  double probability = 0.0;
};

// Deduplicated empirical distribution over masks.
struct LensDistribution {
  std::vector<LensEntry> entries;
  std::int64_t sample_count = 0;
  // Sampled frequency of the full (identity) mask; reported as a diagnostic.
  double identity_fraction = 0.0;

  void validate(std::size_t dim) const {
    if (entries.empty()) throw std::invalid_argument("lens distribution is empty");
    double total = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.mask.dim() != dim) throw std::invalid_argument("lens mask dimension mismatch");
      if (e.mask.ones() == 0) throw std::invalid_argument("lens contains an all-zero mask");
      if (!(e.probability > 0.0 && e.probability <= 1.0))
        throw std::invalid_argument("lens probability out of (0,1]");
      for (std::size_t j = i + 1; j < entries.size(); ++j)
        if (entries[j].mask == e.mask)
          throw std::invalid_argument("lens masks are not pairwise distinct");
      total += e.probability;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("lens probabilities do not sum to 1");
  }
};

}  // namespace myosub
