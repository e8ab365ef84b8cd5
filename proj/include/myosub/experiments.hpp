#pragma once

#include "myosub/generator.hpp"
#include "myosub/io.hpp"
#include "myosub/od_ensemble.hpp"
#include "myosub/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace myosub {

struct SyntheticSpec {
  std::size_t n = 0;
  double F = 0.5;  // probability of landing on the x1-x2 plane
  std::uint64_t seed = 0;
};

// n x 3 rows: with probability F a plane point (g1, g2, 0), else (0, 0, g3).
Matrix gen_synthetic_population(const SyntheticSpec& spec);

// Bucketed lens mass for the 3-d synthetic study: s1 = masks supported inside
// {1,2}, s2 = exactly {3}, other = the rest.
struct LensAttribution {
  double s1 = 0.0, s2 = 0.0, other = 0.0;
};
LensAttribution attribute_lens_3d(const LensDistribution& lens);

struct LensExperimentConfig {
  std::vector<double> F_values;
  std::size_t repetitions = 10;
  std::size_t n = 10000;
  TrainConfig train;
};
// Columns: F, rep, Fhat_S1, Fhat_S2, other, status
Table run_lens_experiment(const LensExperimentConfig& config);

struct OdBenchConfig {
  std::vector<std::string> methods = {"vgan", "fb", "full"};
  Detector detector = Detector::lof;
  std::size_t k = 20;
  double alpha = 0.10;
  std::size_t repetitions = 10;
  std::size_t num_permutations = 200;
  std::size_t test_rows_cap = 2000;  // myopicity-test subsample cap
  std::size_t fb_num_subspaces = 500;
  std::size_t lens_samples = 500;
  double split_ratio = 0.8;
  TrainConfig train;
};
// Columns: method, detector, rep, auc, wallclock_seconds, myopicity_reject
Table run_od_benchmark(const OdBenchConfig& config, const Dataset& data);

struct ScalabilityConfig {
  std::vector<std::size_t> d_values;
  std::size_t n = 1000;
  double budget_seconds = 900.0;
  TrainConfig train;
};
// Columns: d, seconds, epochs, status. Pinned to one worker thread.
Table run_scalability(const ScalabilityConfig& config);

}  // namespace myosub
