#pragma once

#include "myosub/types.hpp"

#include <cstdint>

namespace myosub {

enum class Detector { lof, knn };

struct OdScores {
  Vector scores;  // one per test row; higher = more outlying
  Detector detector = Detector::knn;
  std::size_t k = 0;
};

struct LabeledSplit {
  Matrix train;                  // inliers only
  Matrix test;
  std::vector<int> test_labels;  // 1 = outlier
};

// Keeps exactly the columns where the mask bit is 1, order preserved.
Matrix project(const Matrix& data, const SubspaceMask& mask);

// Distance to the k-th nearest training neighbor.
OdScores knn_score(const LabeledSplit& split, std::size_t k);

// Local outlier factor of each test point against the training set. The
// k-distance neighborhood includes all equidistant ties; degenerate duplicate
// clusters are kept finite by flooring reachability sums at 1e-12.
OdScores lof_score(const LabeledSplit& split, std::size_t k);

// Probability-weighted aggregation over lens subspaces (raw scores, no
// per-subspace normalization).
OdScores ensemble_scores(const LabeledSplit& split, const LensDistribution& lens,
                         Detector detector, std::size_t k);

// Mann-Whitney AUC with half credit for ties.
double auc(const Vector& scores, const std::vector<int>& labels);

// K uniformly random subspaces of size in [floor(d/2), d-1]; duplicates are
// merged with probabilities summed.
LensDistribution feature_bagging_lens(std::size_t d, std::size_t num_subspaces,
                                      std::uint64_t seed);

// Seeded one-class split: first `ratio` of shuffled inliers -> train; the
// rest plus all outliers -> test.
LabeledSplit one_class_split(const Matrix& data, const std::vector<int>& labels, double ratio,
                             std::uint64_t seed);

}  // namespace myosub
