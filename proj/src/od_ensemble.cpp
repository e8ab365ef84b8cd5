#include "myosub/od_ensemble.hpp"

#include "myosub/kernel_mmd.hpp"
#include "myosub/parallel.hpp"
#include "myosub/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace myosub {

namespace {

constexpr double kDensityFloor = 1e-12;

struct LofModel {
  Matrix train;
  std::vector<double> kdist;
  std::vector<double> lrd;
  std::size_t k = 0;
};

std::vector<double> distances_to_train(const Matrix& train, const Eigen::RowVectorXd& p) {
  std::vector<double> d(static_cast<std::size_t>(train.rows()));
  for (Eigen::Index i = 0; i < train.rows(); ++i)
    d[static_cast<std::size_t>(i)] = (train.row(i) - p).norm();
  return d;
}

double kth_smallest(std::vector<double> values, std::size_t k) {
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   values.end());
  return values[k - 1];
}

LofModel lof_fit(const Matrix& train, std::size_t k) {
  const std::size_t n = static_cast<std::size_t>(train.rows());
  LofModel m;
  m.train = train;
  m.k = k;
  m.kdist.resize(n);
  m.lrd.resize(n);

  parallel_for_chunks(n, 32, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      auto d = distances_to_train(train, train.row(static_cast<Eigen::Index>(i)));
      d[i] = std::numeric_limits<double>::infinity();  // exclude self
      m.kdist[i] = kth_smallest(std::move(d), k);
    }
  });
  parallel_for_chunks(n, 32, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      const auto d = distances_to_train(train, train.row(static_cast<Eigen::Index>(i)));
      double reach_sum = 0.0;
      std::size_t count = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        if (d[j] <= m.kdist[i]) {
          reach_sum += std::max(m.kdist[j], d[j]);
          ++count;
        }
      }
      m.lrd[i] = static_cast<double>(count) / std::max(reach_sum, kDensityFloor);
    }
  });
  return m;
}

double lof_of_point(const LofModel& m, const Eigen::RowVectorXd& p) {
  const std::size_t n = static_cast<std::size_t>(m.train.rows());
  auto d = distances_to_train(m.train, p);
  const double kdist_p = kth_smallest(d, m.k);
  double reach_sum = 0.0, lrd_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (d[j] <= kdist_p) {
      reach_sum += std::max(m.kdist[j], d[j]);
      lrd_sum += m.lrd[j];
      ++count;
    }
  }
  const double lrd_p = static_cast<double>(count) / std::max(reach_sum, kDensityFloor);
  return lrd_sum / (static_cast<double>(count) * lrd_p);
}

}  // namespace

Matrix project(const Matrix& data, const SubspaceMask& mask) {
  if (mask.dim() != static_cast<std::size_t>(data.cols()))
    throw std::invalid_argument("project: mask length does not match column count");
  const std::size_t kept = mask.ones();
  if (kept == 0) throw std::invalid_argument("project: all-zero mask");
  Matrix out(data.rows(), static_cast<Eigen::Index>(kept));
  Eigen::Index col = 0;
  for (std::size_t c = 0; c < mask.dim(); ++c)
    if (mask.bits[c]) out.col(col++) = data.col(static_cast<Eigen::Index>(c));
  return out;
}

OdScores knn_score(const LabeledSplit& split, std::size_t k) {
  const std::size_t n_train = static_cast<std::size_t>(split.train.rows());
  if (k < 1 || k > n_train) throw std::invalid_argument("knn_score: k out of range");
  OdScores out;
  out.detector = Detector::knn;
  out.k = k;
  out.scores.resize(split.test.rows());
  const std::size_t n_test = static_cast<std::size_t>(split.test.rows());
  parallel_for_chunks(n_test, 32, [&](std::size_t t0, std::size_t t1) {
    for (std::size_t t = t0; t < t1; ++t) {
      auto d = distances_to_train(split.train, split.test.row(static_cast<Eigen::Index>(t)));
      out.scores(static_cast<Eigen::Index>(t)) = kth_smallest(std::move(d), k);
    }
  });
  return out;
}

OdScores lof_score(const LabeledSplit& split, std::size_t k) {
  const std::size_t n_train = static_cast<std::size_t>(split.train.rows());
  if (k < 1 || k >= n_train) throw std::invalid_argument("lof_score: k must be < train size");
  const LofModel model = lof_fit(split.train, k);
  OdScores out;
  out.detector = Detector::lof;
  out.k = k;
  out.scores.resize(split.test.rows());
  const std::size_t n_test = static_cast<std::size_t>(split.test.rows());
  parallel_for_chunks(n_test, 32, [&](std::size_t t0, std::size_t t1) {
    for (std::size_t t = t0; t < t1; ++t)
      out.scores(static_cast<Eigen::Index>(t)) =
          lof_of_point(model, split.test.row(static_cast<Eigen::Index>(t)));
  });
  if (!out.scores.allFinite()) throw std::runtime_error("lof_score: non-finite score");
  return out;
}

OdScores ensemble_scores(const LabeledSplit& split, const LensDistribution& lens,
                         Detector detector, std::size_t k) {
  lens.validate(static_cast<std::size_t>(split.train.cols()));
  OdScores out;
  out.detector = detector;
  out.k = k;
  out.scores = Vector::Zero(split.test.rows());
  // Aggregated in lens-entry order so results do not depend on scheduling.
  for (const auto& entry : lens.entries) {
    LabeledSplit projected;
    projected.train = project(split.train, entry.mask);
    projected.test = project(split.test, entry.mask);
    projected.test_labels = split.test_labels;
    try {
      const OdScores s = (detector == Detector::lof) ? lof_score(projected, k)
                                                     : knn_score(projected, k);
      out.scores += entry.probability * s.scores;
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(e.what()) + " [mask " + entry.mask.to_string() + "]");
    }
  }
  return out;
}

double auc(const Vector& scores, const std::vector<int>& labels) {
  const std::size_t n = static_cast<std::size_t>(scores.size());
  if (labels.size() != n) throw std::invalid_argument("auc: size mismatch");
  std::size_t n_out = 0;
  for (int l : labels) n_out += (l != 0);
  const std::size_t n_in = n - n_out;
  if (n_out == 0 || n_in == 0) throw std::invalid_argument("auc: both classes required");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) < scores(static_cast<Eigen::Index>(b));
  });

  double rank_sum_out = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores(static_cast<Eigen::Index>(idx[j])) ==
                        scores(static_cast<Eigen::Index>(idx[i])))
      ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]] != 0) rank_sum_out += mid_rank;
    i = j;
  }
  return (rank_sum_out - 0.5 * static_cast<double>(n_out) * (n_out + 1)) /
         (static_cast<double>(n_out) * static_cast<double>(n_in));
}

LensDistribution feature_bagging_lens(std::size_t d, std::size_t num_subspaces,
                                      std::uint64_t seed) {
  if (d < 2) throw std::invalid_argument("feature_bagging_lens: d must be >= 2");
  if (num_subspaces < 1) throw std::invalid_argument("feature_bagging_lens: K must be >= 1");
  Rng rng(seed);
  const std::size_t lo = d / 2;
  const std::size_t hi = d - 1;
  std::map<std::vector<std::uint8_t>, std::size_t> counts;
  std::vector<std::size_t> features(d);
  for (std::size_t s = 0; s < num_subspaces; ++s) {
    const std::size_t size = lo + static_cast<std::size_t>(rng.uniform_below(hi - lo + 1));
    std::iota(features.begin(), features.end(), 0);
    // partial Fisher-Yates: first `size` entries are a uniform distinct draw
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(d - i));
      std::swap(features[i], features[j]);
    }
    std::vector<std::uint8_t> bits(d, 0);
    for (std::size_t i = 0; i < size; ++i) bits[features[i]] = 1;
    counts[bits]++;
  }
  LensDistribution lens;
  lens.sample_count = static_cast<std::int64_t>(num_subspaces);
  for (const auto& [bits, c] : counts) {
    LensEntry e;
    e.mask = SubspaceMask(bits);
    e.probability = static_cast<double>(c) / static_cast<double>(num_subspaces);
    if (e.mask.all_ones()) lens.identity_fraction += e.probability;
    lens.entries.push_back(std::move(e));
  }
  return lens;
}

LabeledSplit one_class_split(const Matrix& data, const std::vector<int>& labels, double ratio,
                             std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(data.rows());
  if (labels.size() != n) throw std::invalid_argument("one_class_split: label size mismatch");
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("one_class_split: bad ratio");
  std::vector<std::size_t> inliers, outliers;
  for (std::size_t i = 0; i < n; ++i) (labels[i] == 0 ? inliers : outliers).push_back(i);
  if (inliers.size() < 5 || outliers.empty())
    throw std::invalid_argument("one_class_split: need >= 5 inliers and >= 1 outlier");

  Rng rng(seed);
  rng.shuffle(inliers);
  const std::size_t n_train = static_cast<std::size_t>(ratio * static_cast<double>(inliers.size()));
  if (n_train == 0 || n_train == inliers.size())
    throw std::invalid_argument("one_class_split: degenerate split");

  LabeledSplit split;
  split.train.resize(static_cast<Eigen::Index>(n_train), data.cols());
  for (std::size_t i = 0; i < n_train; ++i)
    split.train.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(inliers[i]));

  const std::size_t n_test = inliers.size() - n_train + outliers.size();
  split.test.resize(static_cast<Eigen::Index>(n_test), data.cols());
  split.test_labels.reserve(n_test);
  Eigen::Index row = 0;
  for (std::size_t i = n_train; i < inliers.size(); ++i) {
    split.test.row(row++) = data.row(static_cast<Eigen::Index>(inliers[i]));
    split.test_labels.push_back(0);
  }
  for (std::size_t i : outliers) {
    split.test.row(row++) = data.row(static_cast<Eigen::Index>(i));
    split.test_labels.push_back(1);
  }
  return split;
}

}  // namespace myosub
