#include "myosub/experiments.hpp"

#include "myosub/kernel_mmd.hpp"
#include "myosub/parallel.hpp"
#include "myosub/rng.hpp"

#include <chrono>
#include <cmath>

namespace myosub {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix uniform_noise_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform01();
  return m;
}

Matrix subsample_rows(const Matrix& data, std::size_t cap, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(data.rows());
  if (n <= cap) return data;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  Matrix out(static_cast<Eigen::Index>(cap), data.cols());
  for (std::size_t i = 0; i < cap; ++i)
    out.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

Matrix gen_synthetic_population(const SyntheticSpec& spec) {
  if (spec.n < 1) throw std::invalid_argument("gen_synthetic_population: n must be >= 1");
  if (!(spec.F >= 0.0 && spec.F <= 1.0))
    throw std::invalid_argument("gen_synthetic_population: F must be in [0,1]");
  Rng rng(spec.seed);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(spec.n), 3);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    if (rng.uniform01() < spec.F) {
      out(r, 0) = rng.normal();
      out(r, 1) = rng.normal();
    } else {
      out(r, 2) = rng.normal();
    }
  }
  return out;
}

LensAttribution attribute_lens_3d(const LensDistribution& lens) {
  LensAttribution a;
  for (const auto& e : lens.entries) {
    if (e.mask.dim() != 3) throw std::invalid_argument("attribute_lens_3d: mask must be 3-d");
    const bool b1 = e.mask.bits[0], b2 = e.mask.bits[1], b3 = e.mask.bits[2];
    if (!b3 && (b1 || b2)) {
      a.s1 += e.probability;
    } else if (b3 && !b1 && !b2) {
      a.s2 += e.probability;
    } else {
      a.other += e.probability;
    }
  }
  const double total = a.s1 + a.s2 + a.other;
  if (total > 0.0) {
    a.s1 /= total;
    a.s2 /= total;
    a.other /= total;
  }
  return a;
}

Table run_lens_experiment(const LensExperimentConfig& config) {
  Table t;
  t.columns = {"F", "rep", "Fhat_S1", "Fhat_S2", "other", "status"};
  for (std::size_t fi = 0; fi < config.F_values.size(); ++fi) {
    const double F = config.F_values[fi];
    if (!(F >= 0.0 && F <= 1.0)) throw std::invalid_argument("run_lens_experiment: bad F");
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
      const std::uint64_t base = config.train.seed + rep;
      const std::uint64_t data_seed = Rng::derive(base, fi);
      std::vector<std::string> row{format_double(F), std::to_string(rep), "", "", "", "ok"};
      try {
        const Matrix data = gen_synthetic_population({config.n, F, data_seed});
        KernelSpec spec;
        spec.bandwidth2 = median_heuristic(data);
        TrainConfig train = config.train;
        train.seed = Rng::derive(base, 1000 + fi);
        train.kernel_learning = false;  // plain Gaussian kernel for the 3-d study
        const TrainResult res = train_vgan(data, train, spec);
        const LensDistribution lens =
            sample_lens(res.net, 500, Rng::derive(base, 2000 + fi));
        const LensAttribution a = attribute_lens_3d(lens);
        row[2] = format_double(a.s1);
        row[3] = format_double(a.s2);
        row[4] = format_double(a.other);
      } catch (const std::exception& e) {
        row[2] = row[3] = row[4] = "nan";
        row[5] = std::string("error: ") + e.what();
      }
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

Table run_od_benchmark(const OdBenchConfig& config, const Dataset& data) {
  Table t;
  t.columns = {"method", "detector", "rep", "auc", "wallclock_seconds", "myopicity_reject"};
  const std::string det_name = config.detector == Detector::lof ? "lof" : "knn";
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    const std::uint64_t rep_seed = config.train.seed + rep;
    const LabeledSplit split =
        one_class_split(data.features, data.labels, config.split_ratio, rep_seed);
    for (const auto& method : config.methods) {
      std::vector<std::string> row{method, det_name, std::to_string(rep), "", "", ""};
      try {
        const auto t0 = std::chrono::steady_clock::now();
        LensDistribution lens;
        if (method == "vgan") {
          KernelSpec spec;
          spec.bandwidth2 = median_heuristic(subsample_rows(
              split.train, config.test_rows_cap, Rng::derive(rep_seed, 11)));
          TrainConfig train = config.train;
          train.seed = Rng::derive(rep_seed, 12);
          const TrainResult res = train_vgan(split.train, train, spec);
          lens = sample_lens(res.net, config.lens_samples, Rng::derive(rep_seed, 13));
        } else if (method == "fb") {
          lens = feature_bagging_lens(static_cast<std::size_t>(split.train.cols()),
                                      config.fb_num_subspaces, Rng::derive(rep_seed, 14));
        } else if (method == "full") {
          lens.entries.push_back(
              {SubspaceMask::full(static_cast<std::size_t>(split.train.cols())), 1.0});
          lens.sample_count = 1;
          lens.identity_fraction = 1.0;
        } else {
          throw std::invalid_argument("unknown method: " + method);
        }
        const OdScores scores = ensemble_scores(split, lens, config.detector, config.k);
        const double score_auc = auc(scores.scores, split.test_labels);
        const double elapsed = seconds_since(t0);

        const Matrix test_rows =
            subsample_rows(split.train, config.test_rows_cap, Rng::derive(rep_seed, 15));
        KernelSpec test_spec;
        test_spec.bandwidth2 = median_heuristic(test_rows);
        const MmdTestResult myop =
            myopicity_test(test_rows, lens, test_spec, config.alpha, config.num_permutations,
                           Rng::derive(rep_seed, 16));
        row[3] = format_double(score_auc);
        row[4] = format_double(elapsed);
        row[5] = myop.reject ? "1" : "0";
      } catch (const std::exception& e) {
        row[3] = row[4] = "nan";
        row[5] = std::string("error: ") + e.what();
      }
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

Table run_scalability(const ScalabilityConfig& config) {
  Table t;
  t.columns = {"d", "seconds", "epochs", "status"};
  set_thread_cap(1);  // single-thread mode, regardless of MYOSUB_THREADS
  try {
    for (std::size_t di = 0; di < config.d_values.size(); ++di) {
      const std::size_t d = config.d_values[di];
      if (d < 2) throw std::invalid_argument("run_scalability: d must be >= 2");
      const Matrix data =
          uniform_noise_matrix(config.n, d, Rng::derive(config.train.seed, 100 + di));
      KernelSpec spec;
      spec.bandwidth2 = median_heuristic(data);
      TrainConfig train = config.train;
      train.seed = Rng::derive(config.train.seed, 200 + di);
      const auto t0 = std::chrono::steady_clock::now();
      std::string status = "ok";
      try {
        (void)train_vgan(data, train, spec);
      } catch (const std::exception& e) {
        status = std::string("error: ") + e.what();
      }
      const double elapsed = seconds_since(t0);
      if (status == "ok" && elapsed > config.budget_seconds) status = "timeout";
      t.rows.push_back({std::to_string(d), format_double(elapsed),
                        std::to_string(train.epochs), status});
    }
  } catch (...) {
    set_thread_cap(std::nullopt);
    throw;
  }
  set_thread_cap(std::nullopt);
  return t;
}

}  // namespace myosub
