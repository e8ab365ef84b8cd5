#include "myosub/experiments.hpp"
#include "myosub/io.hpp"
#include "myosub/kernel_learning.hpp"
#include "myosub/kernel_mmd.hpp"
#include "myosub/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <set>

namespace {

using myosub::Dataset;
using myosub::Detector;
using myosub::KernelSpec;
using myosub::LensDistribution;
using myosub::Matrix;
using myosub::Table;
using myosub::TrainConfig;
using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw std::runtime_error("unknown config key '" + key + "' in " + where);
}

json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  json j;
  is >> j;
  if (!j.is_object()) throw std::runtime_error("config must be a JSON object");
  return j;
}

TrainConfig parse_train(const json& j, const std::string& where) {
  reject_unknown(j, {"epochs", "batch_size", "learning_rate", "decay_rho", "weight_decay",
                     "encoder_period", "kernel_learning", "seed"},
                 where);
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.decay_rho = j.value("decay_rho", c.decay_rho);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.encoder_period = j.value("encoder_period", c.encoder_period);
  c.kernel_learning = j.value("kernel_learning", c.kernel_learning);
  c.seed = j.value("seed", c.seed);
  return c;
}

// Command-line overrides shared by every command that trains.
struct TrainOverrides {
  std::optional<std::size_t> epochs, batch_size, encoder_period;
  std::optional<double> learning_rate, decay_rho, weight_decay;
  std::optional<bool> kernel_learning;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--batch_size", batch_size);
    cmd->add_option("--learning_rate", learning_rate);
    cmd->add_option("--decay_rho", decay_rho);
    cmd->add_option("--weight_decay", weight_decay);
    cmd->add_option("--encoder_period", encoder_period);
    cmd->add_flag("--kernel_learning,!--no-kernel_learning", kernel_learning);
  }

  void apply(TrainConfig& c) const {
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (decay_rho) c.decay_rho = *decay_rho;
    if (weight_decay) c.weight_decay = *weight_decay;
    if (encoder_period) c.encoder_period = *encoder_period;
    if (kernel_learning) c.kernel_learning = *kernel_learning;
  }
};

Detector parse_detector(const std::string& name) {
  if (name == "lof") return Detector::lof;
  if (name == "knn") return Detector::knn;
  throw std::runtime_error("detector must be lof or knn");
}

Matrix features_from_config(const json& j, std::uint64_t seed_override_base) {
  const bool has_file = j.contains("dataset_path");
  const bool has_synth = j.contains("synthetic");
  if (has_file == has_synth)
    throw std::runtime_error("provide exactly one of dataset_path or synthetic");
  if (has_file) {
    const Dataset data = myosub::read_dataset_csv(j.at("dataset_path").get<std::string>());
    return data.features;
  }
  const json& s = j.at("synthetic");
  reject_unknown(s, {"n", "F", "seed"}, "synthetic");
  myosub::SyntheticSpec spec;
  spec.n = s.at("n").get<std::size_t>();
  spec.F = s.at("F").get<double>();
  spec.seed = s.value("seed", seed_override_base);
  return myosub::gen_synthetic_population(spec);
}

LensDistribution lens_from_config(const json& j, std::uint64_t seed) {
  const bool has_model = j.contains("model_path");
  const bool has_lens = j.contains("lens_path");
  if (has_model == has_lens)
    throw std::runtime_error("provide exactly one of model_path or lens_path");
  if (has_lens) return myosub::read_lens_csv(j.at("lens_path").get<std::string>());
  const myosub::Model model = myosub::load_model(j.at("model_path").get<std::string>());
  const std::size_t count = j.value("lens_samples", std::size_t{500});
  return myosub::sample_lens(model.net, count, seed);
}

std::string out_path(const json& j, const std::string& key, const std::string& override_path) {
  if (!override_path.empty()) return override_path;
  if (!j.contains(key)) throw std::runtime_error("config needs '" + key + "' (or pass --out)");
  return j.at(key).get<std::string>();
}

int run(int argc, char** argv) {
  CLI::App app{"Subspace-lens learning and outlier-detection ensembles"};
  app.require_subcommand(1);

  std::string config_path, out_override;
  std::optional<std::uint64_t> seed_override;
  TrainOverrides overrides;

  auto add_common = [&](CLI::App* cmd, bool trains) {
    cmd->add_option("--config", config_path)->required();
    cmd->add_option("--seed", seed_override);
    cmd->add_option("--out", out_override);
    if (trains) overrides.add_flags(cmd);
  };

  auto* cmd_train = app.add_subcommand("train", "Train a subspace generator");
  add_common(cmd_train, true);
  auto* cmd_sample = app.add_subcommand("sample", "Sample a lens distribution from a model");
  add_common(cmd_sample, false);
  auto* cmd_test = app.add_subcommand("test-myopicity", "Run the lens two-sample test");
  add_common(cmd_test, false);
  auto* cmd_bench = app.add_subcommand("od-bench", "One-class outlier-detection benchmark");
  add_common(cmd_bench, true);
  auto* cmd_synth = app.add_subcommand("synth-lens", "Lens-recovery study on synthetic data");
  add_common(cmd_synth, true);
  auto* cmd_scal = app.add_subcommand("scalability", "Single-thread training timings");
  add_common(cmd_scal, true);

  CLI11_PARSE(app, argc, argv);
  const json cfg = load_config(config_path);

  if (cmd_train->parsed()) {
    reject_unknown(cfg, {"dataset_path", "synthetic", "train", "output_model",
                         "output_loss_history"},
                   "train config");
    TrainConfig train = parse_train(cfg.value("train", json::object()), "train");
    overrides.apply(train);
    if (seed_override) train.seed = *seed_override;
    const Matrix data = features_from_config(cfg, train.seed);
    KernelSpec spec;
    spec.bandwidth2 = myosub::median_heuristic(data);
    const myosub::TrainResult res = myosub::train_vgan(data, train, spec);
    const std::string model_path = out_path(cfg, "output_model", out_override);
    myosub::save_model(model_path, res.net, res.autoencoder.get(), train);
    if (cfg.contains("output_loss_history"))
      myosub::write_loss_history_csv(cfg.at("output_loss_history").get<std::string>(),
                                     res.loss_history);
    std::cout << "model written to " << model_path << "\n";
    return 0;
  }

  if (cmd_sample->parsed()) {
    reject_unknown(cfg, {"model_path", "count", "seed", "output_path"}, "sample config");
    const myosub::Model model = myosub::load_model(cfg.at("model_path").get<std::string>());
    const std::size_t count = cfg.value("count", std::size_t{500});
    const std::uint64_t seed = seed_override ? *seed_override : cfg.value("seed", std::uint64_t{0});
    const LensDistribution lens = myosub::sample_lens(model.net, count, seed);
    const std::string path = out_path(cfg, "output_path", out_override);
    myosub::write_lens_csv(path, lens);
    std::cout << "lens with " << lens.entries.size() << " subspaces written to " << path
              << " (identity fraction " << lens.identity_fraction << ")\n";
    return 0;
  }

  if (cmd_test->parsed()) {
    reject_unknown(cfg, {"dataset_path", "model_path", "lens_path", "lens_samples", "alpha",
                         "num_permutations", "test_rows_cap", "seed", "output_path"},
                   "test-myopicity config");
    const Dataset data = myosub::read_dataset_csv(cfg.at("dataset_path").get<std::string>());
    const std::uint64_t seed = seed_override ? *seed_override : cfg.value("seed", std::uint64_t{0});
    const LensDistribution lens = lens_from_config(cfg, myosub::Rng::derive(seed, 1));
    const std::size_t cap = cfg.value("test_rows_cap", std::size_t{2000});
    Matrix rows = data.features;
    if (static_cast<std::size_t>(rows.rows()) > cap) {
      std::vector<std::size_t> idx(static_cast<std::size_t>(rows.rows()));
      std::iota(idx.begin(), idx.end(), 0);
      myosub::Rng rng(myosub::Rng::derive(seed, 2));
      rng.shuffle(idx);
      Matrix sub(static_cast<Eigen::Index>(cap), rows.cols());
      for (std::size_t i = 0; i < cap; ++i)
        sub.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(idx[i]));
      rows = std::move(sub);
    }
    KernelSpec spec;
    spec.bandwidth2 = myosub::median_heuristic(rows);
    const myosub::MmdTestResult res = myosub::myopicity_test(
        rows, lens, spec, cfg.value("alpha", 0.10),
        cfg.value("num_permutations", std::size_t{200}), myosub::Rng::derive(seed, 3));
    Table t;
    t.columns = {"statistic", "p_value", "alpha", "reject", "num_permutations"};
    t.rows.push_back({myosub::format_double(res.statistic), myosub::format_double(res.p_value),
                      myosub::format_double(res.alpha), res.reject ? "1" : "0",
                      std::to_string(res.num_permutations)});
    if (!out_override.empty() || cfg.contains("output_path"))
      myosub::write_csv_file(out_path(cfg, "output_path", out_override), t);
    std::cout << "statistic=" << res.statistic << " p=" << res.p_value
              << " reject=" << (res.reject ? "yes" : "no") << "\n";
    return 0;
  }

  if (cmd_bench->parsed()) {
    reject_unknown(cfg, {"dataset_path", "methods", "detector", "k", "alpha", "repetitions",
                         "num_permutations", "test_rows_cap", "fb_num_subspaces", "lens_samples",
                         "split_ratio", "train", "output_path"},
                   "od-bench config");
    const Dataset data = myosub::read_dataset_csv(cfg.at("dataset_path").get<std::string>());
    myosub::OdBenchConfig bench;
    if (cfg.contains("methods")) bench.methods = cfg.at("methods").get<std::vector<std::string>>();
    bench.detector = parse_detector(cfg.value("detector", std::string("lof")));
    bench.k = cfg.value("k", bench.detector == Detector::lof ? std::size_t{20} : std::size_t{5});
    bench.alpha = cfg.value("alpha", bench.alpha);
    bench.repetitions = cfg.value("repetitions", bench.repetitions);
    bench.num_permutations = cfg.value("num_permutations", bench.num_permutations);
    bench.test_rows_cap = cfg.value("test_rows_cap", bench.test_rows_cap);
    bench.fb_num_subspaces = cfg.value("fb_num_subspaces", bench.fb_num_subspaces);
    bench.lens_samples = cfg.value("lens_samples", bench.lens_samples);
    bench.split_ratio = cfg.value("split_ratio", bench.split_ratio);
    bench.train = parse_train(cfg.value("train", json::object()), "train");
    overrides.apply(bench.train);
    if (seed_override) bench.train.seed = *seed_override;
    const Table t = myosub::run_od_benchmark(bench, data);
    myosub::write_csv_file(out_path(cfg, "output_path", out_override), t);
    std::cout << t.rows.size() << " benchmark rows written\n";
    return 0;
  }

  if (cmd_synth->parsed()) {
    reject_unknown(cfg, {"F_values", "repetitions", "n", "train", "output_path"},
                   "synth-lens config");
    myosub::LensExperimentConfig lc;
    lc.F_values = cfg.at("F_values").get<std::vector<double>>();
    lc.repetitions = cfg.value("repetitions", lc.repetitions);
    lc.n = cfg.value("n", lc.n);
    lc.train = parse_train(cfg.value("train", json::object()), "train");
    overrides.apply(lc.train);
    if (seed_override) lc.train.seed = *seed_override;
    const Table t = myosub::run_lens_experiment(lc);
    myosub::write_csv_file(out_path(cfg, "output_path", out_override), t);
    std::cout << t.rows.size() << " lens-experiment rows written\n";
    return 0;
  }

  if (cmd_scal->parsed()) {
    reject_unknown(cfg, {"d_values", "n", "budget_seconds", "train", "output_path"},
                   "scalability config");
    myosub::ScalabilityConfig sc;
    sc.d_values = cfg.at("d_values").get<std::vector<std::size_t>>();
    sc.n = cfg.value("n", sc.n);
    sc.budget_seconds = cfg.value("budget_seconds", sc.budget_seconds);
    sc.train = parse_train(cfg.value("train", json::object()), "train");
    overrides.apply(sc.train);
    if (seed_override) sc.train.seed = *seed_override;
    const Table t = myosub::run_scalability(sc);
    myosub::write_csv_file(out_path(cfg, "output_path", out_override), t);
    std::cout << t.rows.size() << " scalability rows written\n";
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
