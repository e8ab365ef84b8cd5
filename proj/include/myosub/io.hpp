#pragma once

#include "myosub/generator.hpp"
#include "myosub/kernel_learning.hpp"
#include "myosub/types.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace myosub {

// Plain CSV table of string cells. Numeric cells are written with enough
// digits to round-trip exactly (see format_double).
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  bool operator==(const Table&) const = default;
};

std::string format_double(double v);

void write_csv(std::ostream& os, const Table& table);
void write_csv_file(const std::string& path, const Table& table);
Table read_csv(std::istream& is);
Table read_csv_file(const std::string& path);

// Feature table with a trailing binary "label" column.
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::string> feature_names;
};

Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const std::string& path, const Dataset& data);

struct Model {
  GeneratorNet net;
  std::unique_ptr<AutoencoderNet> autoencoder;
  TrainConfig config;
};

void save_model(const std::string& path, const GeneratorNet& net, const AutoencoderNet* ae,
                const TrainConfig& config);
Model load_model(const std::string& path);

void write_loss_history_csv(const std::string& path, const std::vector<double>& history);

void write_lens_csv(const std::string& path, const LensDistribution& lens);
LensDistribution read_lens_csv(const std::string& path);

}  // namespace myosub
