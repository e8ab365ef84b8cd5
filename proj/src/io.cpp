#include "myosub/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace myosub {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("cannot open for reading: " + path);
  return is;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) fail("cannot open for writing: " + path);
  return os;
}

nlohmann::json layer_to_json(const LinearLayer& layer) {
  nlohmann::json w = nlohmann::json::array();
  for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < layer.w.cols(); ++c) row.push_back(layer.w(r, c));
    w.push_back(std::move(row));
  }
  nlohmann::json b = nlohmann::json::array();
  for (Eigen::Index r = 0; r < layer.b.size(); ++r) b.push_back(layer.b(r));
  return {{"w", std::move(w)}, {"b", std::move(b)}};
}

LinearLayer layer_from_json(const nlohmann::json& j) {
  LinearLayer layer;
  const auto& w = j.at("w");
  const auto& b = j.at("b");
  const Eigen::Index rows = static_cast<Eigen::Index>(w.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(w[0].size()) : 0;
  layer.w.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      layer.w(r, c) = w[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  layer.b.resize(static_cast<Eigen::Index>(b.size()));
  for (Eigen::Index r = 0; r < layer.b.size(); ++r)
    layer.b(r) = b[static_cast<std::size_t>(r)].get<double>();
  return layer;
}

nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"decay_rho", c.decay_rho},
          {"weight_decay", c.weight_decay},
          {"encoder_period", c.encoder_period},
          {"kernel_learning", c.kernel_learning},
          {"seed", c.seed}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.decay_rho = j.at("decay_rho").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.encoder_period = j.at("encoder_period").get<std::size_t>();
  c.kernel_learning = j.at("kernel_learning").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  return cells;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(std::ostream& os, const Table& table) {
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (table.columns[c].find_first_of(",\n") != std::string::npos)
      fail("csv cell contains a separator");
    os << table.columns[c] << (c + 1 < table.columns.size() ? "," : "");
  }
  os << "\n";
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) fail("csv row width mismatch");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c].find_first_of(",\n") != std::string::npos) fail("csv cell contains a separator");
      os << row[c] << (c + 1 < row.size() ? "," : "");
    }
    os << "\n";
  }
}

void write_csv_file(const std::string& path, const Table& table) {
  auto os = open_out(path);
  write_csv(os, table);
}

Table read_csv(std::istream& is) {
  Table table;
  std::string line;
  if (!std::getline(is, line)) fail("csv is empty");
  table.columns = split_line(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != table.columns.size()) fail("csv row width mismatch");
    table.rows.push_back(std::move(cells));
  }
  return table;
}

Table read_csv_file(const std::string& path) {
  auto is = open_in(path);
  return read_csv(is);
}

Dataset read_dataset_csv(const std::string& path) {
  const Table t = read_csv_file(path);
  if (t.columns.empty() || t.columns.back() != "label")
    fail("dataset csv must end with a 'label' column");
  const std::size_t d = t.columns.size() - 1;
  if (d == 0) fail("dataset csv has no feature columns");
  Dataset data;
  data.feature_names.assign(t.columns.begin(), t.columns.end() - 1);
  data.features.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(d));
  data.labels.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      std::size_t pos = 0;
      const double v = std::stod(t.rows[r][c], &pos);
      if (pos != t.rows[r][c].size()) fail("dataset csv: bad numeric cell");
      data.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
    const std::string& lab = t.rows[r][d];
    if (lab != "0" && lab != "1") fail("dataset csv: label must be 0 or 1");
    data.labels.push_back(lab == "1" ? 1 : 0);
  }
  return data;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  Table t;
  t.columns = data.feature_names;
  if (t.columns.empty())
    for (Eigen::Index c = 0; c < data.features.cols(); ++c)
      t.columns.push_back("f" + std::to_string(c));
  t.columns.push_back("label");
  for (Eigen::Index r = 0; r < data.features.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index c = 0; c < data.features.cols(); ++c)
      row.push_back(format_double(data.features(r, c)));
    row.push_back(data.labels[static_cast<std::size_t>(r)] ? "1" : "0");
    t.rows.push_back(std::move(row));
  }
  write_csv_file(path, t);
}

void save_model(const std::string& path, const GeneratorNet& net, const AutoencoderNet* ae,
                const TrainConfig& config) {
  nlohmann::json j;
  j["format"] = "myosub-model";
  j["version"] = 1;
  j["generator"]["layer_dims"] = net.layer_dims;
  j["generator"]["rng_seed"] = net.rng_seed;
  j["generator"]["layers"] = nlohmann::json::array();
  for (const auto& layer : net.layers) j["generator"]["layers"].push_back(layer_to_json(layer));
  if (ae) {
    j["autoencoder"]["encoder_dims"] = ae->encoder_dims;
    j["autoencoder"]["rng_seed"] = ae->rng_seed;
    j["autoencoder"]["encoder"] = nlohmann::json::array();
    for (const auto& layer : ae->encoder) j["autoencoder"]["encoder"].push_back(layer_to_json(layer));
    j["autoencoder"]["decoder"] = nlohmann::json::array();
    for (const auto& layer : ae->decoder) j["autoencoder"]["decoder"].push_back(layer_to_json(layer));
  } else {
    j["autoencoder"] = nullptr;
  }
  j["train_config"] = config_to_json(config);
  auto os = open_out(path);
  os << j.dump(1) << "\n";
}

Model load_model(const std::string& path) {
  auto is = open_in(path);
  nlohmann::json j;
  is >> j;
  if (j.value("format", "") != "myosub-model") fail("not a myosub model file");
  if (j.value("version", 0) != 1) fail("unsupported model version");
  Model m;
  m.net.layer_dims = j.at("generator").at("layer_dims").get<std::vector<std::size_t>>();
  m.net.rng_seed = j.at("generator").at("rng_seed").get<std::uint64_t>();
  for (const auto& layer : j.at("generator").at("layers"))
    m.net.layers.push_back(layer_from_json(layer));
  if (!j.at("autoencoder").is_null()) {
    m.autoencoder = std::make_unique<AutoencoderNet>();
    m.autoencoder->encoder_dims =
        j.at("autoencoder").at("encoder_dims").get<std::vector<std::size_t>>();
    m.autoencoder->rng_seed = j.at("autoencoder").at("rng_seed").get<std::uint64_t>();
    for (const auto& layer : j.at("autoencoder").at("encoder"))
      m.autoencoder->encoder.push_back(layer_from_json(layer));
    for (const auto& layer : j.at("autoencoder").at("decoder"))
      m.autoencoder->decoder.push_back(layer_from_json(layer));
  }
  m.config = config_from_json(j.at("train_config"));
  return m;
}

void write_loss_history_csv(const std::string& path, const std::vector<double>& history) {
  Table t;
  t.columns = {"epoch", "mean_loss"};
  for (std::size_t e = 0; e < history.size(); ++e)
    t.rows.push_back({std::to_string(e), format_double(history[e])});
  write_csv_file(path, t);
}

void write_lens_csv(const std::string& path, const LensDistribution& lens) {
  Table t;
  t.columns = {"mask", "probability"};
  for (const auto& e : lens.entries)
    t.rows.push_back({e.mask.to_string(), format_double(e.probability)});
  write_csv_file(path, t);
}

LensDistribution read_lens_csv(const std::string& path) {
  const Table t = read_csv_file(path);
  if (t.columns != std::vector<std::string>{"mask", "probability"})
    fail("lens csv must have columns mask,probability");
  LensDistribution lens;
  for (const auto& row : t.rows) {
    LensEntry e;
    std::vector<std::uint8_t> bits;
    for (char ch : row[0]) {
      if (ch != '0' && ch != '1') fail("lens csv: mask must be a 0/1 string");
      bits.push_back(ch == '1');
    }
    e.mask = SubspaceMask(std::move(bits));
    e.probability = std::stod(row[1]);
    lens.entries.push_back(std::move(e));
  }
  lens.sample_count = static_cast<std::int64_t>(lens.entries.size());
  return lens;
}

}  // namespace myosub
