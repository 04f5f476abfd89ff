#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "shortcut_lab/dataset.hpp"
#include "shortcut_lab/io.hpp"
#include "shortcut_lab/mlp.hpp"
#include "shortcut_lab/ntk.hpp"

namespace shortcut_lab {

// JSON and CSV forms of the library's value types. Doubles are written with
// shortest round-trip formatting, so a write/read cycle is bit-exact.

inline nlohmann::json to_json(const DatasetSpec& spec) {
  return {{"rho_s", spec.rho_s},     {"rho_c", spec.rho_c},
          {"sigma_sc", spec.sigma_sc}, {"alpha_s", spec.alpha_s},
          {"alpha_c", spec.alpha_c}, {"eta_s", spec.eta_s},
          {"eta_c", spec.eta_c},     {"dim", spec.dim},
          {"n_train", spec.n_train}, {"n_val", spec.n_val},
          {"grid_res", spec.grid_res}, {"nest_lambda", spec.nest_lambda},
          {"seed", spec.seed}};
}

inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  DatasetSpec spec;
  spec.rho_s = j.value("rho_s", spec.rho_s);
  spec.rho_c = j.value("rho_c", spec.rho_c);
  spec.sigma_sc = j.value("sigma_sc", spec.sigma_sc);
  spec.alpha_s = j.value("alpha_s", spec.alpha_s);
  spec.alpha_c = j.value("alpha_c", spec.alpha_c);
  spec.eta_s = j.value("eta_s", spec.eta_s);
  spec.eta_c = j.value("eta_c", spec.eta_c);
  spec.dim = j.value("dim", spec.dim);
  spec.n_train = j.value("n_train", spec.n_train);
  spec.n_val = j.value("n_val", spec.n_val);
  spec.grid_res = j.value("grid_res", spec.grid_res);
  spec.nest_lambda = j.value("nest_lambda", spec.nest_lambda);
  spec.seed = j.value("seed", spec.seed);
  return spec;
}

inline nlohmann::json to_json(const MlpConfig& config) {
  return {{"depth", config.depth},
          {"width", config.width},
          {"activation", to_string(config.activation)},
          {"in_dim", config.in_dim},
          {"out_dim", config.out_dim}};
}

inline MlpConfig mlp_config_from_json(const nlohmann::json& j) {
  MlpConfig config;
  config.depth = j.value("depth", config.depth);
  config.width = j.value("width", config.width);
  if (j.contains("activation")) config.activation = activation_from_string(j.at("activation"));
  config.in_dim = j.value("in_dim", config.in_dim);
  config.out_dim = j.value("out_dim", config.out_dim);
  return config;
}

inline nlohmann::json to_json(const TrainConfig& config) {
  return {{"epochs", config.epochs},
          {"batch_size", config.batch_size},
          {"learning_rate", config.learning_rate},
          {"shuffle_seed", config.shuffle_seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig config;
  config.epochs = j.value("epochs", config.epochs);
  config.batch_size = j.value("batch_size", config.batch_size);
  config.learning_rate = j.value("learning_rate", config.learning_rate);
  config.shuffle_seed = j.value("shuffle_seed", config.shuffle_seed);
  return config;
}

inline nlohmann::json to_json(const KernelDataModel& model) {
  return {{"a1", model.a1},
          {"a2", model.a2},
          {"mu1", model.mu1},
          {"mu2", model.mu2},
          {"kind", to_string(model.kind)}};
}

inline KernelDataModel kernel_model_from_json(const nlohmann::json& j) {
  KernelDataModel model;
  model.a1 = j.value("a1", model.a1);
  model.a2 = j.value("a2", model.a2);
  model.mu1 = j.value("mu1", model.mu1);
  model.mu2 = j.value("mu2", model.mu2);
  if (j.contains("kind")) model.kind = kernel_kind_from_string(j.at("kind"));
  return model;
}

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> flat(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      flat[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);  // row-major
    }
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const Eigen::Index rows = j.at("rows");
  const Eigen::Index cols = j.at("cols");
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::runtime_error("matrix_from_json: size mismatch");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index jj = 0; jj < cols; ++jj) {
      m(i, jj) = data[static_cast<std::size_t>(i * cols + jj)];
    }
  }
  return m;
}

inline nlohmann::json nest_to_json(const std::optional<NestingNet>& nest) {
  if (!nest) return nullptr;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& q : nest->layers) layers.push_back(matrix_to_json(q));
  return {{"lambda", nest->lambda}, {"layers", layers}};
}

inline std::optional<NestingNet> nest_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  NestingNet net;
  net.lambda = j.at("lambda");
  for (const auto& layer : j.at("layers")) net.layers.push_back(matrix_from_json(layer));
  return net;
}

}  // namespace detail

inline nlohmann::json to_json(const EmbeddingApparatus& app) {
  return {{"w_s", std::vector<double>(app.w_s.begin(), app.w_s.end())},
          {"w_c", std::vector<double>(app.w_c.begin(), app.w_c.end())},
          {"nest_s", detail::nest_to_json(app.nest_s)},
          {"nest_c", detail::nest_to_json(app.nest_c)}};
}

inline EmbeddingApparatus apparatus_from_json(const nlohmann::json& j) {
  EmbeddingApparatus app;
  const auto ws = j.at("w_s").get<std::vector<double>>();
  const auto wc = j.at("w_c").get<std::vector<double>>();
  app.w_s = Eigen::Map<const Eigen::VectorXd>(ws.data(), static_cast<Eigen::Index>(ws.size()));
  app.w_c = Eigen::Map<const Eigen::VectorXd>(wc.data(), static_cast<Eigen::Index>(wc.size()));
  app.nest_s = detail::nest_from_json(j.at("nest_s"));
  app.nest_c = detail::nest_from_json(j.at("nest_c"));
  return app;
}

/// Writes spec.json, train.csv, val.csv, probes.csv and apparatus.json into
/// `dir`. Sample rows carry the latent pair, the label, and the embedded
/// input; probes carry only the latent pair (their embedding is recomputed
/// from the apparatus on load).
inline void write_dataset(const EmbeddedDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_json(to_json(ds.spec), (dir / "spec.json").string());
  save_json(to_json(ds.apparatus), (dir / "apparatus.json").string());

  auto write_split = [&](const std::string& name, const std::vector<LatentSample>& samples,
                         const Eigen::MatrixXd& inputs) {
    auto f = open_output((dir / name).string());
    f << "z_s,z_c,y";
    for (int j = 0; j < ds.spec.dim; ++j) f << ",x_" << j;
    f << '\n';
    for (std::size_t i = 0; i < samples.size(); ++i) {
      f << format_double(samples[i].z_s) << ',' << format_double(samples[i].z_c) << ','
        << samples[i].y;
      for (int j = 0; j < ds.spec.dim; ++j) {
        f << ',' << format_double(inputs(static_cast<Eigen::Index>(i), j));
      }
      f << '\n';
    }
  };
  write_split("train.csv", ds.train, ds.train_inputs);
  write_split("val.csv", ds.val, ds.val_inputs);

  auto f = open_output((dir / "probes.csv").string());
  f << "z_s,z_c\n";
  for (int i = 0; i < ds.probes.size(); ++i) {
    f << format_double(ds.probes.points(i, 0)) << ',' << format_double(ds.probes.points(i, 1))
      << '\n';
  }
}

inline EmbeddedDataset load_dataset(const std::filesystem::path& dir) {
  EmbeddedDataset ds;
  ds.spec = dataset_spec_from_json(load_json((dir / "spec.json").string()));
  ds.apparatus = apparatus_from_json(load_json((dir / "apparatus.json").string()));

  auto read_split = [&](const std::string& name, std::vector<LatentSample>& samples,
                        Eigen::MatrixXd& inputs) {
    auto f = open_input((dir / name).string());
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error(name + ": missing header");
    std::vector<std::vector<double>> rows;
    samples.clear();
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto fields = split_csv_line(line);
      if (static_cast<int>(fields.size()) != 3 + ds.spec.dim) {
        throw std::runtime_error(name + ": wrong column count");
      }
      LatentSample s{parse_double(fields[0]), parse_double(fields[1]),
                     static_cast<int>(parse_double(fields[2]))};
      samples.push_back(s);
      std::vector<double> x(static_cast<std::size_t>(ds.spec.dim));
      for (int j = 0; j < ds.spec.dim; ++j) x[static_cast<std::size_t>(j)] = parse_double(fields[static_cast<std::size_t>(3 + j)]);
      rows.push_back(std::move(x));
    }
    inputs.resize(static_cast<Eigen::Index>(rows.size()), ds.spec.dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (int j = 0; j < ds.spec.dim; ++j) inputs(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    }
  };
  read_split("train.csv", ds.train, ds.train_inputs);
  read_split("val.csv", ds.val, ds.val_inputs);

  ds.probes = make_probe_grid(ds.spec);
  {
    auto f = open_input((dir / "probes.csv").string());
    std::string line;
    std::getline(f, line);
    int i = 0;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto fields = split_csv_line(line);
      if (fields.size() != 2 || i >= ds.probes.size()) throw std::runtime_error("probes.csv: malformed");
      ds.probes.points(i, 0) = parse_double(fields[0]);
      ds.probes.points(i, 1) = parse_double(fields[1]);
      ++i;
    }
    if (i != ds.probes.size()) throw std::runtime_error("probes.csv: wrong probe count");
  }
  ds.probe_inputs = embed_all(ds.probes.points, ds.apparatus, ds.spec);
  return ds;
}

/// Model save/load: layer shapes, row-major weights, activation tag, seeds.
inline void save_mlp(const MlpModel& model, const std::string& path) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    nlohmann::json layer = detail::matrix_to_json(model.weights[l]);
    layer["bias"] = std::vector<double>(model.biases[l].begin(), model.biases[l].end());
    layers.push_back(std::move(layer));
  }
  nlohmann::json j = {{"config", to_json(model.config)},
                      {"init_seed", model.init_seed},
                      {"layers", layers}};
  save_json(j, path);
}

inline MlpModel load_mlp(const std::string& path) {
  const nlohmann::json j = load_json(path);
  MlpModel model;
  model.config = mlp_config_from_json(j.at("config"));
  model.init_seed = j.value("init_seed", std::uint64_t{0});
  for (const auto& layer : j.at("layers")) {
    model.weights.push_back(detail::matrix_from_json(layer));
    const auto bias = layer.at("bias").get<std::vector<double>>();
    model.biases.push_back(
        Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size())));
  }
  if (model.weights.empty()) throw std::runtime_error("load_mlp: no layers");
  return model;
}

}  // namespace shortcut_lab
