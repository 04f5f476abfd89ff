#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <future>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "shortcut_lab/biasmetric.hpp"
#include "shortcut_lab/classifiers.hpp"
#include "shortcut_lab/dataset.hpp"
#include "shortcut_lab/io.hpp"
#include "shortcut_lab/mlp.hpp"
#include "shortcut_lab/ntk.hpp"
#include "shortcut_lab/serialize.hpp"

namespace shortcut_lab {

// Seeded multi-run experiment sweeps. A sweep is the Cartesian product of
// named parameter axes over a base configuration; each cell runs n_runs
// independent (dataset, init, shuffle) seeds and aggregates the bias
// reports into one CSV row.
//
// Seed derivation is pure arithmetic on (base_seed, cell_id, run index):
//   key          = combine_seed(base_seed, hash_string(cell_id))
//   dataset seed = combine_seed(key, 3 run)
//   init seed    = combine_seed(key, 3 run + 1)
//   shuffle seed = combine_seed(key, 3 run + 2)
// so results are independent of cell execution order.

inline constexpr const char* kSweepCsvHeader =
    "cell_id,rho_s,rho_c,sigma_sc,alpha_ratio,eta_s,eta_c,depth,width,activation,"
    "n_runs,n_excluded,mean_bias,std_bias,mean_reliance_model,mean_reliance_optimal,"
    "mean_train_acc,mean_val_acc";

struct SweepAxis {
  std::string name;
  std::vector<nlohmann::json> values;
};

struct SweepSpec {
  std::vector<SweepAxis> axes;
  DatasetSpec base_dataset;
  MlpConfig base_model;
  TrainConfig base_train;
  int n_runs = 10;
  std::uint64_t base_seed = 0;

  void validate() const {
    if (axes.empty()) throw std::invalid_argument("sweep: axes must be nonempty");
    for (const auto& axis : axes) {
      if (axis.values.empty()) throw std::invalid_argument("sweep axis '" + axis.name + "' is empty");
    }
    if (n_runs < 1) throw std::invalid_argument("sweep: n_runs must be >= 1");
  }
};

/// One fully resolved sweep cell.
struct CellParams {
  std::string cell_id;
  DatasetSpec dataset;
  MlpConfig model;
  TrainConfig train;
  double alpha_ratio = 1.0;  ///< echo column; alpha_s / alpha_c
};

struct RunRecord {
  BiasReport report;
  double final_train_acc = 0.0;
  double final_val_acc = 0.0;
  bool diverged = false;
};

struct CellResult {
  CellParams params;
  int n_runs = 0;
  int n_excluded = 0;  ///< diverged runs, excluded from every mean
  std::vector<RunRecord> runs;
  double mean_bias = 0.0;
  double std_bias = 0.0;  ///< sample standard deviation; 0 when fewer than 2 runs
  double mean_reliance_model = 0.0;
  double mean_reliance_optimal = 0.0;
  double mean_train_acc = 0.0;
  double mean_val_acc = 0.0;
};

namespace detail {

inline std::string axis_value_to_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

/// Applies one named axis value to the cell. Recognized names cover the
/// dataset, architecture, and training knobs used by the experiments.
inline void apply_axis(CellParams& cell, const std::string& name, const nlohmann::json& value) {
  if (name == "rho_s") cell.dataset.rho_s = value;
  else if (name == "rho_c") cell.dataset.rho_c = value;
  else if (name == "sigma_sc") cell.dataset.sigma_sc = value;
  else if (name == "alpha_s") cell.dataset.alpha_s = value;
  else if (name == "alpha_c") cell.dataset.alpha_c = value;
  else if (name == "alpha_ratio") cell.alpha_ratio = value;  // resolved in finalize_cell
  else if (name == "eta_s") cell.dataset.eta_s = value;
  else if (name == "eta_c") cell.dataset.eta_c = value;
  else if (name == "depth") cell.model.depth = value;
  else if (name == "width") cell.model.width = value;
  else if (name == "activation") cell.model.activation = activation_from_string(value);
  else if (name == "epochs") cell.train.epochs = value;
  else if (name == "batch_size") cell.train.batch_size = value;
  else if (name == "learning_rate") cell.train.learning_rate = value;
  else throw std::invalid_argument("sweep: unrecognized axis '" + name + "'");
}

/// The alpha_ratio axis fixes alpha_s / alpha_c while preserving the base
/// spec's geometric mean sqrt(alpha_s alpha_c). Only the ratio carries
/// meaning for the classifiers and the metric; the preserved scale keeps
/// SGD in the same stable regime across the whole axis.
inline void finalize_cell(CellParams& cell, bool has_ratio_axis) {
  if (has_ratio_axis) {
    const double mean = std::sqrt(cell.dataset.alpha_s * cell.dataset.alpha_c);
    const double root = std::sqrt(cell.alpha_ratio);
    cell.dataset.alpha_s = mean * root;
    cell.dataset.alpha_c = mean / root;
  } else {
    cell.alpha_ratio = cell.dataset.alpha_s / cell.dataset.alpha_c;
  }
  cell.model.in_dim = cell.dataset.dim;
  cell.dataset.validate();
  cell.model.validate();
  cell.train.validate();
}

}  // namespace detail

/// Runs one cell: per run, derive seeds, generate the dataset, fit the
/// reference classifier (on raw latents iff the cell nests a feature, per
/// the nesting-experiment protocol; on embedded inputs otherwise), train the
/// model, and score both over the probe grid. Diverged runs are counted and
/// excluded from the aggregates.
inline CellResult run_cell(const CellParams& params, int n_runs, std::uint64_t base_seed) {
  CellResult result;
  result.params = params;
  result.n_runs = n_runs;
  const std::uint64_t key = combine_seed(base_seed, hash_string(params.cell_id));
  const bool reference_on_latents = params.dataset.eta_s > 0 || params.dataset.eta_c > 0;

  double sum_bias = 0.0, sum_sq_bias = 0.0, sum_rm = 0.0, sum_ro = 0.0, sum_tr = 0.0, sum_va = 0.0;
  for (int run = 0; run < n_runs; ++run) {
    DatasetSpec spec = params.dataset;
    spec.seed = combine_seed(key, static_cast<std::uint64_t>(3 * run));
    const std::uint64_t init_seed = combine_seed(key, static_cast<std::uint64_t>(3 * run + 1));
    TrainConfig train_cfg = params.train;
    train_cfg.shuffle_seed = combine_seed(key, static_cast<std::uint64_t>(3 * run + 2));

    const EmbeddedDataset ds = generate_dataset(spec);

    LinearClassifier reference;
    std::vector<int> optimal_labels;
    if (reference_on_latents) {
      reference = fit_lda(latent_matrix(ds.train), ds.train_labels());
      optimal_labels = predict_labels(reference, ds.probes.points);
    } else {
      reference = fit_lda(ds.train_inputs, ds.train_labels());
      optimal_labels = predict_labels(reference, ds.probe_inputs);
    }

    MlpModel model = init_mlp(params.model, init_seed);
    RunRecord record;
    try {
      const TrainHistory history =
          train(model, ds.train_inputs, ds.train_labels(), ds.val_inputs, ds.val_labels(), train_cfg);
      record.final_train_acc = history.epochs.back().train_acc;
      record.final_val_acc = history.epochs.back().val_acc;
    } catch (const TrainingDiverged&) {
      record.diverged = true;
      result.n_excluded += 1;
      result.runs.push_back(record);
      continue;
    }

    const Eigen::VectorXd scores = forward_batch(model, ds.probe_inputs);
    std::vector<int> model_labels(static_cast<std::size_t>(scores.size()));
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      model_labels[static_cast<std::size_t>(i)] = sign_pm1(scores[i]);
    }
    record.report = shortcut_bias(model_labels, optimal_labels, ds.probes, spec, params.model);
    result.runs.push_back(record);

    sum_bias += record.report.bias;
    sum_sq_bias += record.report.bias * record.report.bias;
    sum_rm += record.report.reliance_model;
    sum_ro += record.report.reliance_optimal;
    sum_tr += record.final_train_acc;
    sum_va += record.final_val_acc;
  }

  const int kept = n_runs - result.n_excluded;
  if (kept > 0) {
    result.mean_bias = sum_bias / kept;
    result.mean_reliance_model = sum_rm / kept;
    result.mean_reliance_optimal = sum_ro / kept;
    result.mean_train_acc = sum_tr / kept;
    result.mean_val_acc = sum_va / kept;
    if (kept > 1) {
      const double var = (sum_sq_bias - sum_bias * sum_bias / kept) / (kept - 1);
      result.std_bias = std::sqrt(std::max(0.0, var));
    }
  }
  return result;
}

/// Expands the Cartesian product of the axes into cells; cell ids list the
/// axis values in axis order, e.g. "rho_s=0.85|alpha_ratio=64".
inline std::vector<CellParams> expand_cells(const SweepSpec& sweep) {
  sweep.validate();
  bool has_ratio_axis = false;
  for (const auto& axis : sweep.axes) has_ratio_axis |= axis.name == "alpha_ratio";

  std::vector<CellParams> cells;
  std::vector<std::size_t> index(sweep.axes.size(), 0);
  while (true) {
    CellParams cell;
    cell.dataset = sweep.base_dataset;
    cell.model = sweep.base_model;
    cell.train = sweep.base_train;
    std::string id;
    for (std::size_t a = 0; a < sweep.axes.size(); ++a) {
      const auto& axis = sweep.axes[a];
      const auto& value = axis.values[index[a]];
      detail::apply_axis(cell, axis.name, value);
      if (!id.empty()) id += '|';
      id += axis.name + "=" + detail::axis_value_to_string(value);
    }
    cell.cell_id = id;
    detail::finalize_cell(cell, has_ratio_axis);
    cells.push_back(std::move(cell));

    std::size_t a = sweep.axes.size();
    while (a > 0) {
      --a;
      if (++index[a] < sweep.axes[a].values.size()) break;
      index[a] = 0;
      if (a == 0) return cells;
    }
  }
}

inline void write_sweep_csv(const std::vector<CellResult>& results, const std::string& path);

/// Runs every cell of the sweep; cells are independent and execute in
/// parallel when hardware threads are available. Results come back in cell
/// order regardless of scheduling, and an optional CSV is emitted.
inline std::vector<CellResult> sweep(const SweepSpec& spec,
                                     const std::optional<std::string>& csv_path = std::nullopt) {
  const std::vector<CellParams> cells = expand_cells(spec);
  std::vector<CellResult> results(cells.size());
  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                         static_cast<unsigned>(cells.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      results[i] = run_cell(cells[i], spec.n_runs, spec.base_seed);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= cells.size()) return;
          results[i] = run_cell(cells[i], spec.n_runs, spec.base_seed);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  if (csv_path) write_sweep_csv(results, *csv_path);
  return results;
}

inline void write_sweep_csv(const std::vector<CellResult>& results, const std::string& path) {
  auto f = open_output(path);
  f << kSweepCsvHeader << '\n';
  for (const auto& r : results) {
    f << r.params.cell_id << ',' << format_double(r.params.dataset.rho_s) << ','
      << format_double(r.params.dataset.rho_c) << ',' << format_double(r.params.dataset.sigma_sc)
      << ',' << format_double(r.params.alpha_ratio) << ',' << r.params.dataset.eta_s << ','
      << r.params.dataset.eta_c << ',' << r.params.model.depth << ',' << r.params.model.width
      << ',' << to_string(r.params.model.activation) << ',' << r.n_runs << ',' << r.n_excluded
      << ',' << format_double(r.mean_bias) << ',' << format_double(r.std_bias) << ','
      << format_double(r.mean_reliance_model) << ',' << format_double(r.mean_reliance_optimal)
      << ',' << format_double(r.mean_train_acc) << ',' << format_double(r.mean_val_acc) << '\n';
  }
}

/// One parsed row of a sweep CSV; numeric fields round-trip bit-exactly.
struct SweepCsvRow {
  std::string cell_id;
  double rho_s, rho_c, sigma_sc, alpha_ratio;
  int eta_s, eta_c, depth, width;
  std::string activation;
  int n_runs, n_excluded;
  double mean_bias, std_bias, mean_reliance_model, mean_reliance_optimal;
  double mean_train_acc, mean_val_acc;
};

inline std::vector<SweepCsvRow> parse_sweep_csv(const std::string& path) {
  auto f = open_input(path);
  std::string line;
  if (!std::getline(f, line) || line != kSweepCsvHeader) {
    throw std::runtime_error("parse_sweep_csv: unexpected header in " + path);
  }
  std::vector<SweepCsvRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 18) throw std::runtime_error("parse_sweep_csv: wrong column count");
    SweepCsvRow row;
    row.cell_id = fields[0];
    row.rho_s = parse_double(fields[1]);
    row.rho_c = parse_double(fields[2]);
    row.sigma_sc = parse_double(fields[3]);
    row.alpha_ratio = parse_double(fields[4]);
    row.eta_s = static_cast<int>(parse_double(fields[5]));
    row.eta_c = static_cast<int>(parse_double(fields[6]));
    row.depth = static_cast<int>(parse_double(fields[7]));
    row.width = static_cast<int>(parse_double(fields[8]));
    row.activation = fields[9];
    row.n_runs = static_cast<int>(parse_double(fields[10]));
    row.n_excluded = static_cast<int>(parse_double(fields[11]));
    row.mean_bias = parse_double(fields[12]);
    row.std_bias = parse_double(fields[13]);
    row.mean_reliance_model = parse_double(fields[14]);
    row.mean_reliance_optimal = parse_double(fields[15]);
    row.mean_train_acc = parse_double(fields[16]);
    row.mean_val_acc = parse_double(fields[17]);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline SweepSpec sweep_spec_from_json(const nlohmann::ordered_json& j) {
  SweepSpec spec;
  if (!j.contains("axes")) throw std::invalid_argument("sweep spec: missing axes");
  for (const auto& [name, values] : j.at("axes").items()) {
    SweepAxis axis;
    axis.name = name;
    for (const auto& v : values) axis.values.push_back(v);
    spec.axes.push_back(std::move(axis));
  }
  if (j.contains("base_dataset")) spec.base_dataset = dataset_spec_from_json(j.at("base_dataset"));
  if (j.contains("base_model")) spec.base_model = mlp_config_from_json(j.at("base_model"));
  if (j.contains("base_train")) spec.base_train = train_config_from_json(j.at("base_train"));
  spec.n_runs = j.value("n_runs", spec.n_runs);
  spec.base_seed = j.value("base_seed", spec.base_seed);
  return spec;
}

/// Availability-bias sign maps over an (a1, a2) grid, one CSV per mu2 value,
/// long format with columns a1,a2,sign. Files are named signmap_mu2_<v>.csv.
inline std::vector<std::string> emit_signmap(double mu1, std::span<const double> mu2_values,
                                             std::span<const double> a_grid,
                                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (double mu2 : mu2_values) {
    const Eigen::MatrixXi map = sign_map(mu1, mu2, a_grid, a_grid);
    std::string name = "signmap_mu2_" + format_double(mu2) + ".csv";
    std::replace(name.begin(), name.end(), '/', '_');
    const std::string path = (dir / name).string();
    auto f = open_output(path);
    f << "a1,a2,sign\n";
    for (Eigen::Index i = 0; i < map.rows(); ++i) {
      for (Eigen::Index j = 0; j < map.cols(); ++j) {
        f << format_double(a_grid[static_cast<std::size_t>(i)]) << ','
          << format_double(a_grid[static_cast<std::size_t>(j)]) << ',' << map(i, j) << '\n';
      }
    }
    paths.push_back(path);
  }
  return paths;
}

/// Default availability grid for sign maps: 50 points covering [0.1, 5].
inline std::vector<double> default_signmap_grid() {
  std::vector<double> grid(50);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = 0.1 + (5.0 - 0.1) * static_cast<double>(i) / (grid.size() - 1);
  }
  return grid;
}

}  // namespace shortcut_lab
