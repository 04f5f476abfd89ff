#pragma once

#include <span>
#include <stdexcept>

#include "shortcut_lab/common.hpp"
#include "shortcut_lab/dataset.hpp"
#include "shortcut_lab/mlp.hpp"

namespace shortcut_lab {

// Shortcut reliance over a probe grid, and shortcut bias relative to the
// optimal classifier.

struct BiasReport {
  double reliance_model = 0.0;
  double reliance_optimal = 0.0;
  double bias = 0.0;  ///< reliance_model - reliance_optimal
  int probe_count = 0;
  DatasetSpec dataset;
  MlpConfig model;
};

/// Uniform grid average of yhat(z) * (sign(z_s) - sign(z_c)). +1 for a pure
/// shortcut classifier, -1 for a pure core classifier on any negation-closed
/// grid.
inline double reliance(std::span<const int> labels, const ProbeGrid& grid) {
  if (static_cast<int>(labels.size()) != grid.size()) {
    throw std::invalid_argument("reliance: one label per probe point required");
  }
  double sum = 0.0;
  for (int i = 0; i < grid.size(); ++i) {
    const double s = sign_pm1(grid.points(i, 0));
    const double c = sign_pm1(grid.points(i, 1));
    sum += static_cast<double>(labels[static_cast<std::size_t>(i)]) * (s - c);
  }
  return sum / grid.size();
}

inline BiasReport shortcut_bias(std::span<const int> model_labels,
                                std::span<const int> optimal_labels, const ProbeGrid& grid,
                                const DatasetSpec& dataset = {}, const MlpConfig& model = {}) {
  if (model_labels.size() != optimal_labels.size()) {
    throw std::invalid_argument("shortcut_bias: label sequences cover different grids");
  }
  BiasReport report;
  report.reliance_model = reliance(model_labels, grid);
  report.reliance_optimal = reliance(optimal_labels, grid);
  report.bias = report.reliance_model - report.reliance_optimal;
  report.probe_count = grid.size();
  report.dataset = dataset;
  report.model = model;
  return report;
}

}  // namespace shortcut_lab
