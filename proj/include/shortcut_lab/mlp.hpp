#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shortcut_lab/common.hpp"
#include "shortcut_lab/rng.hpp"

namespace shortcut_lab {

// Dense feedforward networks with manual backpropagation, trained by plain
// minibatch SGD on the loss 0.5 * mean((f(x) - y)^2) with +-1 targets.

enum class Activation { linear, relu, tanh };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  throw std::logic_error("unknown activation");
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

struct MlpConfig {
  int depth = 8;  ///< hidden-layer count; 0 means a single affine map
  int width = 128;
  Activation activation = Activation::relu;
  int in_dim = 100;
  int out_dim = 1;

  void validate() const {
    if (depth < 0) throw std::invalid_argument("depth must be >= 0");
    if (width < 1) throw std::invalid_argument("width must be >= 1");
    if (in_dim < 1) throw std::invalid_argument("in_dim must be >= 1");
    if (out_dim != 1) throw std::invalid_argument("out_dim must be 1");
  }

  /// Layer sizes from input to output.
  std::vector<int> dims() const {
    std::vector<int> d{in_dim};
    d.insert(d.end(), static_cast<std::size_t>(depth), width);
    d.push_back(out_dim);
    return d;
  }
};

struct MlpModel {
  MlpConfig config;
  std::vector<Eigen::MatrixXd> weights;  ///< per layer, fan_out x fan_in
  std::vector<Eigen::VectorXd> biases;
  std::uint64_t init_seed = 0;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-2;
  std::uint64_t shuffle_seed = 0;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  }
};

struct EpochStats {
  double train_loss;  ///< running mean of the minibatch losses (pre-update)
  double train_acc;   ///< running accuracy over the epoch's minibatches
  double val_acc;     ///< end-of-epoch accuracy; NaN when the val set is empty
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

/// Thrown when a minibatch loss stops being finite.
struct TrainingDiverged : std::runtime_error {
  explicit TrainingDiverged(int epoch)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                           ": non-finite loss (learning rate too high for this configuration)") {}
};

/// Glorot-normal init: W ~ N(0, 2 / (fan_in + fan_out)), biases zero.
/// Weights are filled row by row from the seeded stream, layer by layer.
inline MlpModel init_mlp(const MlpConfig& config, std::uint64_t seed) {
  config.validate();
  MlpModel model;
  model.config = config;
  model.init_seed = seed;
  RandomStream rng(seed);
  const auto dims = config.dims();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double stddev = std::sqrt(2.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) w(i, j) = stddev * rng.gaussian();
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return model;
}

namespace detail {

inline void apply_activation(Eigen::MatrixXd& h, Activation a) {
  switch (a) {
    case Activation::linear: return;
    case Activation::relu: h = h.cwiseMax(0.0); return;
    case Activation::tanh: h = h.array().tanh().matrix(); return;
  }
}

/// Derivative of the activation given the preactivation; the relu
/// subgradient at 0 is 0.
inline Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& pre, Activation a) {
  switch (a) {
    case Activation::linear: return Eigen::MatrixXd::Ones(pre.rows(), pre.cols());
    case Activation::relu: return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - pre.array().tanh().square()).matrix();
  }
  throw std::logic_error("unknown activation");
}

}  // namespace detail

/// Batch forward pass; rows of X are samples.
inline Eigen::VectorXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.config.in_dim) throw std::invalid_argument("forward: dimension mismatch");
  Eigen::MatrixXd h = X;
  const std::size_t L = model.weights.size();
  for (std::size_t l = 0; l + 1 < L; ++l) {
    h = ((h * model.weights[l].transpose()).rowwise() + model.biases[l].transpose()).eval();
    detail::apply_activation(h, model.config.activation);
  }
  return (h * model.weights[L - 1].transpose()).col(0).array() + model.biases[L - 1][0];
}

inline double forward(const MlpModel& model, const Eigen::VectorXd& x) {
  return forward_batch(model, x.transpose())[0];
}

/// sign(f(x)) with sign(0) = +1.
inline int predict_label(const MlpModel& model, const Eigen::VectorXd& x) {
  return sign_pm1(forward(model, x));
}

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

namespace detail {

/// Forward + backward for one batch; returns the batch loss and fills grads.
inline double forward_backward(const MlpModel& model, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y, Gradients& grads,
                               Eigen::VectorXd* out_scores = nullptr) {
  const std::size_t L = model.weights.size();
  const auto n = X.rows();
  std::vector<Eigen::MatrixXd> acts;   // post-activation values, acts[0] = X
  std::vector<Eigen::MatrixXd> pres;   // hidden preactivations
  acts.reserve(L);
  pres.reserve(L - 1);
  acts.push_back(X);
  for (std::size_t l = 0; l + 1 < L; ++l) {
    Eigen::MatrixXd pre =
        (acts.back() * model.weights[l].transpose()).rowwise() + model.biases[l].transpose();
    Eigen::MatrixXd h = pre;
    apply_activation(h, model.config.activation);
    pres.push_back(std::move(pre));
    acts.push_back(std::move(h));
  }
  Eigen::VectorXd out =
      (acts.back() * model.weights[L - 1].transpose()).col(0).array() + model.biases[L - 1][0];
  Eigen::VectorXd residual = out - y;
  const double loss = 0.5 * residual.squaredNorm() / static_cast<double>(n);
  if (out_scores) *out_scores = std::move(out);

  grads.weights.assign(L, {});
  grads.biases.assign(L, {});
  Eigen::MatrixXd delta = residual / static_cast<double>(n);  // d loss / d out
  grads.weights[L - 1] = delta.transpose() * acts.back();
  grads.biases[L - 1] = delta.colwise().sum().transpose();
  for (std::size_t l = L - 1; l-- > 0;) {
    Eigen::MatrixXd back = delta * model.weights[l + 1];
    delta = back.cwiseProduct(activation_grad(pres[l], model.config.activation));
    grads.weights[l] = delta.transpose() * acts[l];
    grads.biases[l] = delta.colwise().sum().transpose();
  }
  return loss;
}

}  // namespace detail

/// Gradients of 0.5 * mean((f(x) - y)^2) over the batch.
inline Gradients backward(const MlpModel& model, const Eigen::MatrixXd& X,
                          const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw std::invalid_argument("backward: X and y row counts differ");
  if (X.cols() != model.config.in_dim) throw std::invalid_argument("backward: dimension mismatch");
  Gradients grads;
  detail::forward_backward(model, X, y, grads);
  return grads;
}

inline double accuracy(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() == 0) return std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd scores = forward_batch(model, X);
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (sign_pm1(scores[i]) == static_cast<int>(y[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

/// Plain SGD, reshuffling the training order each epoch from one stream
/// seeded with config.shuffle_seed. Train loss/accuracy are accumulated from
/// the minibatch forward passes (before each update); validation accuracy is
/// evaluated at the end of each epoch. The final-epoch model is kept.
inline TrainHistory train(MlpModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::MatrixXd& X_val, const Eigen::VectorXd& y_val,
                          const TrainConfig& config) {
  config.validate();
  if (X.rows() == 0) throw std::invalid_argument("train: empty training set");
  if (X.rows() != y.size()) throw std::invalid_argument("train: X and y row counts differ");
  const auto n = X.rows();
  RandomStream shuffle_rng(config.shuffle_seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  TrainHistory history;
  Gradients grads;
  Eigen::VectorXd scores;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    Eigen::Index correct = 0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index size = std::min<Eigen::Index>(config.batch_size, n - start);
      Eigen::MatrixXd Xb(size, X.cols());
      Eigen::VectorXd yb(size);
      for (Eigen::Index i = 0; i < size; ++i) {
        Xb.row(i) = X.row(order[static_cast<std::size_t>(start + i)]);
        yb[i] = y[order[static_cast<std::size_t>(start + i)]];
      }
      const double loss = detail::forward_backward(model, Xb, yb, grads, &scores);
      if (!std::isfinite(loss)) throw TrainingDiverged(epoch + 1);
      loss_sum += loss * static_cast<double>(size);
      for (Eigen::Index i = 0; i < size; ++i) {
        if (sign_pm1(scores[i]) == static_cast<int>(yb[i])) ++correct;
      }
      for (std::size_t l = 0; l < model.weights.size(); ++l) {
        model.weights[l] -= config.learning_rate * grads.weights[l];
        model.biases[l] -= config.learning_rate * grads.biases[l];
      }
    }
    history.epochs.push_back({loss_sum / static_cast<double>(n),
                              static_cast<double>(correct) / static_cast<double>(n),
                              accuracy(model, X_val, y_val)});
  }
  return history;
}

}  // namespace shortcut_lab
