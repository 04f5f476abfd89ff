#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "shortcut_lab/common.hpp"
#include "shortcut_lab/rng.hpp"

namespace shortcut_lab {

// Generation of two-latent-feature classification datasets. Latents are
// class-conditional Gaussians; each latent is embedded along a random unit
// direction with an amplification gain and, optionally, nested behind a
// cascade of random special-orthogonal scaled-tanh layers. The two feature
// embeddings are summed to form the input vector.

/// Full recipe for one synthetic dataset.
struct DatasetSpec {
  double rho_s = 0.85;   ///< predictivity of the shortcut latent, in (0.5, 1)
  double rho_c = 0.9;    ///< predictivity of the core latent, in (0.5, 1)
  double sigma_sc = 0.6; ///< latent correlation, |sigma_sc| < 1
  double alpha_s = 1.0;  ///< amplification of the shortcut embedding, > 0
  double alpha_c = 1.0;  ///< amplification of the core embedding, > 0
  int eta_s = 0;         ///< nesting depth of the shortcut embedding, >= 0
  int eta_c = 0;         ///< nesting depth of the core embedding, >= 0
  int dim = 100;         ///< embedding dimension, >= 2
  int n_train = 3200;
  int n_val = 1000;
  int grid_res = 30;     ///< probe resolution per axis, even
  double nest_lambda = 100.0;  ///< tanh scale of the nesting layers
  std::uint64_t seed = 0;

  void validate() const {
    auto check_rho = [](double rho, const char* name) {
      if (!(rho > 0.5 && rho < 1.0)) {
        throw std::invalid_argument(std::string(name) + " must lie in (0.5, 1)");
      }
    };
    check_rho(rho_s, "rho_s");
    check_rho(rho_c, "rho_c");
    if (!(std::abs(sigma_sc) < 1.0)) throw std::invalid_argument("|sigma_sc| must be < 1");
    if (!(alpha_s > 0.0) || !(alpha_c > 0.0)) throw std::invalid_argument("alpha_s, alpha_c must be > 0");
    if (eta_s < 0 || eta_c < 0) throw std::invalid_argument("eta_s, eta_c must be >= 0");
    if (dim < 2) throw std::invalid_argument("dim must be >= 2");
    if (n_train < 0 || n_val < 0) throw std::invalid_argument("n_train, n_val must be >= 0");
    if (n_train % 2 != 0 || n_val % 2 != 0) throw std::invalid_argument("n_train, n_val must be even (class balance)");
    if (grid_res < 2 || grid_res % 2 != 0) throw std::invalid_argument("grid_res must be even and >= 2");
    if (!(nest_lambda > 0.0)) throw std::invalid_argument("nest_lambda must be > 0");
  }
};

struct LatentSample {
  double z_s;
  double z_c;
  int y;  ///< label in {-1, +1}
};

/// Cascade of dim x dim special-orthogonal layers, each followed by the
/// amplitude-preserving scaled tanh u -> tanh(lambda * u) / lambda.
struct NestingNet {
  std::vector<Eigen::MatrixXd> layers;
  double lambda = 100.0;

  Eigen::VectorXd apply(const Eigen::VectorXd& e) const {
    Eigen::VectorXd u = e;
    for (const auto& q : layers) {
      u = ((lambda * (q * u)).array().tanh() / lambda).matrix();
    }
    return u;
  }

  /// Inverse cascade: atanh(lambda * u) / lambda, then the transpose of each
  /// layer, in reverse order. Valid while every coordinate of the forward
  /// pass stayed strictly inside the tanh range.
  Eigen::VectorXd invert(const Eigen::VectorXd& x) const {
    Eigen::VectorXd u = x;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
      Eigen::ArrayXd a = lambda * u.array();
      if ((a.abs() >= 1.0).any()) throw std::domain_error("NestingNet::invert: input outside tanh range");
      u = it->transpose() * (a.atanh() / lambda).matrix();
    }
    return u;
  }
};

struct EmbeddingApparatus {
  Eigen::VectorXd w_s;  ///< unit vector, orthogonal to w_c
  Eigen::VectorXd w_c;
  std::optional<NestingNet> nest_s;
  std::optional<NestingNet> nest_c;
};

/// Cartesian probe grid over latent space, closed under negation and free of
/// zero coordinates. Points are ordered z_s-major.
struct ProbeGrid {
  Eigen::VectorXd ticks_s;
  Eigen::VectorXd ticks_c;
  Eigen::MatrixX2d points;  ///< grid_res^2 rows of (z_s, z_c)

  int size() const { return static_cast<int>(points.rows()); }
};

/// Standard normal quantile: mu = sqrt(2) * erfinv(2 rho - 1). Uses the
/// Acklam rational approximation refined by two Newton steps on
/// Phi(x) = erfc(-x / sqrt 2) / 2, accurate to full double precision over
/// the open unit interval.
inline double predictivity_to_mean(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::domain_error("predictivity_to_mean: rho must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (rho < low) {
    double q = std::sqrt(-2.0 * std::log(rho));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (rho <= 1.0 - low) {
    double q = rho - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - rho));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int it = 0; it < 2; ++it) {
    double err = 0.5 * std::erfc(-x / std::numbers::sqrt2) - rho;
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    if (pdf == 0.0) break;
    x -= err / pdf;
  }
  return x;
}

/// Draws n class-balanced latent pairs: the first n/2 carry label +1, the
/// rest -1; z | y ~ N((y mu_s, y mu_c), [[1, s],[s, 1]]) via the Cholesky
/// factor [[1, 0], [s, sqrt(1 - s^2)]]. Two normal deviates are consumed
/// per sample, (eps_s, eps_c) in that order.
inline std::vector<LatentSample> sample_latents(const DatasetSpec& spec, int n, RandomStream& rng) {
  if (n < 0 || n % 2 != 0) throw std::invalid_argument("sample_latents: n must be even");
  if (!(std::abs(spec.sigma_sc) < 1.0)) {
    throw std::invalid_argument("sample_latents: |sigma_sc| >= 1 has no Cholesky factor");
  }
  const double mu_s = predictivity_to_mean(spec.rho_s);
  const double mu_c = predictivity_to_mean(spec.rho_c);
  const double l21 = spec.sigma_sc;
  const double l22 = std::sqrt(1.0 - spec.sigma_sc * spec.sigma_sc);
  std::vector<LatentSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int y = i < n / 2 ? 1 : -1;
    const double e1 = rng.gaussian();
    const double e2 = rng.gaussian();
    out.push_back({y * mu_s + e1, y * mu_c + l21 * e1 + l22 * e2, y});
  }
  return out;
}

/// grid_res ticks per axis spanning [-3 mu, +3 mu] inclusive; the upper half
/// is the exact negation of the lower half, so closure under z -> -z holds
/// bitwise and no tick is zero.
inline ProbeGrid make_probe_grid(const DatasetSpec& spec) {
  if (spec.grid_res < 2 || spec.grid_res % 2 != 0) {
    throw std::invalid_argument("make_probe_grid: grid_res must be even and >= 2");
  }
  const int res = spec.grid_res;
  auto ticks = [res](double mu) {
    Eigen::VectorXd t(res);
    const double lo = -3.0 * mu;
    const double step = 6.0 * mu / (res - 1);
    for (int i = 0; i < res / 2; ++i) {
      t[i] = lo + i * step;
      t[res - 1 - i] = -t[i];
    }
    return t;
  };
  ProbeGrid grid;
  grid.ticks_s = ticks(predictivity_to_mean(spec.rho_s));
  grid.ticks_c = ticks(predictivity_to_mean(spec.rho_c));
  grid.points.resize(res * res, 2);
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      grid.points(i * res + j, 0) = grid.ticks_s[i];
      grid.points(i * res + j, 1) = grid.ticks_c[j];
    }
  }
  return grid;
}

namespace detail {

/// Haar-ish special orthogonal matrix: QR of a Gaussian matrix with the R
/// diagonal made positive, then one column flipped if det(Q) = -1.
inline Eigen::MatrixXd random_special_orthogonal(int dim, RandomStream& rng) {
  Eigen::MatrixXd m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) m(i, j) = rng.gaussian();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd diag = qr.matrixQR().diagonal();
  for (int j = 0; j < dim; ++j) {
    if (diag[j] < 0.0) q.col(j) = -q.col(j);
  }
  if (q.determinant() < 0.0) q.col(0) = -q.col(0);
  return q;
}

}  // namespace detail

/// Draws w_s, w_c as Gram-Schmidt-orthonormalized Gaussian vectors, then the
/// nesting layers for each feature with eta_i > 0 (shortcut first).
inline EmbeddingApparatus build_apparatus(const DatasetSpec& spec, RandomStream& rng) {
  if (spec.dim < 2) throw std::invalid_argument("build_apparatus: dim must be >= 2");
  auto gaussian_vector = [&] {
    Eigen::VectorXd v(spec.dim);
    for (int i = 0; i < spec.dim; ++i) v[i] = rng.gaussian();
    return v;
  };
  EmbeddingApparatus app;
  do {
    app.w_s = gaussian_vector();
  } while (app.w_s.norm() < 1e-8);
  app.w_s.normalize();
  do {
    app.w_c = gaussian_vector();
    app.w_c -= app.w_s * app.w_s.dot(app.w_c);
  } while (app.w_c.norm() < 1e-8);
  app.w_c.normalize();
  auto build_nest = [&](int eta) -> std::optional<NestingNet> {
    if (eta == 0) return std::nullopt;
    NestingNet net;
    net.lambda = spec.nest_lambda;
    net.layers.reserve(static_cast<std::size_t>(eta));
    for (int k = 0; k < eta; ++k) net.layers.push_back(detail::random_special_orthogonal(spec.dim, rng));
    return net;
  };
  app.nest_s = build_nest(spec.eta_s);
  app.nest_c = build_nest(spec.eta_c);
  return app;
}

/// x = e'_s + e'_c with e_i = alpha_i z_i w_i and e'_i the nesting cascade
/// of e_i (identity when eta_i = 0).
inline Eigen::VectorXd embed(double z_s, double z_c, const EmbeddingApparatus& app,
                             const DatasetSpec& spec) {
  Eigen::VectorXd e_s = spec.alpha_s * z_s * app.w_s;
  Eigen::VectorXd e_c = spec.alpha_c * z_c * app.w_c;
  if (app.nest_s) e_s = app.nest_s->apply(e_s);
  if (app.nest_c) e_c = app.nest_c->apply(e_c);
  return e_s + e_c;
}

/// Batched embedding; rows of `latents` are (z_s, z_c) pairs.
inline Eigen::MatrixXd embed_all(const Eigen::MatrixX2d& latents, const EmbeddingApparatus& app,
                                 const DatasetSpec& spec) {
  const auto n = latents.rows();
  Eigen::MatrixXd e_s = (spec.alpha_s * latents.col(0)) * app.w_s.transpose();
  Eigen::MatrixXd e_c = (spec.alpha_c * latents.col(1)) * app.w_c.transpose();
  auto cascade = [&](Eigen::MatrixXd& e, const NestingNet& net) {
    for (const auto& q : net.layers) {
      e = ((net.lambda * (e * q.transpose())).array().tanh() / net.lambda).matrix();
    }
  };
  if (app.nest_s) cascade(e_s, *app.nest_s);
  if (app.nest_c) cascade(e_c, *app.nest_c);
  return e_s + e_c;
}

inline Eigen::MatrixX2d latent_matrix(const std::vector<LatentSample>& samples) {
  Eigen::MatrixX2d m(static_cast<Eigen::Index>(samples.size()), 2);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    m(i, 0) = samples[static_cast<std::size_t>(i)].z_s;
    m(i, 1) = samples[static_cast<std::size_t>(i)].z_c;
  }
  return m;
}

inline Eigen::VectorXd label_vector(const std::vector<LatentSample>& samples) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = samples[static_cast<std::size_t>(i)].y;
  return y;
}

/// Latent samples, probe grid, frozen embedding apparatus, and the embedded
/// input matrices, all produced from one seed.
struct EmbeddedDataset {
  DatasetSpec spec;
  EmbeddingApparatus apparatus;
  std::vector<LatentSample> train;
  std::vector<LatentSample> val;
  ProbeGrid probes;
  Eigen::MatrixXd train_inputs;  ///< n_train x dim
  Eigen::MatrixXd val_inputs;    ///< n_val x dim
  Eigen::MatrixXd probe_inputs;  ///< grid_res^2 x dim

  Eigen::VectorXd train_labels() const { return label_vector(train); }
  Eigen::VectorXd val_labels() const { return label_vector(val); }
};

/// Deterministic given spec.seed. RNG consumption order: apparatus, then
/// train latents, then val latents; the probe grid draws nothing.
inline EmbeddedDataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  RandomStream rng(spec.seed);
  EmbeddedDataset ds;
  ds.spec = spec;
  ds.apparatus = build_apparatus(spec, rng);
  ds.train = sample_latents(spec, spec.n_train, rng);
  ds.val = sample_latents(spec, spec.n_val, rng);
  ds.probes = make_probe_grid(spec);
  ds.train_inputs = embed_all(latent_matrix(ds.train), ds.apparatus, spec);
  ds.val_inputs = embed_all(latent_matrix(ds.val), ds.apparatus, spec);
  ds.probe_inputs = embed_all(ds.probes.points, ds.apparatus, spec);
  return ds;
}

}  // namespace shortcut_lab
