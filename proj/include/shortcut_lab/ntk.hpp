#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shortcut_lab/jet.hpp"

namespace shortcut_lab {

// Spectral theory of two-layer kernels over the two-point data measure
// p = (delta(+A mu) + delta(-A mu)) / 2, the small-covariance limit of the
// class-conditional Gaussian mixture. Under this measure every kernel
// integral reduces to an average over x in {+A mu, -A mu}, which makes the
// spectra, the optimal predictor, the alignment gamma(b), and its high-order
// b-derivatives exactly computable.

enum class KernelKind { linear, relu_quadratic, relu_exact };

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::linear: return "linear";
    case KernelKind::relu_quadratic: return "relu_quadratic";
    case KernelKind::relu_exact: return "relu_exact";
  }
  throw std::logic_error("unknown kernel kind");
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "linear") return KernelKind::linear;
  if (s == "relu_quadratic") return KernelKind::relu_quadratic;
  if (s == "relu_exact") return KernelKind::relu_exact;
  throw std::invalid_argument("unknown kernel kind '" + s + "'");
}

/// Theory-side data description: x = A z with A = diag(a1, a2) and class
/// means +-mu = +-(mu1, mu2).
struct KernelDataModel {
  double a1 = 1.0;
  double a2 = 1.0;
  double mu1 = 1.0;
  double mu2 = 1.0;
  KernelKind kind = KernelKind::relu_quadratic;

  void validate() const {
    if (!(a1 > 0.0 && a2 > 0.0)) throw std::invalid_argument("availabilities a1, a2 must be > 0");
    if (!(mu1 > 0.0 && mu2 > 0.0)) throw std::invalid_argument("means mu1, mu2 must be > 0");
  }

  Eigen::Vector2d class_mean() const { return {a1 * mu1, a2 * mu2}; }
  /// ||A mu||^2
  double mean_norm_sq() const { return a1 * a1 * mu1 * mu1 + a2 * a2 * mu2 * mu2; }
};

/// Arc-cosine kernel angular factor
/// h(u) = (u (pi - arccos u) + sqrt(1 - u^2)) / pi on [-1, 1].
inline double relu_h(double u) {
  if (std::abs(u) > 1.0 + 1e-12) throw std::domain_error("relu_h: |u| > 1");
  u = std::clamp(u, -1.0, 1.0);
  return (u * (std::numbers::pi - std::acos(u)) + std::sqrt(1.0 - u * u)) / std::numbers::pi;
}

/// L2 error of the quadratic surrogate a (1+u)^2 against h over [-1, 1],
/// in closed form: 1/3 - (163/48) a + (32/5) a^2 + 32 / (27 pi^2).
inline double quad_error(double a) {
  return 1.0 / 3.0 - 163.0 / 48.0 * a + 32.0 / 5.0 * a * a +
         32.0 / (27.0 * std::numbers::pi * std::numbers::pi);
}

namespace detail {

inline double adaptive_simpson(const std::function<double(double)>& f, double lo, double hi,
                               double f_lo, double f_mid, double f_hi, double whole, double tol,
                               int depth) {
  const double mid = 0.5 * (lo + hi);
  const double lmid = 0.5 * (lo + mid);
  const double rmid = 0.5 * (mid + hi);
  const double f_lmid = f(lmid);
  const double f_rmid = f(rmid);
  const double left = (mid - lo) / 6.0 * (f_lo + 4.0 * f_lmid + f_mid);
  const double right = (hi - mid) / 6.0 * (f_mid + 4.0 * f_rmid + f_hi);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(f, lo, mid, f_lo, f_lmid, f_mid, left, tol / 2.0, depth - 1) +
         adaptive_simpson(f, mid, hi, f_mid, f_rmid, f_hi, right, tol / 2.0, depth - 1);
}

}  // namespace detail

inline double integrate(const std::function<double(double)>& f, double lo, double hi,
                        double tol = 1e-12) {
  const double mid = 0.5 * (lo + hi);
  const double f_lo = f(lo), f_mid = f(mid), f_hi = f(hi);
  const double whole = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi);
  return detail::adaptive_simpson(f, lo, hi, f_lo, f_mid, f_hi, whole, tol, 48);
}

/// Quadrature route for the same error integral, for cross-checking the
/// closed form.
inline double quad_error_numeric(double a, double tol = 1e-12) {
  return integrate(
      [a](double u) {
        const double d = relu_h(u) - a * (1.0 + u) * (1.0 + u);
        return d * d;
      },
      -1.0, 1.0, tol);
}

/// Analytic minimizer of quad_error: a* = (163/48) / (2 * 32/5) = 815/3072.
inline double fit_quad() { return 815.0 / 3072.0; }

/// Golden-section minimizer over the quadrature variant; must agree with the
/// analytic a* to 1e-8.
inline double fit_quad_numeric(double lo = 0.0, double hi = 1.0, double tol = 1e-10) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = quad_error_numeric(x1);
  double f2 = quad_error_numeric(x2);
  while (hi - lo > tol) {
    if (f1 < f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = quad_error_numeric(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = quad_error_numeric(x2);
    }
  }
  return 0.5 * (lo + hi);
}

/// Kernel evaluation on 2-vectors. The relu kinds depend on x, z only
/// through their norms and cosine; zero vectors are rejected for them.
inline double kernel_eval(const KernelDataModel& model, const Eigen::Vector2d& x,
                          const Eigen::Vector2d& z) {
  if (model.kind == KernelKind::linear) return x.dot(z);
  const double nx = x.norm();
  const double nz = z.norm();
  if (nx == 0.0 || nz == 0.0) {
    throw std::domain_error("kernel_eval: zero vector for a normalized-angle kernel");
  }
  const double u = std::clamp(x.dot(z) / (nx * nz), -1.0, 1.0);
  if (model.kind == KernelKind::relu_exact) return nx * nz * relu_h(u);
  return nx * nz * fit_quad() * (1.0 + u) * (1.0 + u);
}

/// Non-zero eigenpairs of the kernel operator under the two-point measure.
/// Eigenfunctions are unit-norm under that measure; `normalizers` stores the
/// scale constants (1/(2 |A mu|^2) and 1/|A mu|^2 for the relu pair).
struct Spectrum {
  KernelDataModel model;
  std::vector<double> eigenvalues;
  std::vector<std::function<double(const Eigen::Vector2d&)>> eigenfunctions;
  std::vector<double> normalizers;
};

/// Closed-form spectra: the linear kernel has the single eigenvalue
/// |A mu|^2 with phi(x) = <A mu, x> / |A mu|^2; the quadratic relu surrogate
/// has the doubly degenerate eigenvalue 2 a* |A mu|^2 with
/// phi1(x) = |x| (1 + cos^2(x, A mu)) / (2 |A mu|) and
/// phi2(x) = <x, A mu> / |A mu|^2.
inline Spectrum spectrum(const KernelDataModel& model) {
  model.validate();
  if (model.kind == KernelKind::relu_exact) {
    throw std::invalid_argument("spectrum: the exact arc-cosine kernel has no closed-form spectrum here");
  }
  Spectrum spec;
  spec.model = model;
  const Eigen::Vector2d am = model.class_mean();
  const double s = model.mean_norm_sq();
  if (model.kind == KernelKind::linear) {
    spec.eigenvalues = {s};
    spec.normalizers = {1.0 / s};
    spec.eigenfunctions = {[am, s](const Eigen::Vector2d& x) { return am.dot(x) / s; }};
    return spec;
  }
  const double lambda = 2.0 * fit_quad() * s;
  spec.eigenvalues = {lambda, lambda};
  spec.normalizers = {1.0 / (2.0 * s), 1.0 / s};
  spec.eigenfunctions = {
      [am, s](const Eigen::Vector2d& x) {
        const double nx = x.norm();
        if (nx == 0.0) return 0.0;
        const double c = am.dot(x) / (nx * std::sqrt(s));
        return nx * (1.0 + c * c) / (2.0 * std::sqrt(s));
      },
      [am, s](const Eigen::Vector2d& x) { return x.dot(am) / s; }};
  return spec;
}

namespace detail {

/// Feature vector of the quadratic relu eigenproblem:
/// v_x = [|x|, sqrt2 x1, sqrt2 x2, x1^2/|x|, x2^2/|x|, sqrt2 x1 x2 / |x|].
inline Eigen::Matrix<double, 6, 1> relu_feature(const Eigen::Vector2d& x) {
  Eigen::Matrix<double, 6, 1> v;
  const double n = x.norm();
  if (n == 0.0) return Eigen::Matrix<double, 6, 1>::Zero();
  v << n, std::numbers::sqrt2 * x[0], std::numbers::sqrt2 * x[1], x[0] * x[0] / n,
      x[1] * x[1] / n, std::numbers::sqrt2 * x[0] * x[1] / n;
  return v;
}

}  // namespace detail

/// Constructive route to the same spectra: assemble the coefficient matrix
/// C = (v+ v+^T + v- v-^T) / 2 from the feature vectors of the two measure
/// points and eigensolve it. Used to cross-validate the closed forms; in the
/// degenerate relu eigenspace the returned basis is only unique up to
/// rotation.
inline Spectrum spectrum_constructive(const KernelDataModel& model) {
  model.validate();
  if (model.kind == KernelKind::relu_exact) {
    throw std::invalid_argument("spectrum_constructive: unsupported kernel kind");
  }
  Spectrum spec;
  spec.model = model;
  const Eigen::Vector2d am = model.class_mean();
  if (model.kind == KernelKind::linear) {
    const Eigen::Matrix2d c = am * am.transpose();  // the two half-weighted copies add up
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(c);
    const double tol = 1e-12 * eig.eigenvalues().maxCoeff();
    for (int i = 0; i < 2; ++i) {
      if (eig.eigenvalues()[i] <= tol) continue;
      Eigen::Vector2d v = eig.eigenvectors().col(i);
      double scale = v.dot(am);  // E_p[phi^2] = scale^2
      if (scale < 0.0) { v = -v; scale = -scale; }
      spec.eigenvalues.push_back(eig.eigenvalues()[i]);
      spec.normalizers.push_back(1.0 / scale);
      spec.eigenfunctions.push_back(
          [v, scale](const Eigen::Vector2d& x) { return v.dot(x) / scale; });
    }
    return spec;
  }
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  const Vec6 vp = detail::relu_feature(am);
  const Vec6 vm = detail::relu_feature(-am);
  const Eigen::Matrix<double, 6, 6> c =
      0.5 * (vp * vp.transpose() + vm * vm.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(c);
  const double tol = 1e-12 * eig.eigenvalues().maxCoeff();
  for (int i = 0; i < 6; ++i) {
    const double nu = eig.eigenvalues()[i];
    if (nu <= tol) continue;
    Vec6 psi = eig.eigenvectors().col(i);
    const double ep = psi.dot(vp);
    const double em = psi.dot(vm);
    const double norm = std::sqrt(0.5 * (ep * ep + em * em));
    if (ep < 0.0) psi = -psi;
    const double scale = 1.0 / norm;
    spec.eigenvalues.push_back(fit_quad() * nu);
    spec.normalizers.push_back(scale);
    spec.eigenfunctions.push_back([psi, scale](const Eigen::Vector2d& x) {
      return scale * psi.dot(detail::relu_feature(x));
    });
  }
  return spec;
}

/// Max over samples and eigenpairs of the relative eigen-equation residual
/// | integral k(x, .) phi dp - lambda phi(x) | / lambda, the integral taken
/// under the two-point measure.
inline double eigen_residual(const Spectrum& spec, std::span<const Eigen::Vector2d> samples) {
  const Eigen::Vector2d am = spec.model.class_mean();
  const Eigen::Vector2d neg_am = -am;
  double worst = 0.0;
  for (std::size_t i = 0; i < spec.eigenvalues.size(); ++i) {
    const auto& phi = spec.eigenfunctions[i];
    const double lambda = spec.eigenvalues[i];
    const double phi_p = phi(am);
    const double phi_m = phi(neg_am);
    for (const auto& x : samples) {
      const double applied = 0.5 * (kernel_eval(spec.model, x, am) * phi_p +
                                    kernel_eval(spec.model, x, neg_am) * phi_m);
      worst = std::max(worst, std::abs(applied - lambda * phi(x)) / lambda);
    }
  }
  return worst;
}

inline double eigen_residual(const KernelDataModel& model,
                             std::span<const Eigen::Vector2d> samples) {
  return eigen_residual(spectrum(model), samples);
}

/// Optimal kernel predictor f(x) = (1/2) sum_i phi_i(x) phi_i(A mu).
inline std::function<double(const Eigen::Vector2d&)> predictor(const KernelDataModel& model) {
  Spectrum spec = spectrum(model);
  const Eigen::Vector2d am = model.class_mean();
  std::vector<double> at_mean;
  at_mean.reserve(spec.eigenfunctions.size());
  for (const auto& phi : spec.eigenfunctions) at_mean.push_back(phi(am));
  return [spec = std::move(spec), at_mean](const Eigen::Vector2d& x) {
    double sum = 0.0;
    for (std::size_t i = 0; i < spec.eigenfunctions.size(); ++i) {
      sum += spec.eigenfunctions[i](x) * at_mean[i];
    }
    return 0.5 * sum;
  };
}

namespace detail {

// Two-point-measure evaluation of the alignment
//   gamma(b) = E[f g] / sqrt(E[f^2] E[g^2]),
// written for a generic scalar so the same expression runs on doubles and
// on Jets (for the b-derivatives). The eigenfunction values at the measure
// points x = +-A mu are phi1 = 1, 1 and phi2 = 1, -1; only the evaluations
// at B A mu depend on b.
template <typename Scalar>
Scalar gamma_two_point_impl(const KernelDataModel& model, const Scalar& b1, const Scalar& b2) {
  using std::sqrt;
  const double p = model.a1 * model.a1 * model.mu1 * model.mu1;
  const double q = model.a2 * model.a2 * model.mu2 * model.mu2;
  const double s = p + q;
  const Scalar dot_av = b1 * p + b2 * q;  // <A mu, B A mu>
  if (model.kind == KernelKind::linear) {
    // f(+-Amu) = +-1/2, g(+-Amu) = +-(1/2) dot_av / s.
    const Scalar w = dot_av / s;
    return w / sqrt(w * w);  // sign(w), exact for series as well
  }
  const Scalar vn2 = b1 * b1 * p + b2 * b2 * q;  // ||B A mu||^2
  const Scalar vn = sqrt(vn2);
  const Scalar cos2 = dot_av * dot_av / (s * vn2);
  const Scalar phi1_v = vn * (1.0 + cos2) / (2.0 * std::sqrt(s));
  const Scalar phi2_v = dot_av / s;
  const Scalar g_plus = 0.5 * (phi1_v + phi2_v);   // g(+A mu)
  const Scalar g_minus = 0.5 * (phi1_v - phi2_v);  // g(-A mu)
  // f(+A mu) = 1, f(-A mu) = 0, E[f^2] = 1/2.
  const Scalar num = 0.5 * g_plus;
  const Scalar e_g2 = 0.5 * (g_plus * g_plus + g_minus * g_minus);
  return num / sqrt(0.5 * e_g2);
}

}  // namespace detail

/// Route (i): exact evaluation under the two-point measure.
inline double gamma_two_point(const KernelDataModel& model, double b1, double b2) {
  model.validate();
  if (!(b1 > 0.0 && b2 > 0.0)) throw std::invalid_argument("gamma: b must be positive");
  if (model.kind == KernelKind::relu_exact) {
    throw std::invalid_argument("gamma: requires a kernel with a closed-form spectrum");
  }
  const double p = model.a1 * model.a1 * model.mu1 * model.mu1;
  const double q = model.a2 * model.a2 * model.mu2 * model.mu2;
  if (model.kind == KernelKind::linear && b1 * p + b2 * q == 0.0) {
    throw std::domain_error("gamma: rescaled predictor vanishes identically");
  }
  return detail::gamma_two_point_impl<double>(model, b1, b2);
}

/// Route (ii): closed form. For the quadratic relu kernel,
/// gamma = (T + R)^2 / sqrt((T + R)^4 + (T - R)^4) with T = |A mu| |B A mu|
/// and R = <A mu, B A mu>; for the linear kernel, sign(b1 a1^2 mu1^2 +
/// b2 a2^2 mu2^2).
inline double gamma_closed_form(const KernelDataModel& model, double b1, double b2) {
  model.validate();
  if (!(b1 > 0.0 && b2 > 0.0)) throw std::invalid_argument("gamma: b must be positive");
  const double p = model.a1 * model.a1 * model.mu1 * model.mu1;
  const double q = model.a2 * model.a2 * model.mu2 * model.mu2;
  const double r = b1 * p + b2 * q;
  if (model.kind == KernelKind::linear) {
    if (r == 0.0) throw std::domain_error("gamma: rescaled predictor vanishes identically");
    return r > 0.0 ? 1.0 : -1.0;
  }
  if (model.kind == KernelKind::relu_exact) {
    throw std::invalid_argument("gamma: requires a kernel with a closed-form spectrum");
  }
  const double t = std::sqrt((p + q) * (b1 * b1 * p + b2 * b2 * q));
  const double plus = (t + r) * (t + r);
  const double minus = (t - r) * (t - r);
  return plus / std::sqrt(plus * plus + minus * minus);
}

/// Alignment between the baseline predictor and the availability-rescaled
/// one. Evaluates both routes and insists they agree to 1e-10.
inline double gamma(const KernelDataModel& model, double b1, double b2) {
  const double two_point = gamma_two_point(model, b1, b2);
  const double closed = gamma_closed_form(model, b1, b2);
  if (std::abs(two_point - closed) > 1e-10 * std::max(1.0, std::abs(closed))) {
    throw std::logic_error("gamma: two-point and closed-form routes disagree");
  }
  return two_point;
}

struct SensitivityResult {
  int order = 0;
  double zeta1 = 0.0;
  double zeta2 = 0.0;
  double gap = 0.0;  ///< |zeta1| - |zeta2|
  int sign_indicator = 0;  ///< sign((|zeta1| - |zeta2|) (a1 - a2))
};

/// m-th derivative of gamma with respect to b_i at b = (1, 1), by degree-
/// (>= m+2) jet propagation through the two-point evaluation.
inline double zeta(const KernelDataModel& model, int feature, int order, int degree = 12) {
  model.validate();
  if (feature != 1 && feature != 2) throw std::invalid_argument("zeta: feature must be 1 or 2");
  if (order < 1 || order > 12) throw std::invalid_argument("zeta: order must lie in [1, 12]");
  if (model.kind == KernelKind::relu_exact) {
    throw std::invalid_argument("zeta: requires a kernel with a closed-form spectrum");
  }
  degree = std::max(degree, order + 2);
  const Jet b1 = feature == 1 ? Jet::variable(1.0, degree) : Jet::constant(1.0, degree);
  const Jet b2 = feature == 2 ? Jet::variable(1.0, degree) : Jet::constant(1.0, degree);
  return detail::gamma_two_point_impl<Jet>(model, b1, b2).derivative(order);
}

/// Both sensitivities at the given order, their absolute gap, and the
/// Eq.-style sign indicator. The linear kernel is handled analytically:
/// gamma is constant near b = 1, so every derivative vanishes.
inline SensitivityResult sensitivity(const KernelDataModel& model, int order, int degree = 12) {
  model.validate();
  if (order < 1 || order > 12) throw std::invalid_argument("sensitivity: order must lie in [1, 12]");
  SensitivityResult res;
  res.order = order;
  if (model.kind == KernelKind::linear) {
    return res;  // zeta1 = zeta2 = gap = 0, indicator 0
  }
  res.zeta1 = zeta(model, 1, order, degree);
  res.zeta2 = zeta(model, 2, order, degree);
  res.gap = std::abs(res.zeta1) - std::abs(res.zeta2);
  const double prod = res.gap * (model.a1 - model.a2);
  res.sign_indicator = (prod > 0.0) - (prod < 0.0);
  return res;
}

/// The first non-vanishing gap, reached at order 9 for the quadratic relu
/// kernel: 5670 |A mu|^{-18} (a1 a2 mu1 mu2)^8 (a1^2 mu1^2 - a2^2 mu2^2).
inline double gap_closed_form(const KernelDataModel& model) {
  model.validate();
  if (model.kind != KernelKind::relu_quadratic) {
    throw std::invalid_argument("gap_closed_form: defined for the quadratic relu kernel");
  }
  const double p = model.a1 * model.a1 * model.mu1 * model.mu1;
  const double q = model.a2 * model.a2 * model.mu2 * model.mu2;
  const double s = p + q;
  const double cross = model.a1 * model.a2 * model.mu1 * model.mu2;
  return 5670.0 / std::pow(s, 9) * std::pow(cross, 8) * (p - q);
}

/// Availability-bias direction per grid cell:
/// sign((a1^2 mu1^2 - a2^2 mu2^2)(a1 - a2)) in {-1, 0, +1}.
inline Eigen::MatrixXi sign_map(double mu1, double mu2, std::span<const double> a1_grid,
                                std::span<const double> a2_grid) {
  if (!(mu1 > 0.0 && mu2 > 0.0)) throw std::invalid_argument("sign_map: means must be positive");
  for (double a : a1_grid) {
    if (!(a > 0.0)) throw std::invalid_argument("sign_map: grids must be positive");
  }
  for (double a : a2_grid) {
    if (!(a > 0.0)) throw std::invalid_argument("sign_map: grids must be positive");
  }
  Eigen::MatrixXi map(static_cast<Eigen::Index>(a1_grid.size()),
                      static_cast<Eigen::Index>(a2_grid.size()));
  for (Eigen::Index i = 0; i < map.rows(); ++i) {
    const double a1 = a1_grid[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < map.cols(); ++j) {
      const double a2 = a2_grid[static_cast<std::size_t>(j)];
      const double v = (a1 * a1 * mu1 * mu1 - a2 * a2 * mu2 * mu2) * (a1 - a2);
      map(i, j) = (v > 0.0) - (v < 0.0);
    }
  }
  return map;
}

}  // namespace shortcut_lab
