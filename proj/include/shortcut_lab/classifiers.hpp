#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "shortcut_lab/common.hpp"

namespace shortcut_lab {

// Least-squares LDA and the analytic latent-space Bayes rule. For two
// balanced classes with shared covariance, the least-squares fit on +-1
// targets yields the LDA decision rule, which is Bayes optimal for the
// Gaussian latent model.

struct LinearClassifier {
  Eigen::VectorXd weights;
  double intercept = 0.0;
};

inline double decision_value(const LinearClassifier& clf, const Eigen::VectorXd& x) {
  if (x.size() != clf.weights.size()) throw std::invalid_argument("decision_value: dimension mismatch");
  return clf.weights.dot(x) + clf.intercept;
}

/// sign(<w, x> + b) with sign(0) = +1.
inline int predict(const LinearClassifier& clf, const Eigen::VectorXd& x) {
  return sign_pm1(decision_value(clf, x));
}

inline Eigen::VectorXd decision_values(const LinearClassifier& clf, const Eigen::MatrixXd& X) {
  if (X.cols() != clf.weights.size()) throw std::invalid_argument("decision_values: dimension mismatch");
  return (X * clf.weights).array() + clf.intercept;
}

inline std::vector<int> predict_labels(const LinearClassifier& clf, const Eigen::MatrixXd& X) {
  Eigen::VectorXd v = decision_values(clf, X);
  std::vector<int> labels(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) labels[static_cast<std::size_t>(i)] = sign_pm1(v[i]);
  return labels;
}

/// Minimizes sum((<w, x_i> + b - y_i)^2) + ridge * |w|^2 over (w, b); the
/// intercept is not penalized. With ridge = 0 a rank-deficient design is
/// rejected rather than silently regularized.
inline LinearClassifier fit_lda(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                double ridge = 1e-8) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n != y.size()) throw std::invalid_argument("fit_lda: X and y row counts differ");
  if (n < 2) throw std::invalid_argument("fit_lda: need at least two samples");
  if (ridge < 0.0) throw std::invalid_argument("fit_lda: ridge must be >= 0");
  bool has_pos = false, has_neg = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] == 1.0) has_pos = true;
    else if (y[i] == -1.0) has_neg = true;
    else throw std::invalid_argument("fit_lda: labels must be exactly -1 or +1");
  }
  if (!has_pos || !has_neg) throw std::invalid_argument("fit_lda: both classes must be present");

  // Bordered normal equations for [w; b].
  Eigen::MatrixXd gram(d + 1, d + 1);
  gram.topLeftCorner(d, d) = X.transpose() * X;
  gram.topLeftCorner(d, d).diagonal().array() += ridge;
  Eigen::VectorXd colsum = X.colwise().sum();
  gram.topRightCorner(d, 1) = colsum;
  gram.bottomLeftCorner(1, d) = colsum.transpose();
  gram(d, d) = static_cast<double>(n);
  Eigen::VectorXd rhs(d + 1);
  rhs.head(d) = X.transpose() * y;
  rhs[d] = y.sum();

  if (ridge == 0.0) {
    Eigen::MatrixXd design(n, d + 1);
    design.leftCols(d) = X;
    design.col(d).setOnes();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < d + 1) {
      throw std::runtime_error(
          "fit_lda: singular normal equations (rank-deficient inputs); set ridge > 0");
    }
    Eigen::VectorXd sol = qr.solve(y);
    return {sol.head(d), sol[d]};
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::VectorXd sol = ldlt.solve(rhs);
  if (!sol.allFinite()) {
    throw std::runtime_error("fit_lda: normal equations could not be solved; increase ridge");
  }
  return {sol.head(d), sol[d]};
}

/// Analytic Bayes rule in latent space: weights proportional to
/// Sigma^{-1} (mu_s, mu_c) for Sigma = [[1, s], [s, 1]], intercept 0.
inline LinearClassifier bayes_latent_rule(double mu_s, double mu_c, double sigma_sc) {
  if (!(std::abs(sigma_sc) < 1.0)) throw std::invalid_argument("bayes_latent_rule: |sigma_sc| must be < 1");
  const double det = 1.0 - sigma_sc * sigma_sc;
  Eigen::VectorXd w(2);
  w << (mu_s - sigma_sc * mu_c) / det, (mu_c - sigma_sc * mu_s) / det;
  return {w, 0.0};
}

}  // namespace shortcut_lab
