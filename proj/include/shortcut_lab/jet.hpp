#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace shortcut_lab {

// Truncated power series ("jet") arithmetic. A Jet holds the Taylor
// coefficients c[0..deg] of a function expanded around a point, so
// f(x0 + t) = sum_k c[k] t^k + O(t^{deg+1}), and the m-th derivative at x0
// is m! * c[m]. Multiplication is the truncated Cauchy product; division
// and square root use the standard coefficient recurrences, which are exact
// up to rounding. This gives high-order derivatives of smooth compositions
// without the catastrophic cancellation of finite differences.
class Jet {
 public:
  Jet() : c_(1, 0.0) {}

  static Jet constant(double v, int degree) {
    Jet j;
    j.c_.assign(static_cast<std::size_t>(degree) + 1, 0.0);
    j.c_[0] = v;
    return j;
  }

  /// The series of the identity map at v: v + t.
  static Jet variable(double v, int degree) {
    if (degree < 1) throw std::invalid_argument("Jet::variable: degree must be >= 1");
    Jet j = constant(v, degree);
    j.c_[1] = 1.0;
    return j;
  }

  int degree() const { return static_cast<int>(c_.size()) - 1; }
  double value() const { return c_[0]; }

  double coeff(int k) const {
    if (k < 0 || k > degree()) throw std::out_of_range("Jet::coeff");
    return c_[static_cast<std::size_t>(k)];
  }

  /// m-th derivative of the underlying function at the expansion point.
  double derivative(int m) const {
    double f = 1.0;
    for (int k = 2; k <= m; ++k) f *= k;
    return f * coeff(m);
  }

  friend Jet operator+(const Jet& a, const Jet& b) {
    check_degrees(a, b);
    Jet r = a;
    for (std::size_t k = 0; k < r.c_.size(); ++k) r.c_[k] += b.c_[k];
    return r;
  }

  friend Jet operator-(const Jet& a, const Jet& b) {
    check_degrees(a, b);
    Jet r = a;
    for (std::size_t k = 0; k < r.c_.size(); ++k) r.c_[k] -= b.c_[k];
    return r;
  }

  friend Jet operator*(const Jet& a, const Jet& b) {
    check_degrees(a, b);
    Jet r = constant(0.0, a.degree());
    for (std::size_t i = 0; i < a.c_.size(); ++i) {
      if (a.c_[i] == 0.0) continue;
      for (std::size_t j = 0; i + j < r.c_.size(); ++j) {
        r.c_[i + j] += a.c_[i] * b.c_[j];
      }
    }
    return r;
  }

  friend Jet operator/(const Jet& a, const Jet& b) {
    check_degrees(a, b);
    if (b.c_[0] == 0.0) throw std::domain_error("Jet division by series with zero constant term");
    Jet r = constant(0.0, a.degree());
    for (std::size_t k = 0; k < r.c_.size(); ++k) {
      double acc = a.c_[k];
      for (std::size_t j = 1; j <= k; ++j) acc -= b.c_[j] * r.c_[k - j];
      r.c_[k] = acc / b.c_[0];
    }
    return r;
  }

  friend Jet operator+(const Jet& a, double s) { Jet r = a; r.c_[0] += s; return r; }
  friend Jet operator+(double s, const Jet& a) { return a + s; }
  friend Jet operator-(const Jet& a, double s) { Jet r = a; r.c_[0] -= s; return r; }
  friend Jet operator-(double s, const Jet& a) { return constant(s, a.degree()) - a; }
  friend Jet operator*(const Jet& a, double s) {
    Jet r = a;
    for (double& c : r.c_) c *= s;
    return r;
  }
  friend Jet operator*(double s, const Jet& a) { return a * s; }
  friend Jet operator/(const Jet& a, double s) { return a * (1.0 / s); }
  friend Jet operator/(double s, const Jet& a) { return constant(s, a.degree()) / a; }
  friend Jet operator-(const Jet& a) { return a * -1.0; }

  /// Series square root; requires a positive constant term.
  friend Jet sqrt(const Jet& a) {
    if (a.c_[0] <= 0.0) {
      throw std::domain_error("Jet sqrt of series with non-positive constant term");
    }
    Jet r = constant(0.0, a.degree());
    r.c_[0] = std::sqrt(a.c_[0]);
    for (std::size_t k = 1; k < r.c_.size(); ++k) {
      double acc = a.c_[k];
      for (std::size_t j = 1; j < k; ++j) acc -= r.c_[j] * r.c_[k - j];
      r.c_[k] = acc / (2.0 * r.c_[0]);
    }
    return r;
  }

 private:
  static void check_degrees(const Jet& a, const Jet& b) {
    if (a.degree() != b.degree()) {
      throw std::invalid_argument("Jet arithmetic on mismatched degrees");
    }
  }

  std::vector<double> c_;
};

}  // namespace shortcut_lab
