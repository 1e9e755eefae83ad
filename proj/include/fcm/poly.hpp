#pragma once

#include <Eigen/Dense>
#include <algorithm>

#include "fcm/errors.hpp"

namespace fcm {

/** Polynomial in (t, x) with real coefficients, stored densely:
 *  coeff(i, j) multiplies t^i x^j.  Supports exactly the operations the
 *  right-inverse verification needs: linear combinations and derivatives.
 */
class Poly2 {
  public:
    Poly2() : c_(Eigen::MatrixXd::Zero(1, 1)) {}
    explicit Poly2(Eigen::MatrixXd coeffs) : c_(std::move(coeffs)) {
        if (c_.size() == 0) c_ = Eigen::MatrixXd::Zero(1, 1);
    }

    static Poly2 zero() { return Poly2(); }
    static Poly2 monomial(int deg_t, int deg_x, double coeff = 1.0) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(deg_t + 1, deg_x + 1);
        m(deg_t, deg_x) = coeff;
        return Poly2(m);
    }

    const Eigen::MatrixXd& coeffs() const { return c_; }

    Poly2& operator+=(const Poly2& o) {
        grow(o.c_.rows(), o.c_.cols());
        c_.topLeftCorner(o.c_.rows(), o.c_.cols()) += o.c_;
        return *this;
    }
    Poly2& operator-=(const Poly2& o) {
        grow(o.c_.rows(), o.c_.cols());
        c_.topLeftCorner(o.c_.rows(), o.c_.cols()) -= o.c_;
        return *this;
    }
    Poly2& operator*=(double s) {
        c_ *= s;
        return *this;
    }
    friend Poly2 operator+(Poly2 a, const Poly2& b) { return a += b; }
    friend Poly2 operator-(Poly2 a, const Poly2& b) { return a -= b; }
    friend Poly2 operator*(double s, Poly2 p) { return p *= s; }

    /// d/dt, exact.
    Poly2 dt() const {
        if (c_.rows() == 1) return zero();
        Eigen::MatrixXd m(c_.rows() - 1, c_.cols());
        for (int i = 1; i < c_.rows(); ++i) m.row(i - 1) = i * c_.row(i);
        return Poly2(m);
    }

    /// d/dx, exact.
    Poly2 dx() const {
        if (c_.cols() == 1) return zero();
        Eigen::MatrixXd m(c_.rows(), c_.cols() - 1);
        for (int j = 1; j < c_.cols(); ++j) m.col(j - 1) = j * c_.col(j);
        return Poly2(m);
    }

    /// d^k/dx^k.
    Poly2 dx(int k) const {
        Poly2 p = *this;
        for (int i = 0; i < k; ++i) p = p.dx();
        return p;
    }

    double eval(double t, double x) const {
        double acc = 0.0;
        for (int i = c_.rows() - 1; i >= 0; --i) {
            double row = 0.0;
            for (int j = c_.cols() - 1; j >= 0; --j) row = row * x + c_(i, j);
            acc = acc * t + row;
        }
        return acc;
    }

    double max_abs_coeff() const { return c_.cwiseAbs().maxCoeff(); }

  private:
    void grow(Eigen::Index rows, Eigen::Index cols) {
        if (rows <= c_.rows() && cols <= c_.cols()) return;
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(std::max(rows, c_.rows()), std::max(cols, c_.cols()));
        m.topLeftCorner(c_.rows(), c_.cols()) = c_;
        c_ = std::move(m);
    }

    Eigen::MatrixXd c_;
};

}  // namespace fcm
