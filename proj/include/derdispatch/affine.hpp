#pragma once

// Small dense affine-expression algebra over the (decision, parameter) pair.
// An AffineVec represents v(y, x) = Y y + X x + c; an AffineScalar is one row
// of that. The inner approximation is assembled symbolically with these and
// then evaluated numerically (membership) or substituted (robust fitting).

#include "derdispatch/common.hpp"

namespace derdispatch {

struct AffineScalar {
  Vec a_y, a_x;
  double c = 0.0;

  double eval(const Vec& y, const Vec& x) const { return a_y.dot(y) + a_x.dot(x) + c; }

  AffineScalar operator-(const AffineScalar& o) const {
    AffineScalar r = *this;
    r.a_y -= o.a_y;
    r.a_x -= o.a_x;
    r.c -= o.c;
    return r;
  }
  AffineScalar operator+(const AffineScalar& o) const {
    AffineScalar r = *this;
    r.a_y += o.a_y;
    r.a_x += o.a_x;
    r.c += o.c;
    return r;
  }
  AffineScalar operator*(double s) const {
    AffineScalar r = *this;
    r.a_y *= s;
    r.a_x *= s;
    r.c *= s;
    return r;
  }
  AffineScalar& operator+=(double s) {
    c += s;
    return *this;
  }

  static AffineScalar constant(double value, int dim_y, int dim_x) {
    AffineScalar r;
    r.a_y = Vec::Zero(dim_y);
    r.a_x = Vec::Zero(dim_x);
    r.c = value;
    return r;
  }
};

struct AffineVec {
  Mat Y, X;
  Vec c;

  int dim() const { return static_cast<int>(c.size()); }
  int dim_y() const { return static_cast<int>(Y.cols()); }
  int dim_x() const { return static_cast<int>(X.cols()); }

  Vec eval(const Vec& y, const Vec& x) const { return Y * y + X * x + c; }

  AffineScalar row(int i) const {
    AffineScalar r;
    r.a_y = Y.row(i).transpose();
    r.a_x = X.row(i).transpose();
    r.c = c[i];
    return r;
  }

  static AffineVec zeros(int dim, int dim_y, int dim_x) {
    AffineVec v;
    v.Y = Mat::Zero(dim, dim_y);
    v.X = Mat::Zero(dim, dim_x);
    v.c = Vec::Zero(dim);
    return v;
  }
  // Selects a contiguous slice of y.
  static AffineVec y_segment(int start, int len, int dim_y, int dim_x) {
    AffineVec v = zeros(len, dim_y, dim_x);
    for (int i = 0; i < len; ++i) v.Y(i, start + i) = 1.0;
    return v;
  }
  static AffineVec x_segment(int start, int len, int dim_y, int dim_x) {
    AffineVec v = zeros(len, dim_y, dim_x);
    for (int i = 0; i < len; ++i) v.X(i, start + i) = 1.0;
    return v;
  }

  AffineVec operator+(const AffineVec& o) const {
    AffineVec r = *this;
    r.Y += o.Y;
    r.X += o.X;
    r.c += o.c;
    return r;
  }
  AffineVec operator-(const AffineVec& o) const {
    AffineVec r = *this;
    r.Y -= o.Y;
    r.X -= o.X;
    r.c -= o.c;
    return r;
  }
  AffineVec& operator+=(const Vec& constant) {
    c += constant;
    return *this;
  }

  friend AffineVec operator*(const Mat& m, const AffineVec& v) {
    AffineVec r;
    r.Y = m * v.Y;
    r.X = m * v.X;
    r.c = m * v.c;
    return r;
  }
};

}  // namespace derdispatch
