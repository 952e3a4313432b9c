#pragma once

#include <cmath>

namespace cvdm {

/// Second-order forward-mode number: value and first two derivatives with
/// respect to one scalar input. Used for closed-form time functions whose
/// first and second time derivatives are needed (SNR', SNR'', gamma'').
template <typename Scalar>
struct Jet2 {
  Scalar v{};
  Scalar d1{};
  Scalar d2{};

  static Jet2 variable(Scalar x) { return {x, Scalar(1), Scalar(0)}; }
  static Jet2 constant(Scalar x) { return {x, Scalar(0), Scalar(0)}; }
};

template <typename S>
Jet2<S> operator+(const Jet2<S>& a, const Jet2<S>& b) { return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2}; }
template <typename S>
Jet2<S> operator-(const Jet2<S>& a, const Jet2<S>& b) { return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2}; }
template <typename S>
Jet2<S> operator-(const Jet2<S>& a) { return {-a.v, -a.d1, -a.d2}; }
template <typename S>
Jet2<S> operator*(const Jet2<S>& a, const Jet2<S>& b) {
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1, a.d2 * b.v + S(2) * a.d1 * b.d1 + a.v * b.d2};
}
template <typename S>
Jet2<S> operator*(S s, const Jet2<S>& a) { return {s * a.v, s * a.d1, s * a.d2}; }
template <typename S>
Jet2<S> operator*(const Jet2<S>& a, S s) { return s * a; }
template <typename S>
Jet2<S> operator+(const Jet2<S>& a, S s) { return {a.v + s, a.d1, a.d2}; }
template <typename S>
Jet2<S> operator+(S s, const Jet2<S>& a) { return a + s; }
template <typename S>
Jet2<S> operator-(S s, const Jet2<S>& a) { return {s - a.v, -a.d1, -a.d2}; }
template <typename S>
Jet2<S> operator-(const Jet2<S>& a, S s) { return {a.v - s, a.d1, a.d2}; }

/// Chain rule for f(a) given f, f', f'' at a.v.
template <typename S>
Jet2<S> compose(const Jet2<S>& a, S f, S df, S d2f) {
  return {f, df * a.d1, d2f * a.d1 * a.d1 + df * a.d2};
}

template <typename S>
Jet2<S> operator/(const Jet2<S>& a, const Jet2<S>& b) {
  const S inv = S(1) / b.v;
  return a * compose(b, inv, -inv * inv, S(2) * inv * inv * inv);
}

template <typename S>
Jet2<S> exp(const Jet2<S>& a) {
  using std::exp;
  const S e = exp(a.v);
  return compose(a, e, e, e);
}

template <typename S>
Jet2<S> log(const Jet2<S>& a) {
  using std::log;
  return compose(a, log(a.v), S(1) / a.v, -S(1) / (a.v * a.v));
}

template <typename S>
Jet2<S> sqrt(const Jet2<S>& a) {
  using std::sqrt;
  const S r = sqrt(a.v);
  return compose(a, r, S(0.5) / r, -S(0.25) / (r * a.v));
}

template <typename S>
S logistic(S x) {
  using std::exp;
  return x >= S(0) ? S(1) / (S(1) + exp(-x)) : exp(x) / (S(1) + exp(x));
}

template <typename S>
S softplus(S x) {
  using std::exp;
  using std::log1p;
  using std::abs;
  return (x > S(0) ? x : S(0)) + log1p(exp(-abs(x)));
}

template <typename S>
Jet2<S> sigmoid(const Jet2<S>& a) {
  const S s = logistic(a.v);
  const S ds = s * (S(1) - s);
  return compose(a, s, ds, ds * (S(1) - S(2) * s));
}

template <typename S>
Jet2<S> softplus(const Jet2<S>& a) {
  const S s = logistic(a.v);
  return compose(a, softplus(a.v), s, s * (S(1) - s));
}

}  // namespace cvdm
