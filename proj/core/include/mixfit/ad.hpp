#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mixfit/errors.hpp"

// Reverse-mode automatic differentiation over a scalar expression tape.
//
// A Tape<T> records one node per elementary operation together with the
// local partial derivatives w.r.t. its parents; a single reverse sweep then
// yields the gradient of the recorded output w.r.t. every input.  The tape
// scalar T is either double (plain gradients) or Dual (a value paired with a
// directional derivative), so one reverse sweep over a Dual tape produces a
// Hessian-vector product without materializing the Hessian.
//
// Tapes are cheap to build and are discarded after every objective
// evaluation; nothing is cached across evaluations.

namespace mixfit::ad {

inline constexpr double kTwoOverSqrtPi = 1.1283791670955126;  // 2/sqrt(pi)
inline constexpr double kInvSqrt2 = 0.70710678118654752;
inline constexpr double kLn2Pi = 1.8378770664093455;

// ---------------------------------------------------------------------------
// Dual numbers

struct Dual {
  double val = 0.0;
  double dot = 0.0;
  constexpr Dual() = default;
  constexpr Dual(double v) : val(v) {}
  constexpr Dual(double v, double d) : val(v), dot(d) {}
};

constexpr Dual operator+(Dual a, Dual b) { return {a.val + b.val, a.dot + b.dot}; }
constexpr Dual operator-(Dual a, Dual b) { return {a.val - b.val, a.dot - b.dot}; }
constexpr Dual operator-(Dual a) { return {-a.val, -a.dot}; }
constexpr Dual operator*(Dual a, Dual b) {
  return {a.val * b.val, a.dot * b.val + a.val * b.dot};
}
constexpr Dual operator/(Dual a, Dual b) {
  const double inv = 1.0 / b.val;
  return {a.val * inv, (a.dot - a.val * b.dot * inv) * inv};
}
inline Dual& operator+=(Dual& a, Dual b) { return a = a + b; }
constexpr bool operator==(Dual a, Dual b) { return a.val == b.val && a.dot == b.dot; }

inline Dual exp(Dual a) {
  const double e = std::exp(a.val);
  return {e, a.dot * e};
}
inline Dual log(Dual a) { return {std::log(a.val), a.dot / a.val}; }
inline Dual sqrt(Dual a) {
  const double s = std::sqrt(a.val);
  return {s, a.dot / (2.0 * s)};
}
inline Dual erf(Dual a) {
  return {std::erf(a.val), a.dot * kTwoOverSqrtPi * std::exp(-a.val * a.val)};
}
inline Dual pow(Dual a, double c) {
  return {std::pow(a.val, c), a.dot * c * std::pow(a.val, c - 1.0)};
}

inline double primal(double x) { return x; }
inline double primal(const Dual& x) { return x.val; }

// ---------------------------------------------------------------------------
// Tape

template <class T>
class Tape;

/// Handle to a node on a Tape<T>.  Copying is free; all arithmetic on Var
/// appends nodes to the owning tape.
template <class T>
class Var {
 public:
  Var() = default;
  T value() const { return tape_->node_value(idx_); }
  std::uint32_t index() const { return idx_; }
  Tape<T>* tape() const { return tape_; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::uint32_t idx) : tape_(tape), idx_(idx) {}
  Tape<T>* tape_ = nullptr;
  std::uint32_t idx_ = 0;
};

template <class T>
class Tape {
 public:
  Tape() { edge_offset_.push_back(0); }

  Var<T> input(T value) {
    Var<T> v = nullary(value);
    inputs_.push_back(v.idx_);
    return v;
  }
  Var<T> constant(T value) { return nullary(value); }

  std::size_t size() const { return value_.size(); }
  std::size_t num_inputs() const { return inputs_.size(); }
  T node_value(std::uint32_t idx) const { return value_[idx]; }

  /// Reverse sweep: seeds the output adjoint with 1 and visits each node at
  /// most once in reverse topological order.
  void reverse(const Var<T>& output) {
    assert(output.tape_ == this);
    adjoint_.assign(value_.size(), T(0));
    adjoint_[output.idx_] = T(1);
    for (std::uint32_t i = output.idx_;; --i) {
      const T a = adjoint_[i];
      if (!(a == T(0))) {
        const std::uint32_t lo = edge_offset_[i], hi = edge_offset_[i + 1];
        for (std::uint32_t e = lo; e < hi; ++e) {
          adjoint_[edge_[e].parent] += a * edge_[e].weight;
        }
      }
      if (i == 0) break;
    }
  }

  T adjoint(const Var<T>& v) const { return adjoint_[v.idx_]; }

  void clear() {
    value_.clear();
    adjoint_.clear();
    edge_.clear();
    edge_offset_.assign(1, 0);
    inputs_.clear();
  }

  Var<T> nullary(T value) {
    value_.push_back(value);
    edge_offset_.push_back(static_cast<std::uint32_t>(edge_.size()));
    return Var<T>(this, static_cast<std::uint32_t>(value_.size() - 1));
  }
  Var<T> unary(T value, const Var<T>& a, T wa) {
    assert(a.tape_ == this);
    edge_.push_back({a.idx_, wa});
    return nullary(value);
  }
  Var<T> binary(T value, const Var<T>& a, T wa, const Var<T>& b, T wb) {
    assert(a.tape_ == this && b.tape_ == this);
    edge_.push_back({a.idx_, wa});
    edge_.push_back({b.idx_, wb});
    return nullary(value);
  }
  Var<T> nary(T value, std::span<const Var<T>> args, std::span<const T> weights) {
    assert(args.size() == weights.size());
    for (std::size_t i = 0; i < args.size(); ++i) {
      assert(args[i].tape_ == this);
      edge_.push_back({args[i].idx_, weights[i]});
    }
    return nullary(value);
  }

 private:
  struct Edge {
    std::uint32_t parent;
    T weight;
  };
  std::vector<T> value_;
  std::vector<T> adjoint_;
  std::vector<Edge> edge_;
  std::vector<std::uint32_t> edge_offset_;  // size() + 1 offsets into edge_
  std::vector<std::uint32_t> inputs_;
};

template <class T>
inline double primal(const Var<T>& v) {
  return primal(v.value());
}

// ---------------------------------------------------------------------------
// Arithmetic.  Mixed Var/double forms fold the constant into the local
// partial instead of allocating a node for it.

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
  return a.tape()->binary(a.value() + b.value(), a, T(1), b, T(1));
}
template <class T>
Var<T> operator+(const Var<T>& a, double c) {
  return a.tape()->unary(a.value() + T(c), a, T(1));
}
template <class T>
Var<T> operator+(double c, const Var<T>& a) {
  return a + c;
}

template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
  return a.tape()->binary(a.value() - b.value(), a, T(1), b, T(-1));
}
template <class T>
Var<T> operator-(const Var<T>& a, double c) {
  return a.tape()->unary(a.value() - T(c), a, T(1));
}
template <class T>
Var<T> operator-(double c, const Var<T>& a) {
  return a.tape()->unary(T(c) - a.value(), a, T(-1));
}
template <class T>
Var<T> operator-(const Var<T>& a) {
  return a.tape()->unary(-a.value(), a, T(-1));
}

template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
  return a.tape()->binary(a.value() * b.value(), a, b.value(), b, a.value());
}
template <class T>
Var<T> operator*(const Var<T>& a, double c) {
  return a.tape()->unary(a.value() * T(c), a, T(c));
}
template <class T>
Var<T> operator*(double c, const Var<T>& a) {
  return a * c;
}

template <class T>
Var<T> operator/(const Var<T>& a, const Var<T>& b) {
  const T inv = T(1) / b.value();
  const T q = a.value() * inv;
  return a.tape()->binary(q, a, inv, b, -q * inv);
}
template <class T>
Var<T> operator/(const Var<T>& a, double c) {
  return a * (1.0 / c);
}
template <class T>
Var<T> operator/(double c, const Var<T>& a) {
  const T inv = T(1) / a.value();
  return a.tape()->unary(T(c) * inv, a, T(-c) * inv * inv);
}

template <class T>
Var<T> exp(const Var<T>& a) {
  using std::exp;
  const T e = exp(a.value());
  return a.tape()->unary(e, a, e);
}

template <class T>
Var<T> log(const Var<T>& a) {
  using std::log;
  if (!(primal(a.value()) > 0.0)) throw DomainError("log", primal(a.value()));
  return a.tape()->unary(log(a.value()), a, T(1) / a.value());
}

template <class T>
Var<T> sqrt(const Var<T>& a) {
  using std::sqrt;
  if (!(primal(a.value()) > 0.0)) throw DomainError("sqrt", primal(a.value()));
  const T s = sqrt(a.value());
  return a.tape()->unary(s, a, T(0.5) / s);
}

template <class T>
Var<T> erf(const Var<T>& a) {
  using std::erf;
  using std::exp;
  const T v = a.value();
  return a.tape()->unary(erf(v), a, T(kTwoOverSqrtPi) * exp(-(v * v)));
}

template <class T>
Var<T> pow(const Var<T>& a, double c) {
  using std::pow;
  const double base = primal(a.value());
  if (base < 0.0 && c != std::floor(c)) throw DomainError("pow", base);
  if (base == 0.0 && c < 1.0) throw DomainError("pow", base);
  return a.tape()->unary(pow(a.value(), c), a, T(c) * pow(a.value(), c - 1.0));
}

// ---------------------------------------------------------------------------
// logsumexp: registered as a single n-ary primitive with softmax partials.

inline double logsumexp(std::span<const double> v) {
  assert(!v.empty());
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

template <class T>
Var<T> logsumexp(std::span<const Var<T>> v) {
  using std::exp;
  using std::log;
  assert(!v.empty());
  Tape<T>* tape = v[0].tape();
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (primal(v[i].value()) > primal(v[arg].value())) arg = i;
  }
  const T m = v[arg].value();
  T s(0);
  for (const Var<T>& x : v) s += exp(x.value() - m);
  const T value = m + log(s);
  std::vector<T> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = exp(v[i].value() - value);
  return tape->nary(value, v, std::span<const T>(w));
}

// ---------------------------------------------------------------------------
// Standard normal CDF.  Composed from the erf primitive, so the chain rule
// yields exactly phi(x) as its derivative.

inline double std_normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }

template <class T>
Var<T> std_normal_cdf(const Var<T>& x) {
  return 0.5 * (erf(x * kInvSqrt2) + 1.0);
}

inline double std_normal_logpdf(double x) { return -0.5 * (kLn2Pi + x * x); }

// ---------------------------------------------------------------------------
// Logistic map l_{k+1} = 4 l_k (1 - l_k), l_1 = x.  A loop program: the tape
// it records grows by a fixed number of nodes per iteration.

template <class S>
S logistic_map(S x, int n) {
  assert(n >= 1);
  S l = x;
  for (int k = 1; k < n; ++k) l = 4.0 * (l * (1.0 - l));
  return l;
}

// ---------------------------------------------------------------------------
// Drivers.  F must be callable as  Var<T> f(Tape<T>&, std::span<const Var<T>>)
// for T = double (grad) and T = Dual (hvp).

struct GradResult {
  double value = 0.0;
  std::vector<double> gradient;
};

template <class F>
GradResult grad(F&& f, std::span<const double> x) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  vars.reserve(x.size());
  for (double xi : x) vars.push_back(tape.input(xi));
  const Var<double> out = f(tape, std::span<const Var<double>>(vars));
  tape.reverse(out);
  GradResult r;
  r.value = out.value();
  r.gradient.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r.gradient[i] = tape.adjoint(vars[i]);
  return r;
}

/// Hessian-vector product H(x)·v by differentiating the reverse sweep with
/// dual numbers (forward-over-reverse); exact up to roundoff.
template <class F>
std::vector<double> hvp(F&& f, std::span<const double> x, std::span<const double> v) {
  assert(x.size() == v.size());
  Tape<Dual> tape;
  std::vector<Var<Dual>> vars;
  vars.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) vars.push_back(tape.input(Dual(x[i], v[i])));
  const Var<Dual> out = f(tape, std::span<const Var<Dual>>(vars));
  tape.reverse(out);
  std::vector<double> result(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) result[i] = tape.adjoint(vars[i]).dot;
  return result;
}

}  // namespace mixfit::ad
