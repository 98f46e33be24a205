#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mixfit/ad.hpp"

// Generic maximizers over unconstrained parameter vectors.  Objectives are
// maximized directly (all reported numbers are log-likelihoods); Newton-CG
// works on the negated Hessian through Hessian-vector products only.

namespace mixfit::opt {

enum class FitStatus { Converged, MaxIters, Diverged, RestartsExhausted };

inline const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::Converged: return "converged";
    case FitStatus::MaxIters: return "max-iters";
    case FitStatus::Diverged: return "diverged";
    case FitStatus::RestartsExhausted: return "restarts-exhausted";
  }
  return "unknown";
}

struct FitConfig {
  double learning_rate = 1e-2;
  int max_iters = 2000;
  double tol = 1e-8;  // relative log-likelihood change
  bool line_search = true;
  std::uint64_t seed = 0;
  int restarts = 1;
};

struct TraceRow {
  int iter = 0;
  double loglik = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  double elapsed_ms = 0.0;
};

struct FitTrace {
  std::vector<TraceRow> rows;
  bool empty() const { return rows.empty(); }
  const TraceRow& back() const { return rows.back(); }
};

/// Invoked once per appended trace row; lets callers stream rows to disk so
/// interrupted runs leave a valid prefix.
using TraceSink = std::function<void(const TraceRow&)>;

/// A scalar objective over a flat parameter vector, type-erased over the
/// three evaluation modes: plain value, value+gradient via a reverse sweep,
/// and Hessian-vector products via a dual-number tape.  The functor must be
/// callable as
///   double f(std::span<const double>)
///   ad::Var<T> f(ad::Tape<T>&, std::span<const ad::Var<T>>)   for T in
///   {double, ad::Dual}.
class Objective {
 public:
  template <class F>
  Objective(int dim, F f)
      : dim_(dim),
        value_([f](std::span<const double> x) { return f(x); }),
        tape_real_([f](ad::Tape<double>& t, std::span<const ad::Var<double>> v) { return f(t, v); }),
        tape_dual_([f](ad::Tape<ad::Dual>& t, std::span<const ad::Var<ad::Dual>> v) { return f(t, v); }) {}

  int dim() const { return dim_; }

  double value(std::span<const double> x) const { return value_(x); }

  ad::GradResult value_grad(std::span<const double> x) const {
    return ad::grad(tape_real_, x);
  }

  std::vector<double> hvp(std::span<const double> x, std::span<const double> v) const {
    return ad::hvp(tape_dual_, x, v);
  }

 private:
  int dim_;
  std::function<double(std::span<const double>)> value_;
  std::function<ad::Var<double>(ad::Tape<double>&, std::span<const ad::Var<double>>)> tape_real_;
  std::function<ad::Var<ad::Dual>(ad::Tape<ad::Dual>&, std::span<const ad::Var<ad::Dual>>)> tape_dual_;
};

struct AscentResult {
  Eigen::VectorXd x;
  double value = 0.0;
  FitTrace trace;
  FitStatus status = FitStatus::MaxIters;
};

struct LineSearchResult {
  double step = 0.0;
  double value = 0.0;  // objective at the accepted point (0 step: unchanged)
  bool stalled = false;
  bool not_ascent = false;
};

/// Backtracking Armijo search: largest eta = eta0 * 2^-k (k <= max_halvings)
/// with f(x + eta d) >= f(x) + c * eta * dir_deriv.  dir_deriv must be the
/// directional derivative grad(f)^T d at x; a non-ascent direction returns
/// step 0 with the warning flag set.
LineSearchResult line_search_backtrack(const Objective& obj, std::span<const double> x,
                                       std::span<const double> d, double f_x, double dir_deriv,
                                       double eta0, int max_halvings = 40, double c = 1e-4);

AscentResult gradient_ascent(const Objective& obj, const Eigen::VectorXd& x0,
                             const FitConfig& cfg, const TraceSink& sink = {});

struct NewtonCgConfig {
  int cg_max_iters = 0;    // 0: 2 * dim
  bool forcing = false;    // inexact-Newton tolerance min(0.5, sqrt(|g|)) |g|
  double cg_rel_tol = 1e-12;
  int max_halvings = 40;
  double armijo_c = 1e-4;
};

AscentResult newton_cg(const Objective& obj, const Eigen::VectorXd& x0, const FitConfig& cfg,
                       const NewtonCgConfig& ncfg = {}, const TraceSink& sink = {});

}  // namespace mixfit::opt
