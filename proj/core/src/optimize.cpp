#include "mixfit/optimize.hpp"

#include <chrono>
#include <cmath>

namespace mixfit::opt {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool finite(double x) { return std::isfinite(x); }

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void push_row(FitTrace& trace, const TraceSink& sink, const TraceRow& row) {
  trace.rows.push_back(row);
  if (sink) sink(row);
}

}  // namespace

LineSearchResult line_search_backtrack(const Objective& obj, std::span<const double> x,
                                       std::span<const double> d, double f_x, double dir_deriv,
                                       double eta0, int max_halvings, double c) {
  LineSearchResult res;
  res.value = f_x;
  if (!(dir_deriv > 0.0)) {
    res.not_ascent = true;
    return res;
  }
  Eigen::VectorXd trial(x.size());
  double eta = eta0;
  for (int k = 0; k <= max_halvings; ++k, eta *= 0.5) {
    for (Eigen::Index i = 0; i < trial.size(); ++i) trial[i] = x[i] + eta * d[i];
    double f_trial;
    try {
      f_trial = obj.value(std::span<const double>(trial.data(), trial.size()));
    } catch (const Error&) {
      continue;  // stepped outside the domain; shrink
    }
    if (finite(f_trial) && f_trial >= f_x + c * eta * dir_deriv) {
      res.step = eta;
      res.value = f_trial;
      return res;
    }
  }
  res.stalled = true;
  return res;
}

AscentResult gradient_ascent(const Objective& obj, const Eigen::VectorXd& x0,
                             const FitConfig& cfg, const TraceSink& sink) {
  const auto t0 = Clock::now();
  AscentResult res;
  res.x = x0;

  Eigen::VectorXd x = x0, best_x = x0;
  ad::GradResult eval;
  try {
    eval = obj.value_grad(std::span<const double>(x.data(), x.size()));
  } catch (const Error&) {
    res.status = FitStatus::Diverged;
    return res;
  }
  if (!finite(eval.value) || !all_finite(eval.gradient)) {
    res.status = FitStatus::Diverged;
    return res;
  }
  double f = eval.value, best_f = f;
  double grad_norm = Eigen::Map<const Eigen::VectorXd>(eval.gradient.data(), x.size()).norm();
  push_row(res.trace, sink, {0, f, grad_norm, 0.0, ms_since(t0)});

  double eta_warm = cfg.learning_rate;
  const double eta_cap = cfg.learning_rate * 1024.0;
  res.status = FitStatus::MaxIters;
  for (int t = 1; t <= cfg.max_iters; ++t) {
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    double f_new, step;
    if (cfg.line_search) {
      const double dir_deriv = grad_norm * grad_norm;
      const LineSearchResult ls = line_search_backtrack(obj, xs, eval.gradient, f, dir_deriv,
                                                        eta_warm);
      if (ls.step == 0.0) {
        // no admissible step left: the objective is locally flat along g
        push_row(res.trace, sink, {t, f, grad_norm, 0.0, ms_since(t0)});
        res.status = FitStatus::Converged;
        break;
      }
      step = ls.step;
      f_new = ls.value;
      eta_warm = std::min(2.0 * ls.step, eta_cap);
    } else {
      step = cfg.learning_rate;
      f_new = 0.0;  // computed below
    }

    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += step * eval.gradient[i];
    try {
      eval = obj.value_grad(std::span<const double>(x.data(), x.size()));
    } catch (const Error&) {
      res.status = FitStatus::Diverged;
      res.x = best_x;
      res.value = best_f;
      return res;
    }
    f_new = eval.value;
    grad_norm = Eigen::Map<const Eigen::VectorXd>(eval.gradient.data(), x.size()).norm();
    if (!finite(f_new) || !all_finite(eval.gradient)) {
      res.status = FitStatus::Diverged;
      res.x = best_x;
      res.value = best_f;
      return res;
    }
    push_row(res.trace, sink, {t, f_new, grad_norm, step, ms_since(t0)});
    if (f_new > best_f) {
      best_f = f_new;
      best_x = x;
    }
    const bool converged = std::abs(f_new - f) / (1.0 + std::abs(f_new)) < cfg.tol;
    f = f_new;
    if (converged) {
      res.status = FitStatus::Converged;
      break;
    }
  }
  res.x = x;
  res.value = f;
  return res;
}

AscentResult newton_cg(const Objective& obj, const Eigen::VectorXd& x0, const FitConfig& cfg,
                       const NewtonCgConfig& ncfg, const TraceSink& sink) {
  const auto t0 = Clock::now();
  const Eigen::Index n = x0.size();
  const int cg_cap = ncfg.cg_max_iters > 0 ? ncfg.cg_max_iters : static_cast<int>(2 * n);

  AscentResult res;
  res.x = x0;

  Eigen::VectorXd x = x0, best_x = x0;
  ad::GradResult eval;
  try {
    eval = obj.value_grad(std::span<const double>(x.data(), x.size()));
  } catch (const Error&) {
    res.status = FitStatus::Diverged;
    return res;
  }
  if (!finite(eval.value) || !all_finite(eval.gradient)) {
    res.status = FitStatus::Diverged;
    return res;
  }
  double f = eval.value, best_f = f;
  Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(eval.gradient.data(), n);
  push_row(res.trace, sink, {0, f, g.norm(), 0.0, ms_since(t0)});

  res.status = FitStatus::MaxIters;
  for (int t = 1; t <= cfg.max_iters; ++t) {
    // Solve (-H) d = g by conjugate gradients on Hessian-vector products.
    const double gnorm = g.norm();
    const double tol_r = ncfg.forcing ? std::min(0.5, std::sqrt(gnorm)) * gnorm
                                      : std::max(ncfg.cg_rel_tol * gnorm, 1e-300);
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd r = g, p = g;
    double rs = r.squaredNorm();
    bool fallback_steepest = false;
    for (int k = 0; k < cg_cap && std::sqrt(rs) > tol_r; ++k) {
      std::vector<double> hp_raw;
      try {
        hp_raw = obj.hvp(std::span<const double>(x.data(), x.size()),
                         std::span<const double>(p.data(), static_cast<std::size_t>(n)));
      } catch (const Error&) {
        fallback_steepest = (k == 0);
        break;
      }
      Eigen::VectorXd hp = -Eigen::Map<const Eigen::VectorXd>(hp_raw.data(), n);
      const double curv = p.dot(hp);
      if (!(curv > 0.0) || !std::isfinite(curv)) {
        // non-positive curvature: truncate; fall back to steepest ascent if
        // no progress was made yet
        fallback_steepest = (k == 0);
        break;
      }
      const double alpha = rs / curv;
      d += alpha * p;
      r -= alpha * hp;
      const double rs_new = r.squaredNorm();
      const double beta = rs_new / rs;
      rs = rs_new;
      p = r + beta * p;
    }
    if (fallback_steepest || d.squaredNorm() == 0.0) d = g;

    const double dir_deriv = g.dot(d);
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    LineSearchResult ls = line_search_backtrack(obj, xs, {d.data(), static_cast<std::size_t>(n)},
                                                f, dir_deriv, 1.0, ncfg.max_halvings,
                                                ncfg.armijo_c);
    if (ls.not_ascent) {
      // CG produced a descent direction (strong non-concavity); retry along g
      ls = line_search_backtrack(obj, xs, eval.gradient, f, g.squaredNorm(), 1.0,
                                 ncfg.max_halvings, ncfg.armijo_c);
      d = g;
    }
    if (ls.step == 0.0) {
      push_row(res.trace, sink, {t, f, gnorm, 0.0, ms_since(t0)});
      res.status = FitStatus::Converged;
      break;
    }

    x += ls.step * d;
    try {
      eval = obj.value_grad(std::span<const double>(x.data(), x.size()));
    } catch (const Error&) {
      res.status = FitStatus::Diverged;
      res.x = best_x;
      res.value = best_f;
      return res;
    }
    const double f_new = eval.value;
    g = Eigen::Map<const Eigen::VectorXd>(eval.gradient.data(), n);
    if (!finite(f_new) || !g.allFinite()) {
      res.status = FitStatus::Diverged;
      res.x = best_x;
      res.value = best_f;
      return res;
    }
    push_row(res.trace, sink, {t, f_new, g.norm(), ls.step, ms_since(t0)});
    if (f_new > best_f) {
      best_f = f_new;
      best_x = x;
    }
    const bool converged = std::abs(f_new - f) / (1.0 + std::abs(f_new)) < cfg.tol;
    f = f_new;
    if (converged) {
      res.status = FitStatus::Converged;
      break;
    }
  }
  res.x = x;
  res.value = f;
  return res;
}

}  // namespace mixfit::opt
