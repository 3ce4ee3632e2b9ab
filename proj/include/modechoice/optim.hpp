#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "modechoice/common.hpp"

namespace modechoice {

/// Smooth unconstrained maximization problem. The gradient is optional;
/// central differences stand in when it is absent.
struct OptProblem {
  int dim = 0;
  std::function<double(const Eigen::VectorXd&)> objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;  // may be empty
};

struct OptOptions {
  int max_iters = 500;
  double grad_tol = 1e-6;  // on max-norm of gradient, relative to 1 + |f|
  double step_tol = 1e-12;
  bool record_trace = false;
};

struct TracePoint {
  int iter;
  double f;
  double grad_norm;
};

struct OptResult {
  Eigen::VectorXd x_star;
  double f_star = kNaN;
  int n_iters = 0;
  bool converged = false;
  double grad_norm = kNaN;
  std::string message;
  std::vector<TracePoint> trace;
};

inline Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double xj = x(j);
    xp(j) = xj + h;
    double fp = f(xp);
    xp(j) = xj - h;
    double fm = f(xp);
    xp(j) = xj;
    g(j) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// BFGS ascent with Armijo backtracking (contraction 0.5, sufficient-increase
/// constant 1e-4). Internally runs as a minimization of -f.
inline OptResult maximize(const OptProblem& p, const Eigen::VectorXd& x0,
                          const OptOptions& opts = {}) {
  const Eigen::Index n = x0.size();
  auto fmin = [&](const Eigen::VectorXd& x) { return -p.objective(x); };
  auto gmin = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    if (p.gradient) return -p.gradient(x);
    double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
    return -finite_diff_grad(p.objective, x, 1e-7 * scale);
  };

  Eigen::VectorXd x = x0;
  double f = fmin(x);
  if (!std::isfinite(f)) throw validation_error("objective is not finite at the start point");
  Eigen::VectorXd g = gmin(x);

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  OptResult res;
  constexpr double c1 = 1e-4;

  auto finish = [&](bool ok, int iters, const std::string& msg) {
    res.x_star = x;
    res.f_star = -f;
    res.n_iters = iters;
    res.converged = ok;
    res.grad_norm = g.cwiseAbs().maxCoeff();
    res.message = msg;
    return res;
  };

  int it = 0;
  for (; it < opts.max_iters; ++it) {
    double gnorm = g.cwiseAbs().maxCoeff();
    if (opts.record_trace) res.trace.push_back({it, -f, gnorm});
    if (gnorm <= opts.grad_tol * (1.0 + std::abs(f))) return finish(true, it, "gradient tolerance met");

    Eigen::VectorXd d = -(H * g);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {  // not a descent direction for -f: reset curvature
      H.setIdentity();
      d = -g;
      slope = g.dot(d);
    }

    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = f;
    while (alpha >= 1e-14) {
      x_new = x + alpha * d;
      f_new = fmin(x_new);
      if (std::isfinite(f_new) && f_new <= f + c1 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return finish(false, it, "line search failed");

    Eigen::VectorXd s = x_new - x;
    if (s.cwiseAbs().maxCoeff() <= opts.step_tol * (1.0 + x.cwiseAbs().maxCoeff()))
      return finish(false, it + 1, "step below step_tol");

    Eigen::VectorXd g_new = gmin(x_new);
    Eigen::VectorXd yv = g_new - g;
    double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      double rho = 1.0 / sy;
      Eigen::MatrixXd outer = Eigen::MatrixXd::Identity(n, n) - rho * s * yv.transpose();
      H = outer * H * outer.transpose() + rho * s * s.transpose();
    }
    x = x_new;
    f = f_new;
    g = g_new;
  }
  return finish(false, it, "max iterations reached");
}

/// Max over components of |analytic - numeric| / max(1, |numeric|), with the
/// step scaled per component.
inline double check_gradient(const OptProblem& p, const Eigen::VectorXd& x) {
  if (!p.gradient) throw validation_error("check_gradient requires an analytic gradient");
  Eigen::VectorXd analytic = p.gradient(x);
  double worst = 0.0;
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double h = 1e-6 * std::max(1.0, std::abs(x(j)));
    double xj = x(j);
    xp(j) = xj + h;
    double fp = p.objective(xp);
    xp(j) = xj - h;
    double fm = p.objective(xp);
    xp(j) = xj;
    double numeric = (fp - fm) / (2.0 * h);
    double err = std::abs(analytic(j) - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

/// Central-difference Hessian of a gradient map, symmetrized. Used for
/// standard errors at the optimum (the BFGS approximation is not a
/// consistent covariance estimator).
inline Eigen::MatrixXd fd_hessian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                                  const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd h_mat(n, n);
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    double h = 1e-5 * std::max(1.0, std::abs(x(j)));
    double xj = x(j);
    xp(j) = xj + h;
    Eigen::VectorXd gp = grad(xp);
    xp(j) = xj - h;
    Eigen::VectorXd gm = grad(xp);
    xp(j) = xj;
    h_mat.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (h_mat + h_mat.transpose());
}

}  // namespace modechoice
