#pragma once

#include <chrono>
#include <functional>
#include <vector>

#include "ctxopt/common.hpp"

namespace ctxopt {

/// A smooth scalar function with gradient; `add_hessian` is optional and,
/// when present, accumulates the Hessian at x into H (H is pre-sized and
/// zeroed by the caller loop). Without Hessians the minimizer falls back
/// to BFGS.
struct SmoothFunction {
  std::function<double(const Vector& x, Vector* grad)> eval;
  std::function<void(const Vector& x, Matrix& H)> add_hessian;
};

/**
 * Minimizes  f(x) + penalty * sum_j max(0, r_j(x))^2  by damped Newton
 * (BFGS when any Hessian callback is missing) with Armijo backtracking.
 *
 * Returns Optimal once the penalized gradient inf-norm falls below
 * opts.opt_tol, IterLimit otherwise. The penalized objective is monotone
 * nonincreasing across iterations. Equality constraints are expressed by
 * passing both residual signs. Non-finite oracle values at the incumbent
 * point raise SolveError.
 */
inline SolveReport minimize_penalized(
    const SmoothFunction& objective,
    const std::vector<SmoothFunction>& ineq_residuals, Vector start,
    double penalty_weight, const SolverOptions& opts = {}) {
  if (!(penalty_weight > 0.0))
    throw DataError("minimize_penalized: penalty weight must be > 0");
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index n = start.size();
  const bool have_hessians = [&] {
    if (!objective.add_hessian) return false;
    for (const auto& r : ineq_residuals)
      if (!r.add_hessian) return false;
    return true;
  }();

  Vector x = std::move(start);
  Vector grad(n), rg(n);
  Matrix H;
  Matrix bfgs = Matrix::Identity(n, n);

  auto penalized = [&](const Vector& v, Vector* g, Matrix* hess) -> double {
    double val = objective.eval(v, g);
    if (hess) {
      hess->setZero(n, n);
      objective.add_hessian(v, *hess);
    }
    for (const auto& rfun : ineq_residuals) {
      Vector* want = g ? &rg : nullptr;
      const double r = rfun.eval(v, want);
      if (r <= 0.0) continue;
      val += penalty_weight * r * r;
      if (g) *g += (2.0 * penalty_weight * r) * rg;
      if (hess) {
        *hess += (2.0 * penalty_weight) * (rg * rg.transpose());
        if (rfun.add_hessian) {
          Matrix Hr = Matrix::Zero(n, n);
          rfun.add_hessian(v, Hr);
          *hess += (2.0 * penalty_weight * r) * Hr;
        }
      }
    }
    return val;
  };

  SolveReport rep;
  double fx = penalized(x, &grad, have_hessians ? &H : nullptr);
  if (!std::isfinite(fx))
    throw SolveError("minimize_penalized: non-finite oracle value at start");

  Vector prev_grad = grad, prev_x = x;
  long it = 0;
  for (; it < opts.max_iters; ++it) {
    const double gnorm = grad.cwiseAbs().maxCoeff();
    if (gnorm <= opts.opt_tol) {
      rep.status = SolveStatus::Optimal;
      break;
    }

    Vector d;
    double damping = 0.0;
    const Matrix& Huse = have_hessians ? H : bfgs;
    const double hscale = std::max(1.0, Huse.diagonal().cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 40; ++attempt) {
      Matrix Hd = Huse;
      if (damping > 0.0) Hd.diagonal().array() += damping;
      Eigen::LDLT<Matrix> ldlt(Hd);
      if (ldlt.info() == Eigen::Success) {
        d = ldlt.solve(-grad);
        if (d.allFinite() && grad.dot(d) < -1e-14 * gnorm * gnorm / hscale)
          break;
      }
      damping = damping == 0.0 ? 1e-8 * hscale : damping * 10.0;
      d.resize(0);
    }
    if (d.size() == 0) d = -grad;  // steepest descent as last resort

    const double slope = grad.dot(d);
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      Vector xt = x + t * d;
      const double ft = penalized(xt, nullptr, nullptr);
      if (std::isfinite(ft) && ft <= fx + 1e-4 * t * slope) {
        prev_x = x;
        prev_grad = grad;
        x = std::move(xt);
        fx = penalized(x, &grad, have_hessians ? &H : nullptr);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No descent achievable at line-search resolution.
      rep.status = grad.cwiseAbs().maxCoeff() <= 1e3 * opts.opt_tol
                       ? SolveStatus::Optimal
                       : SolveStatus::IterLimit;
      break;
    }
    if (!std::isfinite(fx))
      throw SolveError("minimize_penalized: non-finite oracle value");

    if (!have_hessians) {
      const Vector s = x - prev_x;
      const Vector yv = grad - prev_grad;
      const double sy = s.dot(yv);
      if (sy > 1e-12 * s.norm() * yv.norm()) {
        const Vector Bs = bfgs * s;
        bfgs += (yv * yv.transpose()) / sy -
                (Bs * Bs.transpose()) / std::max(s.dot(Bs), 1e-300);
      }
    }
  }
  if (it >= opts.max_iters) rep.status = SolveStatus::IterLimit;

  rep.z = x;
  rep.objective = fx;
  rep.iterations = it;
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

}  // namespace ctxopt
