#pragma once

#include "ctxopt/lp.hpp"
#include "ctxopt/ols.hpp"

namespace ctxopt {

/// Unit economics: manufacturing cost d and selling price r, r > d > 0.
struct NewsvendorInstance {
  double d = 0.0;
  double r = 0.0;

  void validate() const {
    if (!(r > d && d > 0.0))
      throw DataError("NewsvendorInstance: requires r > d > 0");
  }
};

/// The surrogate order for a point prediction: z* = yhat, floored at zero
/// since negative orders are meaningless (demand is positive).
inline double nv_surrogate_decide(const NewsvendorInstance&, double yhat) {
  return std::max(yhat, 0.0);
}

inline LinearCoefficients nv_fit_fo(const NewsvendorInstance& inst,
                                    const ContextDataset& data) {
  inst.validate();
  return ols_fit(data, 0);
}

/// In-sample cost of the raw linear rule z_i = w^T x_i (the criterion the
/// BL fit minimizes); set `clip_orders` to price the deployed policy
/// max(w^T x, 0) instead.
inline double nv_insample_cost(const NewsvendorInstance& inst,
                               const LinearCoefficients& w,
                               const ContextDataset& data,
                               bool clip_orders = false) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    double z = predict_linear(w, data.context(i));
    if (clip_orders) z = std::max(z, 0.0);
    total += inst.d * z - inst.r * std::min(z, data.outcomes()(i, 0));
  }
  return total;
}

struct NvFit {
  LinearCoefficients w;
  SolveReport solve;
};

/// Decision-aware fit: minimize sum_i d (w^T x_i) - r min(w^T x_i, y_i) as
/// one LP with auxiliary s_i <= w^T x_i, s_i <= y_i. Equivalent to fitting
/// the empirical (r-d)/r quantile rule within the linear class.
inline NvFit nv_fit_bl(const NewsvendorInstance& inst,
                       const ContextDataset& data,
                       const SolverOptions& opts = {}) {
  inst.validate();
  const Eigen::Index N = data.size(), p = data.feature_dim();
  LinearProgram lp;
  lp.c = Vector::Zero(p + N);
  for (Eigen::Index i = 0; i < N; ++i) {
    lp.c.head(p) += inst.d * data.context(i);
    lp.c[p + i] = -inst.r;
  }
  lp.A_ineq = Matrix::Zero(2 * N, p + N);
  lp.b_ineq = Vector::Zero(2 * N);
  for (Eigen::Index i = 0; i < N; ++i) {
    lp.A_ineq.row(2 * i).head(p) = -data.context(i).transpose();
    lp.A_ineq(2 * i, p + i) = 1.0;  // s_i - w^T x_i <= 0
    lp.A_ineq(2 * i + 1, p + i) = 1.0;
    lp.b_ineq[2 * i + 1] = data.outcomes()(i, 0);  // s_i <= y_i
  }
  lp.A_eq = Matrix::Zero(0, p + N);
  lp.b_eq = Vector::Zero(0);
  lp.bounds.assign(p + N, BoundedInterval(-kInfBound, kInfBound));
  NvFit fit;
  fit.solve = solve_lp(lp, opts);
  if (fit.solve.status == SolveStatus::Optimal)
    fit.w = LinearCoefficients(fit.solve.z.head(p));
  else
    throw SolveError(std::string("nv_fit_bl: LP solve failed: ") +
                     to_string(fit.solve.status));
  return fit;
}

inline double nv_decide(const NewsvendorInstance& inst,
                        const LinearCoefficients& w, const ContextVector& x) {
  return nv_surrogate_decide(inst, predict_linear(w, x));
}

}  // namespace ctxopt
