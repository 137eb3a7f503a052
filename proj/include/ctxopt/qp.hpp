#pragma once

#include <chrono>
#include <vector>

#include "ctxopt/lp.hpp"

namespace ctxopt {

/// min 1/2 z^T Q z + c^T z  s.t.  A_ineq z <= b_ineq, A_eq z = b_eq, bounds.
/// Q must be symmetric positive semidefinite (checked within psd_tol).
struct QuadraticProgram {
  Matrix Q;
  Vector c;
  Matrix A_ineq;
  Vector b_ineq;
  Matrix A_eq;
  Vector b_eq;
  std::vector<BoundedInterval> bounds;

  Eigen::Index num_vars() const { return c.size(); }

  LinearProgram relaxation_lp() const {
    return LinearProgram{c, A_ineq, b_ineq, A_eq, b_eq, bounds};
  }

  void validate(double psd_tol = 1e-8) const {
    const Eigen::Index n = c.size();
    if (Q.rows() != n || Q.cols() != n)
      throw DataError("QuadraticProgram: Q dimension mismatch");
    const double qscale = std::max(1.0, Q.cwiseAbs().maxCoeff());
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-9 * qscale)
      throw DataError("QuadraticProgram: Q not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(Q, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().size() > 0 &&
        es.eigenvalues().minCoeff() < -psd_tol * qscale)
      throw DataError("QuadraticProgram: Q not positive semidefinite");
    relaxation_lp().validate();
  }
};

namespace detail {

/**
 * Primal active-set method with a null-space subproblem solve.
 *
 * The reduced Hessian is eigen-decomposed each iteration so that
 * zero-curvature descent directions (LP-like faces, singular PSD blocks)
 * step to a blocking constraint instead of failing. Working-set drops use
 * the most-negative multiplier, falling back to a lowest-index rule after
 * a degenerate streak.
 */
class ActiveSetQp {
 public:
  ActiveSetQp(const QuadraticProgram& qp, const SolverOptions& opts)
      : opts_(opts), Q_(qp.Q), c_(qp.c), E_(qp.A_eq), f_(qp.b_eq) {
    n_ = qp.num_vars();
    mi_ = qp.A_ineq.rows();
    bound_row_of_upper_.assign(n_, -1);
    bound_row_of_lower_.assign(n_, -1);
    G_ = Matrix::Zero(mi_ + 2 * n_, n_);
    h_ = Vector::Zero(mi_ + 2 * n_);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < mi_; ++i, ++k) {
      G_.row(k) = qp.A_ineq.row(i);
      h_[k] = qp.b_ineq[i];
    }
    for (Eigen::Index j = 0; j < n_; ++j) {
      if (qp.bounds[j].hi < kInfBoundThreshold) {
        G_(k, j) = 1.0;
        h_[k] = qp.bounds[j].hi;
        bound_row_of_upper_[j] = k;
        ++k;
      }
      if (qp.bounds[j].lo > -kInfBoundThreshold) {
        G_(k, j) = -1.0;
        h_[k] = -qp.bounds[j].lo;
        bound_row_of_lower_[j] = k;
        ++k;
      }
    }
    G_.conservativeResize(k, n_);
    h_.conservativeResize(k);
    lp_for_phase1_ = qp.relaxation_lp();
    lp_for_phase1_.c = Vector::Zero(n_);
  }

  SolveReport run(const Vector* start, const std::vector<int>* warm_active) {
    const auto t0 = std::chrono::steady_clock::now();
    SolveReport rep;

    Vector x;
    if (start && start->size() == n_ && primal_feasible(*start)) {
      x = *start;
    } else {
      SolveReport ph1 = solve_lp(lp_for_phase1_, opts_);
      if (ph1.status != SolveStatus::Optimal) {
        rep.status = ph1.status == SolveStatus::Unbounded
                         ? SolveStatus::Infeasible
                         : ph1.status;
        finish(rep, t0);
        return rep;
      }
      x = ph1.z;
    }

    std::vector<Eigen::Index> active;
    if (warm_active) {
      for (int j : *warm_active) {
        if (j >= 0 && j < G_.rows() &&
            std::abs(G_.row(j).dot(x) - h_[j]) <= 10 * opts_.feas_tol)
          active.push_back(j);
      }
    }

    long iters = 0;
    int stall = 0;
    const Eigen::Index me = E_.rows();
    Vector mults;  // [nu; mu_active] at the last stationary point

    while (true) {
      if (++iters > opts_.max_iters) {
        rep.status = SolveStatus::IterLimit;
        break;
      }

      Matrix W(me + static_cast<Eigen::Index>(active.size()), n_);
      if (me > 0) W.topRows(me) = E_;
      for (size_t a = 0; a < active.size(); ++a)
        W.row(me + a) = G_.row(active[a]);

      const Vector grad = Q_ * x + c_;
      Matrix Z;
      if (W.rows() == 0) {
        Z = Matrix::Identity(n_, n_);
      } else {
        Eigen::FullPivLU<Matrix> lu(W);
        lu.setThreshold(1e-10);
        Z = lu.kernel();
        if (lu.dimensionOfKernel() == 0) Z.resize(n_, 0);
      }

      Vector d = Vector::Zero(n_);
      bool ray = false;
      if (Z.cols() > 0) {
        const Matrix H = Z.transpose() * Q_ * Z;
        const Vector g = Z.transpose() * grad;
        Eigen::SelfAdjointEigenSolver<Matrix> es(H);
        const Vector lam = es.eigenvalues();
        const Matrix V = es.eigenvectors();
        const double lmax = std::max(lam.size() ? lam.maxCoeff() : 0.0, 0.0);
        const double zero_tol = std::max(opts_.psd_tol * std::max(1.0, lmax),
                                         1e-12);
        Vector u = Vector::Zero(Z.cols());
        double ray_slope_sq = 0.0;
        for (Eigen::Index kk = 0; kk < lam.size(); ++kk) {
          const double coef = V.col(kk).dot(g);
          if (lam[kk] <= zero_tol) {
            ray_slope_sq += coef * coef;
            u -= V.col(kk) * coef;  // zero-curvature descent component
          }
        }
        const double gscale = std::max(1.0, grad.cwiseAbs().maxCoeff());
        if (std::sqrt(ray_slope_sq) > 1e-9 * gscale) {
          ray = true;
          d = Z * u;
        } else {
          u.setZero();
          for (Eigen::Index kk = 0; kk < lam.size(); ++kk) {
            if (lam[kk] > zero_tol) u -= V.col(kk) * (V.col(kk).dot(g) / lam[kk]);
          }
          d = Z * u;
        }
      }

      const double dnorm = d.cwiseAbs().maxCoeff();
      if (!ray && dnorm <= 1e-11 * (1.0 + x.cwiseAbs().maxCoeff())) {
        // Stationary on the working set: check multipliers.
        if (W.rows() == 0) {
          rep.status = SolveStatus::Optimal;
          mults.resize(0);
          break;
        }
        mults = W.transpose()
                    .completeOrthogonalDecomposition()
                    .solve(-grad)
                    .eval();
        Eigen::Index worst = -1;
        double worst_val = -opts_.opt_tol;
        const bool bland = stall >= 24;
        for (size_t a = 0; a < active.size(); ++a) {
          const double mu = mults[me + a];
          if (mu < worst_val) {
            worst = static_cast<Eigen::Index>(a);
            worst_val = mu;
            if (bland) break;  // first negative, lowest row index order
          }
        }
        if (worst < 0) {
          rep.status = SolveStatus::Optimal;
          break;
        }
        active.erase(active.begin() + worst);
        ++stall;
        continue;
      }

      // Line step to the nearest blocking constraint.
      double alpha = ray ? kInfBound : 1.0;
      Eigen::Index blocking = -1;
      for (Eigen::Index j = 0; j < G_.rows(); ++j) {
        bool is_active = false;
        for (Eigen::Index a : active)
          if (a == j) { is_active = true; break; }
        if (is_active) continue;
        const double s = G_.row(j).dot(d);
        if (s <= 1e-11) continue;
        const double a_j = (h_[j] - G_.row(j).dot(x)) / s;
        if (a_j < alpha - 1e-12) {
          alpha = std::max(a_j, 0.0);
          blocking = j;
        }
      }
      if (ray && blocking < 0) {
        rep.status = SolveStatus::Unbounded;
        rep.z = x;
        break;
      }
      x += alpha * d;
      if (blocking >= 0) active.push_back(blocking);
      stall = (alpha <= 1e-12) ? stall + 1 : 0;
    }

    rep.z = x;
    rep.objective = 0.5 * x.dot(Q_ * x) + c_.dot(x);
    rep.iterations = iters;
    extract_duals(rep, active, mults);
    if (rep.status == SolveStatus::Optimal) verify_kkt(rep);
    finish(rep, t0);
    return rep;
  }

 private:
  bool primal_feasible(const Vector& x) const {
    if (!x.allFinite()) return false;
    if (E_.rows() > 0 &&
        (E_ * x - f_).cwiseAbs().maxCoeff() > opts_.feas_tol)
      return false;
    for (Eigen::Index j = 0; j < G_.rows(); ++j)
      if (G_.row(j).dot(x) > h_[j] + opts_.feas_tol) return false;
    return true;
  }

  void extract_duals(SolveReport& rep, const std::vector<Eigen::Index>& active,
                     const Vector& mults) {
    const Eigen::Index me = E_.rows();
    rep.duals_eq = Vector::Zero(me);
    rep.duals_ineq = Vector::Zero(mi_);
    rep.reduced_costs = Vector::Zero(n_);
    if (mults.size() != me + static_cast<Eigen::Index>(active.size())) return;
    rep.duals_eq = mults.head(me);
    for (size_t a = 0; a < active.size(); ++a) {
      const Eigen::Index row = active[a];
      const double mu = std::max(mults[me + a], 0.0);
      if (row < mi_) {
        rep.duals_ineq[row] = mu;
      } else {
        for (Eigen::Index j = 0; j < n_; ++j) {
          if (bound_row_of_upper_[j] == row) rep.reduced_costs[j] -= mu;
          if (bound_row_of_lower_[j] == row) rep.reduced_costs[j] += mu;
        }
      }
    }
  }

  void verify_kkt(SolveReport& rep) {
    // Stationarity: Q z + c + A_ineq^T mu + A_eq^T nu - reduced_costs = 0.
    Vector r = Q_ * rep.z + c_;
    if (mi_ > 0) r += G_.topRows(mi_).transpose() * rep.duals_ineq;
    if (E_.rows() > 0) r += E_.transpose() * rep.duals_eq;
    r -= rep.reduced_costs;
    const double scale = std::max(1.0, c_.cwiseAbs().maxCoeff());
    if (r.cwiseAbs().maxCoeff() > 1e3 * opts_.opt_tol * scale) {
      rep.status = SolveStatus::IterLimit;
      rep.note = "KKT stationarity check failed";
    }
    if (!primal_feasible(rep.z)) {
      rep.status = SolveStatus::IterLimit;
      rep.note = "primal feasibility check failed";
    }
  }

  void finish(SolveReport& rep, std::chrono::steady_clock::time_point t0) {
    rep.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
  }

  SolverOptions opts_;
  Matrix Q_;
  Vector c_;
  Matrix E_;
  Vector f_;
  Matrix G_;
  Vector h_;
  Eigen::Index n_ = 0, mi_ = 0;
  std::vector<Eigen::Index> bound_row_of_upper_, bound_row_of_lower_;
  LinearProgram lp_for_phase1_;
};

}  // namespace detail

/// `start` (optional) is used when it is already feasible; `warm_active`
/// (optional) seeds the working set with combined-row indices, as handed
/// back by a previous report on a related program.
inline SolveReport solve_qp(const QuadraticProgram& qp,
                            const SolverOptions& opts = {},
                            const Vector* start = nullptr,
                            const std::vector<int>* warm_active = nullptr) {
  qp.validate(opts.psd_tol);
  detail::ActiveSetQp solver(qp, opts);
  return solver.run(start, warm_active);
}

}  // namespace ctxopt
