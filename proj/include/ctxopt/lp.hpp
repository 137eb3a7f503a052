#pragma once

#include <chrono>
#include <fstream>
#include <vector>

#include "ctxopt/common.hpp"

namespace ctxopt {

/// min c^T z  s.t.  A_ineq z <= b_ineq, A_eq z = b_eq, bounds on z.
/// Bounds with magnitude >= kInfBoundThreshold are treated as infinite.
struct LinearProgram {
  Vector c;
  Matrix A_ineq;  // may be 0 x n
  Vector b_ineq;
  Matrix A_eq;  // may be 0 x n
  Vector b_eq;
  std::vector<BoundedInterval> bounds;  // size n

  Eigen::Index num_vars() const { return c.size(); }

  void validate() const {
    const Eigen::Index n = c.size();
    if (n == 0) throw DataError("LinearProgram: no variables");
    if (A_ineq.size() > 0 && A_ineq.cols() != n)
      throw DataError("LinearProgram: A_ineq column mismatch");
    if (A_ineq.rows() != b_ineq.size())
      throw DataError("LinearProgram: b_ineq size mismatch");
    if (A_eq.size() > 0 && A_eq.cols() != n)
      throw DataError("LinearProgram: A_eq column mismatch");
    if (A_eq.rows() != b_eq.size())
      throw DataError("LinearProgram: b_eq size mismatch");
    if (static_cast<Eigen::Index>(bounds.size()) != n)
      throw DataError("LinearProgram: bounds size mismatch");
    if (!c.allFinite() || !A_ineq.allFinite() || !b_ineq.allFinite() ||
        !A_eq.allFinite() || !b_eq.allFinite())
      throw DataError("LinearProgram: non-finite coefficients");
  }
};

namespace detail {

// Bounded-variable primal simplex on the computational form
//   min c^T x  s.t.  [A_ineq; A_eq] x (+ slack) = b,  l <= x <= u.
// Dantzig pricing by default; Bland's rule engages after a degenerate
// streak so termination is guaranteed. Dense explicit basis inverse with
// periodic refactorization.
class SimplexSolver {
 public:
  SimplexSolver(const LinearProgram& lp, const SolverOptions& opts)
      : opts_(opts) {
    n_struct_ = lp.num_vars();
    mi_ = lp.A_ineq.rows();
    me_ = lp.A_eq.rows();
    m_ = mi_ + me_;
    n_total_ = n_struct_ + mi_ + m_;  // structural + slack + artificial

    A_ = Matrix::Zero(m_, n_total_);
    if (mi_ > 0) A_.block(0, 0, mi_, n_struct_) = lp.A_ineq;
    if (me_ > 0) A_.block(mi_, 0, me_, n_struct_) = lp.A_eq;
    for (Eigen::Index i = 0; i < mi_; ++i) A_(i, n_struct_ + i) = 1.0;

    b_ = Vector(m_);
    if (mi_ > 0) b_.head(mi_) = lp.b_ineq;
    if (me_ > 0) b_.tail(me_) = lp.b_eq;

    lo_ = Vector::Constant(n_total_, 0.0);
    hi_ = Vector::Constant(n_total_, kInfBound);
    for (Eigen::Index j = 0; j < n_struct_; ++j) {
      lo_[j] = lp.bounds[j].lo;
      hi_[j] = lp.bounds[j].hi;
    }

    cost_ = Vector::Zero(n_total_);
    cost_.head(n_struct_) = lp.c;
  }

  SolveReport run() {
    auto t0 = std::chrono::steady_clock::now();
    SolveReport rep;
    init_point_and_basis();

    if (needs_phase1_) {
      phase_ = 1;
      SolveStatus s1 = iterate(phase1_cost_);
      if (s1 == SolveStatus::IterLimit) {
        rep.status = s1;
        finalize(rep, t0);
        return rep;
      }
      if (phase1_objective() > 1e3 * opts_.feas_tol) {
        rep.status = SolveStatus::Infeasible;
        finalize(rep, t0);
        return rep;
      }
      // Pin artificials at zero for phase 2.
      for (Eigen::Index j = n_struct_ + mi_; j < n_total_; ++j) {
        lo_[j] = 0.0;
        hi_[j] = 0.0;
        x_[j] = 0.0;
      }
    }

    phase_ = 2;
    rep.status = iterate(cost_);
    finalize(rep, t0);
    return rep;
  }

 private:
  void init_point_and_basis() {
    x_ = Vector::Zero(n_total_);
    at_upper_.assign(n_total_, false);
    in_basis_.assign(n_total_, false);
    for (Eigen::Index j = 0; j < n_struct_; ++j) {
      const double lo = lo_[j], hi = hi_[j];
      const bool lo_inf = lo <= -kInfBoundThreshold;
      const bool hi_inf = hi >= kInfBoundThreshold;
      if (lo_inf && hi_inf) {
        x_[j] = 0.0;  // free, nonbasic at zero
      } else if (lo_inf) {
        x_[j] = hi;
        at_upper_[j] = true;
      } else if (hi_inf) {
        x_[j] = lo;
      } else if (std::abs(lo) <= std::abs(hi)) {
        x_[j] = lo;
      } else {
        x_[j] = hi;
        at_upper_[j] = true;
      }
    }

    Vector resid = b_ - A_.leftCols(n_struct_) * x_.head(n_struct_);
    basis_.assign(m_, -1);
    needs_phase1_ = false;
    phase1_cost_ = Vector::Zero(n_total_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (i < mi_ && resid[i] >= 0.0) {
        basis_[i] = n_struct_ + i;  // slack carries the row
        x_[n_struct_ + i] = resid[i];
      } else {
        const Eigen::Index a = n_struct_ + mi_ + i;
        const double sgn = resid[i] >= 0.0 ? 1.0 : -1.0;
        A_(i, a) = sgn;
        basis_[i] = a;
        x_[a] = std::abs(resid[i]);
        phase1_cost_[a] = 1.0;
        needs_phase1_ = true;
      }
      in_basis_[basis_[i]] = true;
    }
    refactorize();
  }

  void refactorize() {
    Matrix B(m_, m_);
    for (Eigen::Index i = 0; i < m_; ++i) B.col(i) = A_.col(basis_[i]);
    binv_ = B.partialPivLu().inverse();
    recompute_basics();
  }

  void recompute_basics() {
    Vector rhs = b_;
    for (Eigen::Index j = 0; j < n_total_; ++j)
      if (!in_basis_[j] && x_[j] != 0.0) rhs -= A_.col(j) * x_[j];
    Vector xb = binv_ * rhs;
    for (Eigen::Index i = 0; i < m_; ++i) x_[basis_[i]] = xb[i];
  }

  double phase1_objective() const {
    double s = 0.0;
    for (Eigen::Index j = n_struct_ + mi_; j < n_total_; ++j) s += x_[j];
    return s;
  }

  bool is_free(Eigen::Index j) const {
    return lo_[j] <= -kInfBoundThreshold && hi_[j] >= kInfBoundThreshold;
  }

  SolveStatus iterate(const Vector& cost) {
    const double dual_tol = opts_.opt_tol;
    int degenerate_streak = 0;
    double last_obj = cost.dot(x_);

    while (true) {
      if (++iters_ > opts_.max_iters) return SolveStatus::IterLimit;
      if (iters_ % 64 == 0) refactorize();

      Vector cb(m_);
      for (Eigen::Index i = 0; i < m_; ++i) cb[i] = cost[basis_[i]];
      const Vector y = binv_.transpose() * cb;

      const bool use_bland = degenerate_streak >= 24;
      Eigen::Index enter = -1;
      double best_score = 0.0;
      int enter_dir = 0;
      const Eigen::Index scan_end = n_struct_ + mi_;  // artificials never enter
      for (Eigen::Index j = 0; j < scan_end; ++j) {
        if (in_basis_[j]) continue;
        if (lo_[j] == hi_[j]) continue;  // fixed
        const double d = cost[j] - y.dot(A_.col(j));
        int dir = 0;
        if (is_free(j)) {
          if (d < -dual_tol) dir = +1;
          else if (d > dual_tol) dir = -1;
        } else if (!at_upper_[j] && d < -dual_tol) {
          dir = +1;
        } else if (at_upper_[j] && d > dual_tol) {
          dir = -1;
        }
        if (dir == 0) continue;
        if (use_bland) { enter = j; enter_dir = dir; break; }
        const double score = std::abs(d);
        if (score > best_score + 1e-12) {
          best_score = score;
          enter = j;
          enter_dir = dir;
        }
      }
      if (enter < 0) return SolveStatus::Optimal;

      // Ratio test along x_enter moving by enter_dir.
      Vector w = binv_ * A_.col(enter);
      double theta = kInfBound;
      Eigen::Index leave_row = -1;
      // Bound flip limit for the entering variable itself.
      if (lo_[enter] > -kInfBoundThreshold && hi_[enter] < kInfBoundThreshold)
        theta = hi_[enter] - lo_[enter];
      for (Eigen::Index i = 0; i < m_; ++i) {
        const double wi = enter_dir * w[i];
        const Eigen::Index bj = basis_[i];
        double cand = kInfBound;
        if (wi > 1e-11) {
          if (lo_[bj] > -kInfBoundThreshold) cand = (x_[bj] - lo_[bj]) / wi;
        } else if (wi < -1e-11) {
          if (hi_[bj] < kInfBoundThreshold) cand = (hi_[bj] - x_[bj]) / (-wi);
        }
        if (cand < theta - 1e-12 ||
            (cand < theta + 1e-12 && leave_row >= 0 &&
             basis_[i] < basis_[leave_row])) {
          theta = cand;
          leave_row = i;
        }
      }
      if (theta >= kInfBound * 0.5)
        return phase_ == 1 ? SolveStatus::IterLimit : SolveStatus::Unbounded;

      theta = std::max(theta, 0.0);
      // Apply the step.
      x_[enter] += enter_dir * theta;
      for (Eigen::Index i = 0; i < m_; ++i)
        x_[basis_[i]] -= enter_dir * theta * w[i];

      if (leave_row < 0) {
        // Bound flip: entering variable moved to its other bound.
        at_upper_[enter] = enter_dir > 0;
      } else {
        const Eigen::Index leave = basis_[leave_row];
        const double wl = enter_dir * w[leave_row];
        at_upper_[leave] = wl < 0.0;  // hit upper if it was increasing
        x_[leave] = at_upper_[leave] ? hi_[leave] : lo_[leave];
        in_basis_[leave] = false;
        basis_[leave_row] = enter;
        in_basis_[enter] = true;
        // Rank-one update of the inverse.
        const double piv = w[leave_row];
        binv_.row(leave_row) /= piv;
        for (Eigen::Index i = 0; i < m_; ++i) {
          if (i == leave_row) continue;
          const double f = w[i];
          if (f != 0.0) binv_.row(i) -= f * binv_.row(leave_row);
        }
      }

      const double obj = cost.dot(x_);
      if (obj < last_obj - 1e-12 * (1.0 + std::abs(last_obj)))
        degenerate_streak = 0;
      else
        ++degenerate_streak;
      last_obj = obj;

      if (trace_) {
        *trace_ << "iter=" << iters_ << " phase=" << phase_
                << " enter=" << enter << " theta=" << theta << " obj=" << obj
                << "\n";
      }
    }
  }

  void finalize(SolveReport& rep, std::chrono::steady_clock::time_point t0) {
    refactorize();
    rep.z = x_.head(n_struct_);
    rep.objective = cost_.head(n_struct_).dot(rep.z);
    rep.iterations = iters_;
    // Duals from the final basis under the phase-2 costs.
    Vector cb(m_);
    for (Eigen::Index i = 0; i < m_; ++i) cb[i] = cost_[basis_[i]];
    Vector y = binv_.transpose() * cb;
    rep.duals_ineq = -y.head(mi_);
    rep.duals_eq = -y.tail(me_);
    rep.reduced_costs = Vector(n_struct_);
    for (Eigen::Index j = 0; j < n_struct_; ++j)
      rep.reduced_costs[j] =
          in_basis_[j] ? 0.0 : cost_[j] - y.dot(A_.col(j));
    rep.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
  }

 public:
  std::ofstream* trace_ = nullptr;

 private:
  SolverOptions opts_;
  Eigen::Index n_struct_ = 0, mi_ = 0, me_ = 0, m_ = 0, n_total_ = 0;
  Matrix A_;
  Vector b_, lo_, hi_, cost_, phase1_cost_, x_;
  Matrix binv_;
  std::vector<Eigen::Index> basis_;
  std::vector<bool> in_basis_, at_upper_;
  bool needs_phase1_ = false;
  int phase_ = 1;
  long iters_ = 0;
};

}  // namespace detail

inline SolveReport solve_lp(const LinearProgram& lp,
                            const SolverOptions& opts = {}) {
  lp.validate();
  detail::SimplexSolver solver(lp, opts);
  std::ofstream trace;
  if (!opts.trace_path.empty()) {
    trace.open(opts.trace_path, std::ios::app);
    solver.trace_ = &trace;
  }
  return solver.run();
}

}  // namespace ctxopt
