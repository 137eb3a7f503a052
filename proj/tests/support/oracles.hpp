// Test-only reference oracles, deliberately independent of the library's
// solve paths: brute-force enumeration and first-order methods only.
#pragma once

#include <limits>
#include <random>
#include <vector>

#include "ctxopt/lp.hpp"
#include "ctxopt/qp.hpp"

namespace ctxopt::testkit {

// Enumerates basic points: every n-subset of {ineq rows, finite bound rows}
// stacked under the equality rows, solved as a square system and filtered
// for feasibility. Returns the best objective (+inf if nothing feasible).
inline double lp_vertex_enumeration(const LinearProgram& lp,
                                    double feas_tol = 1e-9) {
  const Eigen::Index n = lp.num_vars();
  struct Row {
    Eigen::RowVectorXd a;
    double b;
  };
  std::vector<Row> pool;
  for (Eigen::Index i = 0; i < lp.A_ineq.rows(); ++i)
    pool.push_back({lp.A_ineq.row(i), lp.b_ineq[i]});
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
    e[j] = 1.0;
    if (lp.bounds[j].hi < kInfBoundThreshold)
      pool.push_back({e, lp.bounds[j].hi});
    if (lp.bounds[j].lo > -kInfBoundThreshold)
      pool.push_back({-e, -lp.bounds[j].lo});
  }
  const Eigen::Index me = lp.A_eq.rows();
  const Eigen::Index need = n - std::min<Eigen::Index>(me, n);

  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick;
  auto feasible = [&](const Vector& x) {
    for (Eigen::Index i = 0; i < lp.A_ineq.rows(); ++i)
      if (lp.A_ineq.row(i).dot(x) > lp.b_ineq[i] + feas_tol) return false;
    for (Eigen::Index i = 0; i < lp.A_eq.rows(); ++i)
      if (std::abs(lp.A_eq.row(i).dot(x) - lp.b_eq[i]) > feas_tol)
        return false;
    for (Eigen::Index j = 0; j < n; ++j)
      if (x[j] < lp.bounds[j].lo - feas_tol ||
          x[j] > lp.bounds[j].hi + feas_tol)
        return false;
    return true;
  };
  auto try_subset = [&]() {
    Matrix A(me + pick.size(), n);
    Vector b(me + pick.size());
    for (Eigen::Index i = 0; i < me; ++i) {
      A.row(i) = lp.A_eq.row(i);
      b[i] = lp.b_eq[i];
    }
    for (size_t k = 0; k < pick.size(); ++k) {
      A.row(me + k) = pool[pick[k]].a;
      b[me + k] = pool[pick[k]].b;
    }
    Eigen::FullPivLU<Matrix> lu(A);
    if (lu.rank() < n) return;
    Vector x = A.colPivHouseholderQr().solve(b);
    if ((A * x - b).cwiseAbs().maxCoeff() > 1e-8) return;
    if (feasible(x)) best = std::min(best, lp.c.dot(x));
  };
  std::function<void(size_t, Eigen::Index)> rec = [&](size_t start,
                                                      Eigen::Index left) {
    if (left == 0) {
      try_subset();
      return;
    }
    for (size_t i = start; i + left <= pool.size() + 0; ++i) {
      if (i >= pool.size()) return;
      pick.push_back(static_cast<int>(i));
      rec(i + 1, left - 1);
      pick.pop_back();
    }
  };
  rec(0, need);
  return best;
}

// Exhaustive 3^N enumeration of lower-level active-set patterns for the
// scalar producer fit: every sample is forced to {lower, interior, upper},
// each pattern becomes one convex QP in w, and the best feasible value
// wins. Exact global reference for small N.
struct PatternEnumerationResult {
  double objective = std::numeric_limits<double>::infinity();
  Vector w;
};

inline PatternEnumerationResult producer_pattern_enumeration(
    const Matrix& X, const std::vector<double>& alpha_p,
    const std::vector<double>& beta_p, const BoundedInterval& box) {
  const Eigen::Index N = X.rows(), p = X.cols();
  PatternEnumerationResult best;
  std::vector<int> pat(N, 0);
  long total = 1;
  for (Eigen::Index i = 0; i < N; ++i) total *= 3;
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (Eigen::Index i = 0; i < N; ++i) {
      pat[i] = static_cast<int>(c % 3);  // 0=lower, 1=interior, 2=upper
      c /= 3;
    }
    QuadraticProgram qp;
    qp.Q = Matrix::Zero(p, p);
    qp.c = Vector::Zero(p);
    double constant = 0.0;
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    for (Eigen::Index i = 0; i < N; ++i) {
      const Eigen::RowVectorXd x = X.row(i);
      const double cost_lo = beta_p[i] * box.lo * box.lo - alpha_p[i] * box.lo;
      const double cost_hi = beta_p[i] * box.hi * box.hi - alpha_p[i] * box.hi;
      if (pat[i] == 0) {
        constant += cost_lo;
        rows.push_back(x);
        rhs.push_back(2.0 * box.lo);
      } else if (pat[i] == 2) {
        constant += cost_hi;
        rows.push_back(-x);
        rhs.push_back(-2.0 * box.hi);
      } else {
        qp.Q += 0.5 * beta_p[i] * x.transpose() * x;
        qp.c -= 0.5 * alpha_p[i] * x.transpose();
        rows.push_back(x);
        rhs.push_back(2.0 * box.hi);
        rows.push_back(-x);
        rhs.push_back(-2.0 * box.lo);
      }
    }
    qp.A_ineq = Matrix::Zero(rows.size(), p);
    qp.b_ineq = Vector::Zero(rows.size());
    for (size_t k = 0; k < rows.size(); ++k) {
      qp.A_ineq.row(k) = rows[k];
      qp.b_ineq[k] = rhs[k];
    }
    qp.A_eq = Matrix::Zero(0, p);
    qp.b_eq = Vector::Zero(0);
    qp.bounds.assign(p, BoundedInterval(-kInfBound, kInfBound));
    SolveReport r = solve_qp(qp);
    if (!r.optimal()) continue;
    if (r.objective + constant < best.objective) {
      best.objective = r.objective + constant;
      best.w = r.z;
    }
  }
  return best;
}

// Brute-force newsvendor policy cost over candidate constant orders: the
// in-sample optimum of an intercept-only rule lies at a demand point (or
// zero). Returns the minimal empirical cost.
inline double newsvendor_enumeration_cost(double d, double r,
                                          const std::vector<double>& y) {
  std::vector<double> candidates = y;
  candidates.push_back(0.0);
  double best = std::numeric_limits<double>::infinity();
  for (double z : candidates) {
    double cost = 0.0;
    for (double yi : y) cost += d * z - r * std::min(z, yi);
    best = std::min(best, cost);
  }
  return best;
}

// Exhaustive complementarity-pattern enumeration for the placement bilevel
// fit on a small graph: each (sample, pair) is forced to one side of its
// complementarity, the resulting LP is solved, and the best feasible value
// wins. Pairs per sample: B placement pairs (z_b = 0 vs alpha_b = h_b),
// A flow pairs (f_l = 0 vs g_l + (A^T alpha)_l = 0), B balance pairs
// (balance tight vs alpha_b = 0). Placement/balance combos fixing
// alpha_b = h_b and alpha_b = 0 simultaneously are contradictory and
// skipped, leaving 3^(B N) * 2^(A N) LPs.
inline double placement_pattern_enumeration(
    const Vector& h, const Vector& g_upper, const Vector& g_lower,
    const Vector& r_pen, const Matrix& Amat, const Matrix& X,
    const Matrix& Y) {
  const Eigen::Index B = h.size(), A = g_lower.size();
  const Eigen::Index N = X.rows(), p = X.cols();
  const Eigen::Index wdim = B * p;
  const Eigen::Index per = B + A + B + A + B;  // z, f, alpha, fhat, phat
  const Eigen::Index nvars = wdim + N * per;
  auto zi = [&](Eigen::Index i, Eigen::Index b) { return wdim + i * per + b; };
  auto fi = [&](Eigen::Index i, Eigen::Index l) {
    return wdim + i * per + B + l;
  };
  auto ai = [&](Eigen::Index i, Eigen::Index b) {
    return wdim + i * per + B + A + b;
  };
  auto fh = [&](Eigen::Index i, Eigen::Index l) {
    return wdim + i * per + 2 * B + A + l;
  };
  auto ph = [&](Eigen::Index i, Eigen::Index b) {
    return wdim + i * per + 2 * B + 2 * A + b;
  };

  // Static parts shared by every pattern.
  LinearProgram base;
  base.c = Vector::Zero(nvars);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index b = 0; b < B; ++b) base.c[zi(i, b)] = h[b];
    for (Eigen::Index l = 0; l < A; ++l) base.c[fh(i, l)] = g_upper[l];
    for (Eigen::Index b = 0; b < B; ++b) base.c[ph(i, b)] = r_pen[b];
  }
  std::vector<Eigen::RowVectorXd> irows;
  std::vector<double> irhs;
  auto add_row = [&](const Eigen::RowVectorXd& row, double rhs) {
    irows.push_back(row);
    irhs.push_back(rhs);
  };
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index b = 0; b < B; ++b) {
      // Upper recourse: (A fhat)_b - phat_b - z_b <= -y_b.
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nvars);
      for (Eigen::Index l = 0; l < A; ++l) row[fh(i, l)] = Amat(b, l);
      row[ph(i, b)] = -1.0;
      row[zi(i, b)] = -1.0;
      add_row(row, -Y(i, b));
      // Lower balance: (A f)_b - z_b + (W x_i)_b <= 0.
      Eigen::RowVectorXd row2 = Eigen::RowVectorXd::Zero(nvars);
      for (Eigen::Index l = 0; l < A; ++l) row2[fi(i, l)] = Amat(b, l);
      row2[zi(i, b)] = -1.0;
      for (Eigen::Index j = 0; j < p; ++j) row2[b * p + j] = X(i, j);
      add_row(row2, 0.0);
      // Dual feasibility: alpha_b <= h_b.
      Eigen::RowVectorXd row3 = Eigen::RowVectorXd::Zero(nvars);
      row3[ai(i, b)] = 1.0;
      add_row(row3, h[b]);
    }
    for (Eigen::Index l = 0; l < A; ++l) {
      // Dual feasibility: -(A^T alpha)_l <= g_l.
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nvars);
      for (Eigen::Index b = 0; b < B; ++b) row[ai(i, b)] = -Amat(b, l);
      add_row(row, g_lower[l]);
    }
  }

  double best = std::numeric_limits<double>::infinity();
  const long z_codes = static_cast<long>(std::pow(3.0, double(B * N)));
  const long f_codes = 1L << (A * N);
  for (long zc = 0; zc < z_codes; ++zc) {
    for (long fc = 0; fc < f_codes; ++fc) {
      std::vector<Eigen::RowVectorXd> erows;
      std::vector<double> erhs;
      auto fix_var = [&](Eigen::Index var, double val) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nvars);
        row[var] = 1.0;
        erows.push_back(row);
        erhs.push_back(val);
      };
      long c = zc;
      for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index b = 0; b < B; ++b) {
          const int mode = static_cast<int>(c % 3);
          c /= 3;
          if (mode == 0) {
            fix_var(zi(i, b), 0.0);   // z_b = 0 ...
            fix_var(ai(i, b), 0.0);   // ... and alpha_b = 0 (slack balance ok)
          } else if (mode == 1) {
            fix_var(zi(i, b), 0.0);
            // balance tight: (A f)_b - z_b + (W x)_b = 0
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nvars);
            for (Eigen::Index l = 0; l < A; ++l) row[fi(i, l)] = Amat(b, l);
            row[zi(i, b)] = -1.0;
            for (Eigen::Index j = 0; j < p; ++j) row[b * p + j] = X(i, j);
            erows.push_back(row);
            erhs.push_back(0.0);
          } else {
            fix_var(ai(i, b), h[b]);  // z_b free: dual at its cap ...
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nvars);
            for (Eigen::Index l = 0; l < A; ++l) row[fi(i, l)] = Amat(b, l);
            row[zi(i, b)] = -1.0;
            for (Eigen::Index j = 0; j < p; ++j) row[b * p + j] = X(i, j);
            erows.push_back(row);
            erhs.push_back(0.0);      // ... and balance tight
          }
        }
      }
      long cf = fc;
      for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index l = 0; l < A; ++l) {
          const int mode = static_cast<int>(cf % 2);
          cf /= 2;
          if (mode == 0) {
            fix_var(fi(i, l), 0.0);
          } else {
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nvars);
            for (Eigen::Index b = 0; b < B; ++b) row[ai(i, b)] = Amat(b, l);
            erows.push_back(row);
            erhs.push_back(-g_lower[l]);  // (A^T alpha)_l = -g_l
          }
        }
      }

      LinearProgram lp = base;
      lp.A_ineq = Matrix::Zero(irows.size(), nvars);
      lp.b_ineq = Vector::Zero(irows.size());
      for (size_t k = 0; k < irows.size(); ++k) {
        lp.A_ineq.row(k) = irows[k];
        lp.b_ineq[k] = irhs[k];
      }
      lp.A_eq = Matrix::Zero(erows.size(), nvars);
      lp.b_eq = Vector::Zero(erows.size());
      for (size_t k = 0; k < erows.size(); ++k) {
        lp.A_eq.row(k) = erows[k];
        lp.b_eq[k] = erhs[k];
      }
      lp.bounds.assign(nvars, BoundedInterval(0.0, kInfBound));
      for (Eigen::Index k = 0; k < wdim; ++k)
        lp.bounds[k] = BoundedInterval(-kInfBound, kInfBound);
      SolveReport r = solve_lp(lp);
      if (r.status == SolveStatus::Optimal) best = std::min(best, r.objective);
    }
  }
  return best;
}

// Accelerated projected gradient on a box-constrained PSD QP, run to
// convergence; used as the reference optimum value.
inline double qp_projected_gradient(const QuadraticProgram& qp,
                                    long iters = 300000) {
  const Eigen::Index n = qp.num_vars();
  Eigen::SelfAdjointEigenSolver<Matrix> es(qp.Q, Eigen::EigenvaluesOnly);
  const double L = std::max(es.eigenvalues().maxCoeff(), 1e-8);
  const double step = 1.0 / L;
  auto project = [&](Vector x) {
    for (Eigen::Index j = 0; j < n; ++j) x[j] = qp.bounds[j].clamp(x[j]);
    return x;
  };
  Vector x = project(Vector::Zero(n));
  Vector y = x;
  double tprev = 1.0;
  for (long k = 0; k < iters; ++k) {
    Vector xn = project(y - step * (qp.Q * y + qp.c));
    const double t = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tprev * tprev));
    y = xn + ((tprev - 1.0) / t) * (xn - x);
    if ((xn - x).cwiseAbs().maxCoeff() < 1e-14) {
      x = xn;
      break;
    }
    x = xn;
    tprev = t;
  }
  return 0.5 * x.dot(qp.Q * x) + qp.c.dot(x);
}

}  // namespace ctxopt::testkit
