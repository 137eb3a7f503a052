#pragma once

#include <chrono>
#include <queue>

#include "ctxopt/bilevel.hpp"
#include "ctxopt/ols.hpp"

namespace ctxopt {

/// Generation technology: quadratic cost c(q) = c2 q^2 + c1 q and capacity
/// limits. Offers are quantity-only at price zero.
struct ProducerInstance {
  double c1 = 0.0;
  double c2 = 0.0;
  BoundedInterval bounds;

  void validate() const {
    if (!(c1 > 0.0) || !(c2 > 0.0))
      throw DataError("ProducerInstance: cost coefficients must be positive");
    if (bounds.lo < 0.0)
      throw DataError("ProducerInstance: lower capacity must be >= 0");
  }
};

/// Inverse-demand observation p(q) = alpha - beta q for one period.
struct MarketObservation {
  double alpha = 0.0;
  double beta = 0.0;

  double alpha_prime(const ProducerInstance& inst) const {
    return alpha - inst.c1;
  }
  double beta_prime(const ProducerInstance& inst) const {
    return beta + inst.c2;
  }
};

/// Cost-transformed sample: alpha' = alpha - c1, beta' = beta + c2 > 0,
/// gamma = alpha'/beta'. All producer fitting runs on this form.
struct GammaSample {
  double alpha_p = 0.0;
  double beta_p = 0.0;
  double gamma = 0.0;
};

/// Contexts plus transformed observations. Observations with beta' <= 0
/// are rejected at construction, never silently dropped.
class ProducerData {
 public:
  ProducerData(Matrix X, std::vector<GammaSample> obs)
      : X_(std::move(X)), obs_(std::move(obs)) {
    if (X_.rows() == 0 ||
        X_.rows() != static_cast<Eigen::Index>(obs_.size()))
      throw DataError("ProducerData: empty or mismatched sample count");
    for (const auto& s : obs_)
      if (!(s.beta_p > 0.0) || !std::isfinite(s.gamma))
        throw DataError("ProducerData: requires beta' > 0 and finite gamma");
  }

  /// Raw market dataset (outcomes alpha, beta) under a given technology.
  static ProducerData from_market(const ProducerInstance& inst,
                                  const ContextDataset& raw) {
    inst.validate();
    if (raw.outcome_dim() != 2)
      throw DataError("ProducerData: market dataset needs outcomes (alpha,beta)");
    std::vector<GammaSample> obs(raw.size());
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
      MarketObservation m{raw.outcomes()(i, 0), raw.outcomes()(i, 1)};
      const double bp = m.beta_prime(inst);
      if (!(bp > 0.0))
        throw DataError("ProducerData: observation " + std::to_string(i) +
                        " has beta' <= 0");
      const double ap = m.alpha_prime(inst);
      obs[i] = {ap, bp, ap / bp};
    }
    return ProducerData(raw.features(), std::move(obs));
  }

  /// Already-transformed dataset (outcomes alpha', beta').
  static ProducerData from_transformed(const ContextDataset& data) {
    if (data.outcome_dim() != 2)
      throw DataError("ProducerData: needs outcomes (alpha',beta')");
    std::vector<GammaSample> obs(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const double ap = data.outcomes()(i, 0), bp = data.outcomes()(i, 1);
      if (!(bp > 0.0))
        throw DataError("ProducerData: observation " + std::to_string(i) +
                        " has beta' <= 0");
      obs[i] = {ap, bp, ap / bp};
    }
    return ProducerData(data.features(), std::move(obs));
  }

  Eigen::Index size() const { return X_.rows(); }
  Eigen::Index feature_dim() const { return X_.cols(); }
  const Matrix& contexts() const { return X_; }
  Vector context(Eigen::Index i) const { return X_.row(i).transpose(); }
  const GammaSample& obs(Eigen::Index i) const { return obs_[i]; }
  const std::vector<GammaSample>& observations() const { return obs_; }

  ContextDataset as_dataset() const {
    Matrix Y(size(), 2);
    for (Eigen::Index i = 0; i < size(); ++i) {
      Y(i, 0) = obs_[i].alpha_p;
      Y(i, 1) = obs_[i].beta_p;
    }
    return ContextDataset(X_, Y);
  }

 private:
  Matrix X_;
  std::vector<GammaSample> obs_;
};

/// Per-period income: market revenue minus production cost, in the
/// transformed parameters: -beta' q^2 + alpha' q.
inline double pr_income(double q, const GammaSample& s) {
  return -s.beta_p * q * q + s.alpha_p * q;
}

/// Perfect-information benchmark decision.
inline double pr_decide_bn(const GammaSample& s, const BoundedInterval& b) {
  return b.clamp(0.5 * s.gamma);
}

/// In-sample cost (negative income) of the clipped-gamma policy.
inline double gamma_policy_cost(const Vector& w, const ProducerData& data,
                                const BoundedInterval& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double q = b.clamp(0.5 * w.dot(data.context(i)));
    total -= pr_income(q, data.obs(i));
  }
  return total;
}

// ---------------------------------------------------------------------------
// FO: two independent least-squares fits and candidate-set decisions.

struct FoCoefficients {
  LinearCoefficients w_alpha;
  LinearCoefficients w_beta;
};

inline FoCoefficients pr_fit_fo(const ProducerData& data) {
  const ContextDataset d = data.as_dataset();
  return FoCoefficients{ols_fit(d, 0), ols_fit(d, 1)};
}

/// Minimizes the predicted surrogate (w_b^T x) q^2 - (w_a^T x) q over the
/// bound candidates plus the interior stationary point when the predicted
/// curvature is positive. Enumeration also covers nonconvex predictions
/// (w_b^T x <= 0), where the optimum sits at a bound.
inline double pr_decide_fo(const FoCoefficients& fo, const Vector& x,
                           const BoundedInterval& b) {
  const double ahat = predict_linear(fo.w_alpha, x);
  const double bhat = predict_linear(fo.w_beta, x);
  double best_q = b.lo;
  double best_val = std::numeric_limits<double>::infinity();
  auto consider = [&](double q) {
    const double val = bhat * q * q - ahat * q;
    if (val < best_val - 1e-15) {
      best_val = val;
      best_q = q;
    }
  };
  consider(b.lo);
  consider(b.hi);
  if (bhat > 0.0) consider(b.clamp(0.5 * ahat / bhat));
  return best_q;
}

// ---------------------------------------------------------------------------
// DR: direct linear decision rule, constrained to the box at every
// training context.

struct DrFit {
  LinearCoefficients w_q;
  SolveReport solve;
};

inline DrFit pr_fit_dr(const ProducerData& data, const BoundedInterval& b,
                       const SolverOptions& opts = {}) {
  const Eigen::Index N = data.size(), p = data.feature_dim();
  QuadraticProgram qp;
  qp.Q = Matrix::Zero(p, p);
  qp.c = Vector::Zero(p);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vector x = data.context(i);
    qp.Q += 2.0 * data.obs(i).beta_p * x * x.transpose();
    qp.c -= data.obs(i).alpha_p * x;
  }
  qp.A_ineq = Matrix::Zero(2 * N, p);
  qp.b_ineq = Vector::Zero(2 * N);
  for (Eigen::Index i = 0; i < N; ++i) {
    qp.A_ineq.row(2 * i) = data.context(i).transpose();
    qp.b_ineq[2 * i] = b.hi;
    qp.A_ineq.row(2 * i + 1) = -data.context(i).transpose();
    qp.b_ineq[2 * i + 1] = -b.lo;
  }
  qp.A_eq = Matrix::Zero(0, p);
  qp.b_eq = Vector::Zero(0);
  qp.bounds.assign(p, BoundedInterval(-kInfBound, kInfBound));
  DrFit fit;
  fit.solve = solve_qp(qp, opts);
  if (fit.solve.optimal()) fit.w_q = LinearCoefficients(fit.solve.z);
  return fit;
}

struct DrDecision {
  double raw = 0.0;
  double q = 0.0;     // repaired (clipped) decision
  bool feasible = true;
};

inline DrDecision pr_decide_dr(const LinearCoefficients& w_q, const Vector& x,
                               const BoundedInterval& b) {
  DrDecision d;
  d.raw = predict_linear(w_q, x);
  d.feasible = b.contains(d.raw, 1e-9);
  d.q = b.clamp(d.raw);
  return d;
}

// ---------------------------------------------------------------------------
// BL: the gamma-surrogate bilevel fit.

inline double pr_decide_bl(const LinearCoefficients& w_gamma, const Vector& x,
                           const BoundedInterval& b) {
  return b.clamp(0.5 * predict_linear(w_gamma, x));
}

/// beta'-weighted least squares of gamma on x: the closed-form global
/// optimum of the bilevel fit whenever no decision clips.
inline Vector gamma_weighted_ls(const ProducerData& data) {
  const Eigen::Index p = data.feature_dim();
  Matrix H = Matrix::Zero(p, p);
  Vector g = Vector::Zero(p);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Vector x = data.context(i);
    H += data.obs(i).beta_p * x * x.transpose();
    g += data.obs(i).alpha_p * x;
  }
  return H.completeOrthogonalDecomposition().solve(g);
}

/// Builds the producer bilevel problem for the generic engine: scalar
/// lower level  min_q q^2 - (w^T x_i) q  on [lo, hi], upper objective
/// sum_i beta'_i q_i^2 - alpha'_i q_i.
inline ConvexBilevelProblem producer_bilevel_problem(
    const ProducerData& data, const BoundedInterval& b) {
  ConvexBilevelProblem prob;
  prob.X = data.contexts();
  prob.pred_dim = 1;
  prob.lower.Q = (Matrix(1, 1) << 2.0).finished();
  prob.lower.c0 = Vector::Zero(1);
  prob.lower.C = (Matrix(1, 1) << -1.0).finished();
  prob.lower.G = (Matrix(2, 1) << -1.0, 1.0).finished();
  prob.lower.g0 = (Vector(2) << -b.lo, b.hi).finished();
  prob.lower.Gy = Matrix::Zero(2, 1);
  prob.lower.E = Matrix::Zero(0, 1);
  prob.lower.e0 = Vector::Zero(0);
  prob.lower.Ey = Matrix::Zero(0, 1);
  prob.upper.resize(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    UpperSample& u = prob.upper[i];
    u.P = (Matrix(1, 1) << 2.0 * data.obs(i).beta_p).finished();
    u.r = (Vector(1) << -data.obs(i).alpha_p).finished();
    u.U_ineq = Matrix::Zero(0, 1);
    u.ub = Vector::Zero(0);
  }
  return prob;
}

enum class BlMode { BigM, Regularized };

namespace detail {

// Pattern-restricted convex program in w: assigned regimes contribute
// their cost terms and halfspace/window rows, free samples their
// perfect-information cost. Shared by the branch-and-bound nodes and the
// local pattern-descent polish. Regimes: 0 free, 1 at lo, 2 interior,
// 3 at hi.
inline std::optional<std::pair<Vector, double>> gamma_pattern_qp(
    const ProducerData& data, const BoundedInterval& box,
    const std::vector<char>& regime, const SolverOptions& opts) {
  const Eigen::Index N = data.size(), p = data.feature_dim();
  QuadraticProgram qp;
  qp.Q = Matrix::Zero(p, p);
  qp.c = Vector::Zero(p);
  double constant = 0.0;
  Eigen::Index rows = 0;
  for (Eigen::Index i = 0; i < N; ++i)
    rows += regime[i] == 2 ? 2 : (regime[i] != 0 ? 1 : 0);
  qp.A_ineq = Matrix::Zero(rows, p);
  qp.b_ineq = Vector::Zero(rows);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vector x = data.context(i);
    const auto& s = data.obs(i);
    switch (regime[i]) {
      case 0:
        constant -= pr_income(pr_decide_bn(s, box), s);
        break;
      case 1:  // at lower bound: w^T x <= 2 lo
        constant -= pr_income(box.lo, s);
        qp.A_ineq.row(r) = x.transpose();
        qp.b_ineq[r++] = 2.0 * box.lo;
        break;
      case 3:  // at upper bound: w^T x >= 2 hi
        constant -= pr_income(box.hi, s);
        qp.A_ineq.row(r) = -x.transpose();
        qp.b_ineq[r++] = -2.0 * box.hi;
        break;
      case 2: {  // interior: cost term + window
        qp.Q += 0.5 * s.beta_p * x * x.transpose();
        qp.c -= 0.5 * s.alpha_p * x;
        qp.A_ineq.row(r) = x.transpose();
        qp.b_ineq[r++] = 2.0 * box.hi;
        qp.A_ineq.row(r) = -x.transpose();
        qp.b_ineq[r++] = -2.0 * box.lo;
        break;
      }
    }
  }
  qp.A_eq = Matrix::Zero(0, p);
  qp.b_eq = Vector::Zero(0);
  qp.bounds.assign(p, BoundedInterval(-kInfBound, kInfBound));
  SolveReport s = solve_qp(qp, opts);
  if (!s.optimal()) return std::nullopt;
  return std::make_pair(s.z, s.objective + constant);
}

// Local descent on the clipped-policy cost: read the regimes induced by
// the current w, re-solve the pattern program, repeat until the pattern
// stabilizes or stops improving.
inline Vector gamma_pattern_descent(const ProducerData& data,
                                    const BoundedInterval& box, Vector w,
                                    const SolverOptions& opts) {
  double cur = gamma_policy_cost(w, data, box);
  std::vector<char> last;
  for (int round = 0; round < 50; ++round) {
    std::vector<char> regime(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const double t = w.dot(data.context(i));
      if (t <= 2.0 * box.lo) regime[i] = 1;
      else if (t >= 2.0 * box.hi) regime[i] = 3;
      else regime[i] = 2;
    }
    if (regime == last) break;
    last = regime;
    auto solved = gamma_pattern_qp(data, box, regime, opts);
    if (!solved) break;
    const double val = gamma_policy_cost(solved->first, data, box);
    if (val >= cur - 1e-12 * std::max(1.0, std::abs(cur))) break;
    w = solved->first;
    cur = val;
  }
  return w;
}

}  // namespace detail

struct GammaFitOptions {
  SolverOptions solver;
  double rel_gap = 1e-8;
  double time_cap_s = 1200.0;
  long node_cap = 5000000;
  EpsilonSchedule schedule = EpsilonSchedule::paper_default();
  Vector warm_w;  // optional incumbent seed
};

struct GammaFitReport {
  LinearCoefficients w_gamma;
  SolveStatus status = SolveStatus::IterLimit;
  double objective = std::numeric_limits<double>::quiet_NaN();  // cost = -income
  Vector decisions;
  long nodes = 0;
  double gap = 0.0;
  double wall_time_s = 0.0;
};

namespace detail {

/**
 * Specialized branch-and-bound for the gamma-surrogate producer fit.
 *
 * Each sample's lower level is scalar with box bounds, so a full
 * complementarity pattern assigns every sample a regime in {lo, int, hi}
 * and the node relaxation collapses to a QP in w alone:
 *   interior samples contribute beta' (w x/2)^2 - alpha' (w x/2) plus the
 *   window 2lo <= w^T x <= 2hi; bound samples contribute their constant
 *   cost plus a halfspace on w; unassigned samples contribute their
 *   perfect-information cost. Best-first with lazy child bounds.
 */
class GammaBigMSolver {
 public:
  GammaBigMSolver(const ProducerData& data, const BoundedInterval& b,
                  const GammaFitOptions& opts)
      : data_(data), box_(b), opts_(opts) {
    N_ = data.size();
    p_ = data.feature_dim();
    cbn_.resize(N_);
    clo_.resize(N_);
    chi_.resize(N_);
    total_cbn_ = 0.0;
    for (Eigen::Index i = 0; i < N_; ++i) {
      const auto& s = data.obs(i);
      cbn_[i] = -pr_income(pr_decide_bn(s, b), s);
      clo_[i] = -pr_income(b.lo, s);
      chi_[i] = -pr_income(b.hi, s);
      total_cbn_ += cbn_[i];
    }
  }

  GammaFitReport run() {
    const auto t0 = std::chrono::steady_clock::now();
    GammaFitReport rep;

    double incumbent_val = std::numeric_limits<double>::infinity();
    Vector incumbent_w;
    auto offer = [&](const Vector& w) {
      if (!w.allFinite()) return;
      const double val = gamma_policy_cost(w, data_, box_);
      if (val < incumbent_val) {
        incumbent_val = val;
        incumbent_w = w;
      }
    };
    offer(gamma_weighted_ls(data_));
    if (opts_.warm_w.size() == p_) offer(opts_.warm_w);

    struct Node {
      double bound;
      long id;
      int parent;       // index into pool, -1 for root
      Eigen::Index sample = -1;
      char regime = 0;  // 1=lo 2=int 3=hi
      int depth = 0;
    };
    std::vector<Node> pool;
    auto cmp = [&pool](long a, long b) {
      if (pool[a].bound != pool[b].bound)
        return pool[a].bound > pool[b].bound;
      return a > b;
    };
    std::priority_queue<long, std::vector<long>, decltype(cmp)> open(cmp);
    pool.push_back(Node{total_cbn_, 0, -1});
    open.push(0);

    double global_lb = total_cbn_;
    long nodes = 0;
    bool caps_hit = false;
    std::vector<char> regime(N_);
    std::vector<double> discarded_bounds;
    double min_discarded = std::numeric_limits<double>::infinity();

    while (!open.empty()) {
      const double elapsed = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
      if (elapsed > opts_.time_cap_s || nodes > opts_.node_cap) {
        caps_hit = true;
        break;
      }
      const long idx = open.top();
      open.pop();
      const double gap_abs =
          opts_.rel_gap * std::max(1.0, std::abs(incumbent_val));
      if (pool[idx].bound >= incumbent_val - gap_abs) {
        min_discarded = std::min(min_discarded, pool[idx].bound);
        break;  // best-first: everything left is within gap
      }
      ++nodes;

      // Reconstruct the assignment along the parent chain.
      std::fill(regime.begin(), regime.end(), 0);
      for (int a = static_cast<int>(idx); a >= 0; a = pool[a].parent)
        if (pool[a].sample >= 0) regime[pool[a].sample] = pool[a].regime;

      auto solved = solve_pattern_qp(regime);
      if (!solved) continue;  // infeasible halfspace system: nothing below
      auto [w_star, bound] = *solved;
      if (bound < pool[idx].bound) bound = pool[idx].bound;  // monotone
      offer(w_star);
      const double gap_abs2 =
          opts_.rel_gap * std::max(1.0, std::abs(incumbent_val));
      if (bound >= incumbent_val - gap_abs2) {
        min_discarded = std::min(min_discarded, bound);
        continue;
      }

      // Branch on the free sample with the largest clipped-policy regret.
      Eigen::Index pick = -1;
      double worst = 0.0, regret_sum = 0.0;
      for (Eigen::Index i = 0; i < N_; ++i) {
        if (regime[i] != 0) continue;
        const double q = box_.clamp(0.5 * w_star.dot(data_.context(i)));
        const double reg = -pr_income(q, data_.obs(i)) - cbn_[i];
        regret_sum += reg;
        if (reg > worst + 1e-15) {  // ties resolve to the lowest index
          worst = reg;
          pick = i;
        }
      }
      if (pick < 0 || regret_sum <= gap_abs2) {
        // All free samples already behave: the node value is attained by
        // the incumbent offer above within the gap.
        min_discarded = std::min(min_discarded, bound);
        continue;
      }
      for (char rg : {2, 1, 3}) {
        double delta = 0.0;
        if (rg == 1) delta = clo_[pick] - cbn_[pick];
        else if (rg == 3) delta = chi_[pick] - cbn_[pick];
        Node child;
        child.bound = bound + delta;
        child.parent = static_cast<int>(idx);
        child.sample = pick;
        child.regime = rg;
        child.depth = pool[idx].depth + 1;
        child.id = static_cast<long>(pool.size());
        if (child.bound < incumbent_val - gap_abs2) {
          pool.push_back(child);
          open.push(child.id);
        } else {
          min_discarded = std::min(min_discarded, child.bound);
        }
      }
    }

    if (caps_hit) {
      double open_min = min_discarded;
      while (!open.empty()) {
        open_min = std::min(open_min, pool[open.top()].bound);
        open.pop();
      }
      global_lb = std::min(open_min, incumbent_val);
    } else {
      global_lb = std::min(min_discarded, incumbent_val);
    }

    rep.w_gamma = LinearCoefficients(incumbent_w);
    rep.objective = incumbent_val;
    rep.nodes = nodes;
    rep.gap = std::max(
        0.0, (incumbent_val - global_lb) / std::max(1.0, std::abs(incumbent_val)));
    rep.status = (!caps_hit && rep.gap <= opts_.rel_gap * (1.0 + 1e-9))
                     ? SolveStatus::Optimal
                     : SolveStatus::IterLimit;
    rep.wall_time_s = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    rep.decisions.resize(N_);
    for (Eigen::Index i = 0; i < N_; ++i)
      rep.decisions[i] = box_.clamp(0.5 * incumbent_w.dot(data_.context(i)));
    return rep;
  }

 private:
  std::optional<std::pair<Vector, double>> solve_pattern_qp(
      const std::vector<char>& regime) const {
    return gamma_pattern_qp(data_, box_, regime, opts_.solver);
  }

  const ProducerData& data_;
  BoundedInterval box_;
  GammaFitOptions opts_;
  Eigen::Index N_ = 0, p_ = 0;
  std::vector<double> cbn_, clo_, chi_;
  double total_cbn_ = 0.0;
};

}  // namespace detail

/// BL fit of the gamma surrogate. BigM mode runs the specialized global
/// branch-and-bound; Regularized mode runs the engine's Scholtes schedule
/// on the same problem and is local.
inline GammaFitReport pr_fit_bl(const ProducerData& data,
                                const BoundedInterval& b, BlMode mode,
                                const GammaFitOptions& opts = {}) {
  for (const auto& s : data.observations())
    if (!(s.beta_p > 0.0))
      throw DataError("pr_fit_bl: requires beta' > 0");
  if (mode == BlMode::BigM) {
    detail::GammaBigMSolver solver(data, b, opts);
    return solver.run();
  }
  // Regularized: generic engine on the assembled problem, started from
  // the best of a few natural candidates, then polished by local
  // pattern descent on the clipped-policy cost.
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Vector> starts;
  if (opts.warm_w.size() == data.feature_dim()) starts.push_back(opts.warm_w);
  starts.push_back(gamma_weighted_ls(data));
  try {
    DrFit dr = pr_fit_dr(data, b, opts.solver);
    if (dr.solve.optimal()) starts.push_back(2.0 * dr.w_q.w);
  } catch (const std::exception&) {
  }
  {
    // plain least squares of gamma on the contexts
    Matrix G(data.size(), 1);
    for (Eigen::Index i = 0; i < data.size(); ++i) G(i, 0) = data.obs(i).gamma;
    starts.push_back(ols_fit(ContextDataset(data.contexts(), G), 0).w);
  }
  size_t best_start = 0;
  double best_start_val = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < starts.size(); ++k) {
    const double val = gamma_policy_cost(starts[k], data, b);
    if (val < best_start_val) {
      best_start_val = val;
      best_start = k;
    }
  }

  ConvexBilevelProblem prob = producer_bilevel_problem(data, b);
  BilevelOptions bopts;
  bopts.solver = opts.solver;
  bopts.rel_gap = opts.rel_gap;
  bopts.time_cap_s = opts.time_cap_s;
  Matrix start(1, data.feature_dim());
  start.row(0) = starts[best_start].transpose();
  BilevelReport br = solve_bl_regularized(prob, opts.schedule, start, bopts);

  Vector best_w = starts[best_start];
  double best_val = best_start_val;
  std::vector<Vector> candidates;
  if (br.W.size() > 0) candidates.push_back(br.W.row(0).transpose());
  candidates.push_back(
      detail::gamma_pattern_descent(data, b, starts[best_start], opts.solver));
  if (br.W.size() > 0)
    candidates.push_back(detail::gamma_pattern_descent(
        data, b, br.W.row(0).transpose(), opts.solver));
  for (const Vector& w : candidates) {
    const double val = gamma_policy_cost(w, data, b);
    if (val < best_val) {
      best_val = val;
      best_w = w;
    }
  }

  GammaFitReport rep;
  rep.status = br.solve.status;
  rep.w_gamma = LinearCoefficients(best_w);
  rep.objective = best_val;
  rep.decisions.resize(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i)
    rep.decisions[i] = b.clamp(0.5 * best_w.dot(data.context(i)));
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

}  // namespace ctxopt
