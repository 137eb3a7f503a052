#pragma once

#include <fstream>

#include "ctxopt/bilevel.hpp"
#include "ctxopt/ols.hpp"

namespace ctxopt {

/// Distribution graph: nodes hold placed product, arcs ship it.
struct Network {
  struct Arc {
    int origin = 0;
    int end = 0;
  };
  Eigen::Index num_nodes = 0;
  std::vector<Arc> arcs;

  Eigen::Index num_arcs() const {
    return static_cast<Eigen::Index>(arcs.size());
  }

  /// Node-arc incidence: +1 at the origin, -1 at the end; columns sum to 0.
  Matrix incidence() const {
    Matrix A = Matrix::Zero(num_nodes, num_arcs());
    for (Eigen::Index l = 0; l < num_arcs(); ++l) {
      A(arcs[l].origin, l) += 1.0;
      A(arcs[l].end, l) -= 1.0;
    }
    return A;
  }

  void validate() const {
    if (num_nodes <= 0) throw DataError("Network: needs at least one node");
    for (const auto& a : arcs) {
      if (a.origin == a.end) throw DataError("Network: self-loop arc");
      if (a.origin < 0 || a.end < 0 || a.origin >= num_nodes ||
          a.end >= num_nodes)
        throw DataError("Network: arc endpoint out of range");
    }
  }
};

/// Placement costs h, shipping costs g and unmet-demand penalties r_pen,
/// with the simplifying assumption r_pen > h > 0 componentwise.
struct PlacementInstance {
  Vector h;
  Vector g;
  Vector r_pen;

  void validate(const Network& net) const {
    if (h.size() != net.num_nodes || r_pen.size() != net.num_nodes)
      throw DataError("PlacementInstance: node cost size mismatch");
    if (g.size() != net.num_arcs())
      throw DataError("PlacementInstance: arc cost size mismatch");
    for (Eigen::Index b = 0; b < h.size(); ++b)
      if (!(r_pen[b] > h[b] && h[b] > 0.0))
        throw DataError("PlacementInstance: requires r_pen > h > 0");
    for (Eigen::Index l = 0; l < g.size(); ++l)
      if (!(g[l] > 0.0))
        throw DataError("PlacementInstance: shipping costs must be positive");
  }
};

struct PlacementPolicy {
  Matrix W;  // |B| x p, one coefficient row per node
};

struct RecourseResult {
  double cost = 0.0;  // h^T z plus optimal shipping/penalty cost
  Vector flows;
  Vector penalties;
};

/// Two-stage cost of holding z against realized demand y: ship along arcs
/// or pay the unmet-demand penalty. Always feasible (penalties absorb any
/// deficit).
inline RecourseResult pl_recourse_cost(const PlacementInstance& inst,
                                       const Network& net, const Vector& z,
                                       const Vector& y,
                                       const SolverOptions& opts = {}) {
  net.validate();
  inst.validate(net);
  const Eigen::Index B = net.num_nodes, A = net.num_arcs();
  if (z.size() != B || y.size() != B)
    throw DataError("pl_recourse_cost: dimension mismatch");
  if (z.minCoeff() < 0.0)
    throw DataError("pl_recourse_cost: placements must be nonnegative");
  LinearProgram lp;
  lp.c = Vector(A + B);
  lp.c.head(A) = inst.g;
  lp.c.tail(B) = inst.r_pen;
  lp.A_ineq = Matrix::Zero(B, A + B);
  lp.A_ineq.leftCols(A) = net.incidence();
  lp.A_ineq.rightCols(B) = -Matrix::Identity(B, B);
  lp.b_ineq = z - y;
  lp.A_eq = Matrix::Zero(0, A + B);
  lp.b_eq = Vector::Zero(0);
  lp.bounds.assign(A + B, BoundedInterval(0.0, kInfBound));
  SolveReport r = solve_lp(lp, opts);
  if (!r.optimal())
    throw SolveError("pl_recourse_cost: recourse LP failed");
  RecourseResult res;
  res.flows = r.z.head(A);
  res.penalties = r.z.tail(B);
  res.cost = inst.h.dot(z) + r.objective;
  return res;
}

/// The surrogate placement for a demand prediction: penalties drop out
/// under r_pen > h, leaving min h^T z + g^T f s.t. A f <= z - yhat.
inline Vector pl_surrogate_decide(const PlacementInstance& inst,
                                  const Network& net, const Vector& yhat,
                                  const SolverOptions& opts = {}) {
  const Eigen::Index B = net.num_nodes, A = net.num_arcs();
  LinearProgram lp;
  lp.c = Vector(B + A);
  lp.c.head(B) = inst.h;
  lp.c.tail(A) = inst.g;
  lp.A_ineq = Matrix::Zero(B, B + A);
  lp.A_ineq.leftCols(B) = -Matrix::Identity(B, B);
  lp.A_ineq.rightCols(A) = net.incidence();
  lp.b_ineq = -yhat;
  lp.A_eq = Matrix::Zero(0, B + A);
  lp.b_eq = Vector::Zero(0);
  lp.bounds.assign(B + A, BoundedInterval(0.0, kInfBound));
  SolveReport r = solve_lp(lp, opts);
  if (!r.optimal())
    throw SolveError("pl_surrogate_decide: surrogate LP failed");
  return r.z.head(B);
}

inline PlacementPolicy pl_fit_fo(const PlacementInstance&, const Network& net,
                                 const ContextDataset& data) {
  if (data.outcome_dim() != net.num_nodes)
    throw DataError("pl_fit_fo: outcome dim must equal node count");
  PlacementPolicy pol;
  pol.W = Matrix(net.num_nodes, data.feature_dim());
  for (Eigen::Index b = 0; b < net.num_nodes; ++b)
    pol.W.row(b) = ols_fit(data, b).w.transpose();
  return pol;
}

struct PlacementDrFit {
  PlacementPolicy policy;
  SolveReport solve;
  double objective = std::numeric_limits<double>::quiet_NaN();
};

/// Decision rule z_i = W x_i fit by one LP over (W, recourse), with
/// feasibility W x_i >= 0 enforced at every training context.
inline PlacementDrFit pl_fit_dr(const PlacementInstance& inst,
                                const Network& net, const ContextDataset& data,
                                const SolverOptions& opts = {}) {
  net.validate();
  inst.validate(net);
  const Eigen::Index B = net.num_nodes, A = net.num_arcs();
  const Eigen::Index p = data.feature_dim(), N = data.size();
  const Eigen::Index wdim = B * p;
  const Eigen::Index nvars = wdim + N * (A + B);
  auto windex = [&](Eigen::Index b, Eigen::Index j) { return b * p + j; };
  auto findex = [&](Eigen::Index i, Eigen::Index l) {
    return wdim + i * (A + B) + l;
  };
  auto pindex = [&](Eigen::Index i, Eigen::Index b) {
    return wdim + i * (A + B) + A + b;
  };

  LinearProgram lp;
  lp.c = Vector::Zero(nvars);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vector x = data.context(i);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index j = 0; j < p; ++j)
        lp.c[windex(b, j)] += inst.h[b] * x[j];
    for (Eigen::Index l = 0; l < A; ++l) lp.c[findex(i, l)] = inst.g[l];
    for (Eigen::Index b = 0; b < B; ++b) lp.c[pindex(i, b)] = inst.r_pen[b];
  }
  const Matrix Amat = net.incidence();
  // Rows: per sample, B recourse rows (A f - Wx - p <= -y) then B rows
  // -Wx <= 0.
  lp.A_ineq = Matrix::Zero(N * 2 * B, nvars);
  lp.b_ineq = Vector::Zero(N * 2 * B);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vector x = data.context(i);
    for (Eigen::Index b = 0; b < B; ++b) {
      const Eigen::Index row = i * 2 * B + b;
      for (Eigen::Index l = 0; l < A; ++l)
        lp.A_ineq(row, findex(i, l)) = Amat(b, l);
      lp.A_ineq(row, pindex(i, b)) = -1.0;
      for (Eigen::Index j = 0; j < p; ++j)
        lp.A_ineq(row, windex(b, j)) = -x[j];
      lp.b_ineq[row] = -data.outcomes()(i, b);
      const Eigen::Index row2 = i * 2 * B + B + b;
      for (Eigen::Index j = 0; j < p; ++j)
        lp.A_ineq(row2, windex(b, j)) = -x[j];
      lp.b_ineq[row2] = 0.0;  // W x_i >= 0
    }
  }
  lp.A_eq = Matrix::Zero(0, nvars);
  lp.b_eq = Vector::Zero(0);
  lp.bounds.assign(nvars, BoundedInterval(0.0, kInfBound));
  for (Eigen::Index k = 0; k < wdim; ++k)
    lp.bounds[k] = BoundedInterval(-kInfBound, kInfBound);

  PlacementDrFit fit;
  fit.solve = solve_lp(lp, opts);
  if (!fit.solve.optimal())
    throw SolveError(std::string("pl_fit_dr: LP failed: ") +
                     to_string(fit.solve.status));
  fit.policy.W = Matrix(B, p);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index j = 0; j < p; ++j)
      fit.policy.W(b, j) = fit.solve.z[windex(b, j)];
  fit.objective = fit.solve.objective;
  return fit;
}

/// Assembles the placement bilevel problem for the engine. Shipping costs
/// in the lower level get distinct tiny offsets (<= 1e-7 * min g) so every
/// route cost is unique and the lower optimum is single-valued.
struct PlacementBilevel {
  ConvexBilevelProblem problem;
  Vector perturbed_g;
};

inline PlacementBilevel placement_bilevel_problem(const PlacementInstance& inst,
                                                  const Network& net,
                                                  const ContextDataset& data) {
  net.validate();
  inst.validate(net);
  const Eigen::Index B = net.num_nodes, A = net.num_arcs();
  const Matrix Amat = net.incidence();
  Vector gtilde = inst.g;
  if (A > 0) {
    const double scale = 1e-7 * inst.g.minCoeff();
    for (Eigen::Index l = 0; l < A; ++l)
      gtilde[l] += scale * static_cast<double>(l + 1) / static_cast<double>(A);
  }

  ConvexBilevelProblem prob;
  prob.X = data.features();
  prob.pred_dim = B;
  const Eigen::Index nz = B + A;  // lower variables: (z, f)
  prob.lower.Q = Matrix::Zero(nz, nz);
  prob.lower.c0 = Vector(nz);
  prob.lower.c0.head(B) = inst.h;
  prob.lower.c0.tail(A) = gtilde;
  prob.lower.C = Matrix::Zero(nz, B);
  // Rows: B balance (A f - z <= -yhat), B z-nonnegativity, A f-nonnegativity.
  prob.lower.G = Matrix::Zero(2 * B + A, nz);
  prob.lower.g0 = Vector::Zero(2 * B + A);
  prob.lower.Gy = Matrix::Zero(2 * B + A, B);
  prob.lower.G.block(0, 0, B, B) = -Matrix::Identity(B, B);
  prob.lower.G.block(0, B, B, A) = Amat;
  prob.lower.Gy.block(0, 0, B, B) = -Matrix::Identity(B, B);
  prob.lower.G.block(B, 0, B, B) = -Matrix::Identity(B, B);
  prob.lower.G.block(2 * B, B, A, A) = -Matrix::Identity(A, A);
  prob.lower.E = Matrix::Zero(0, nz);
  prob.lower.e0 = Vector::Zero(0);
  prob.lower.Ey = Matrix::Zero(0, B);

  prob.upper.resize(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    UpperSample& u = prob.upper[i];
    const Eigen::Index nu = A + B;  // upper recourse: (fhat, phat)
    u.P = Matrix::Zero(nz + nu, nz + nu);
    u.r = Vector::Zero(nz + nu);
    u.r.head(B) = inst.h;           // cost of the placed decision
    u.r.segment(nz, A) = inst.g;    // true-demand shipping
    u.r.tail(B) = inst.r_pen;       // unmet demand
    u.U_ineq = Matrix::Zero(B, nz + nu);
    u.U_ineq.block(0, 0, B, B) = -Matrix::Identity(B, B);
    u.U_ineq.block(0, nz, B, A) = Amat;
    u.U_ineq.block(0, nz + A, B, B) = -Matrix::Identity(B, B);
    u.ub = -data.outcomes().row(i).transpose();
    u.u_bounds.assign(nu, BoundedInterval(0.0, kInfBound));
  }
  return PlacementBilevel{std::move(prob), std::move(gtilde)};
}

struct PlacementBlFit {
  PlacementPolicy policy;
  SolveReport solve;
  double objective = std::numeric_limits<double>::quiet_NaN();
  bool degenerate_lower = false;
  Vector perturbed_g;
  Matrix decisions;  // N x |B| fitted placements
};

struct PlacementBlOptions {
  BilevelOptions engine;
  double pred_range_scale = 10.0;  // prediction box: +/- scale * max|y|
};

/// BL fit through the engine's big-M branch-and-bound, warm-started from a
/// DR fit when available (every DR-feasible rule is BL-feasible). Flags
/// alternative lower-level optima detected at the fitted policy.
inline PlacementBlFit pl_fit_bl(const PlacementInstance& inst,
                                const Network& net, const ContextDataset& data,
                                PlacementBlOptions opts = {}) {
  auto built = placement_bilevel_problem(inst, net, data);
  const Eigen::Index B = net.num_nodes, A = net.num_arcs();
  const double yscale =
      std::max(1.0, data.outcomes().cwiseAbs().maxCoeff());
  const double R = opts.pred_range_scale * yscale;
  std::vector<BoundedInterval> pred_range(B, BoundedInterval(-R, R));
  std::vector<BoundedInterval> z_range(B + A, BoundedInterval(0.0, 2.0 * R));
  BigMConfig mcfg = derive_big_m(built.problem, pred_range, z_range);

  if (opts.engine.warm_W.size() == 0) {
    try {
      opts.engine.warm_W = pl_fit_dr(inst, net, data).policy.W;
    } catch (const SolveError&) {
      // fall through: engine still solves from scratch
    }
  }
  BilevelReport rep = solve_bl_bigm(built.problem, mcfg, opts.engine);
  if (rep.solve.status == SolveStatus::Infeasible)
    throw SolveError("pl_fit_bl: engine reported infeasible");

  PlacementBlFit fit;
  fit.policy.W = rep.W;
  fit.solve = rep.solve;
  fit.objective = rep.objective;
  fit.perturbed_g = built.perturbed_g;
  fit.decisions = rep.decisions.leftCols(B);

  // Degeneracy audit: re-solve each lower level under two different tiny
  // perturbations of the shipping costs; a change in the optimal point
  // means the unperturbed lower level has alternative optima.
  auto lower_solution = [&](const Vector& yhat, const Vector& gship) {
    LinearProgram lo;
    lo.c = Vector(B + A);
    lo.c.head(B) = inst.h;
    lo.c.tail(A) = gship;
    lo.A_ineq = Matrix::Zero(B, B + A);
    lo.A_ineq.leftCols(B) = -Matrix::Identity(B, B);
    lo.A_ineq.rightCols(A) = net.incidence();
    lo.b_ineq = -yhat;
    lo.A_eq = Matrix::Zero(0, B + A);
    lo.b_eq = Vector::Zero(0);
    lo.bounds.assign(B + A, BoundedInterval(0.0, kInfBound));
    return solve_lp(lo);
  };
  Vector g_alt = inst.g;
  if (A > 0) {
    const double scale = 1e-7 * inst.g.minCoeff();
    for (Eigen::Index l = 0; l < A; ++l)
      g_alt[l] += scale * static_cast<double>(A - l) / static_cast<double>(A);
  }
  const double ztol = 1e-6 * std::max(1.0, yscale);
  for (Eigen::Index i = 0; i < data.size() && !fit.degenerate_lower; ++i) {
    const Vector yhat = rep.W * data.context(i);
    SolveReport a = lower_solution(yhat, built.perturbed_g);
    SolveReport b = lower_solution(yhat, g_alt);
    if (a.optimal() && b.optimal() &&
        (a.z - b.z).cwiseAbs().maxCoeff() > ztol)
      fit.degenerate_lower = true;
  }
  return fit;
}

/// Realized cost of a policy on a dataset: decisions through the surrogate
/// (BL/FO) or the raw linear rule (DR), then the true-demand recourse.
inline double pl_policy_cost(const PlacementInstance& inst, const Network& net,
                             const PlacementPolicy& pol,
                             const ContextDataset& data,
                             bool through_surrogate = true) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Vector yhat = pol.W * data.context(i);
    Vector z = through_surrogate ? pl_surrogate_decide(inst, net, yhat)
                                 : yhat.cwiseMax(0.0);
    total += pl_recourse_cost(inst, net, z, data.outcome(i)).cost;
  }
  return total;
}

// ---------------------------------------------------------------------------
// File formats: arc list CSV `origin,end,g`; node file CSV `node,h,r_pen`.

inline std::pair<Network, PlacementInstance> read_network_csv(
    const std::string& arcs_path, const std::string& nodes_path) {
  std::ifstream nodes(nodes_path);
  if (!nodes) throw DataError("read_network_csv: cannot open " + nodes_path);
  std::string line;
  std::getline(nodes, line);  // header
  std::vector<double> h, rp;
  while (std::getline(nodes, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 3) throw DataError("node file: expected node,h,r_pen");
    const size_t idx = std::stoul(f[0]);
    if (idx != h.size()) throw DataError("node file: ids must be 0,1,2,...");
    h.push_back(std::stod(f[1]));
    rp.push_back(std::stod(f[2]));
  }
  Network net;
  net.num_nodes = static_cast<Eigen::Index>(h.size());
  std::vector<double> g;
  std::ifstream arcs(arcs_path);
  if (!arcs) throw DataError("read_network_csv: cannot open " + arcs_path);
  std::getline(arcs, line);  // header
  while (std::getline(arcs, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 3) throw DataError("arc file: expected origin,end,g");
    net.arcs.push_back({std::stoi(f[0]), std::stoi(f[1])});
    g.push_back(std::stod(f[2]));
  }
  PlacementInstance inst;
  inst.h = Eigen::Map<Vector>(h.data(), h.size());
  inst.r_pen = Eigen::Map<Vector>(rp.data(), rp.size());
  inst.g = Eigen::Map<Vector>(g.data(), g.size());
  net.validate();
  inst.validate(net);
  return {net, inst};
}

}  // namespace ctxopt
