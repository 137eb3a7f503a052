#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ctxopt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when input data violates a documented precondition
/// (dimension mismatches, empty datasets, invalid configuration).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a fit or solve cannot produce a usable result
/// (infeasible estimation problem, rejected curve fit, solver breakdown).
class SolveError : public std::runtime_error {
 public:
  explicit SolveError(const std::string& what) : std::runtime_error(what) {}
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterLimit };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::IterLimit: return "IterLimit";
  }
  return "Unknown";
}

/// Bounds treated as infinite beyond this magnitude. Callers model
/// unbounded decisions with wide sentinel intervals; the kernels skip
/// ratio tests against anything at or past the threshold.
inline constexpr double kInfBound = 1e15;
inline constexpr double kInfBoundThreshold = 1e14;

struct BoundedInterval {
  double lo = 0.0;
  double hi = 0.0;

  BoundedInterval() = default;
  BoundedInterval(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
      throw DataError("BoundedInterval: requires finite lo <= hi");
  }

  double width() const { return hi - lo; }
  double clamp(double v) const { return std::min(std::max(v, lo), hi); }
  bool contains(double v, double tol = 0.0) const {
    return v >= lo - tol && v <= hi + tol;
  }
  static BoundedInterval wide(double scale) {
    double s = std::max(1.0, std::abs(scale)) * 10.0;
    return BoundedInterval(-s, s);
  }
};

/// Shared solver tolerances. Defaults are uniform across the repo:
/// feasibility 1e-7, optimality 1e-6, PSD check 1e-8.
struct SolverOptions {
  double feas_tol = 1e-7;
  double opt_tol = 1e-6;
  double psd_tol = 1e-8;
  int max_iters = 50000;
  std::string trace_path;  // empty: no trace
};

/// Result of a single LP/QP/NLP solve. `duals_ineq`/`duals_eq` follow the
/// convention  c + Q z + A_ineq^T mu + A_eq^T nu + bound multipliers = 0
/// with mu >= 0 for rows A_ineq z <= b_ineq.
struct SolveReport {
  SolveStatus status = SolveStatus::IterLimit;
  Vector z;
  double objective = std::numeric_limits<double>::quiet_NaN();
  Vector duals_ineq;
  Vector duals_eq;
  Vector reduced_costs;  // multipliers of the variable bounds (sign-split)
  long iterations = 0;
  double wall_time_s = 0.0;
  // Branch-and-bound extras (zero/false for plain solves).
  long nodes = 0;
  double gap = 0.0;
  bool bigm_suspect = false;
  std::string note;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

inline double clip(double v, const BoundedInterval& b) { return b.clamp(v); }

}  // namespace ctxopt
