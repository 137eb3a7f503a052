#pragma once

#include "ctxopt/dataset.hpp"

namespace ctxopt {

struct OlsDiagnostics {
  bool rank_deficient = false;
  Eigen::Index rank = 0;
};

/// Least-squares fit of outcome column `target_index` on the contexts.
/// Singular normal matrices fall back to the minimum-norm solution via a
/// complete orthogonal decomposition; `diag` reports the detected rank.
inline LinearCoefficients ols_fit(const ContextDataset& data,
                                  Eigen::Index target_index,
                                  OlsDiagnostics* diag = nullptr) {
  if (target_index < 0 || target_index >= data.outcome_dim())
    throw DataError("ols_fit: target_index out of range");
  const Matrix& X = data.features();
  Vector y = data.outcomes().col(target_index);

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(X);
  cod.setThreshold(1e-10);
  Vector w = cod.solve(y);
  if (diag) {
    diag->rank = cod.rank();
    diag->rank_deficient = cod.rank() < X.cols();
  }
  return LinearCoefficients(std::move(w));
}

}  // namespace ctxopt
