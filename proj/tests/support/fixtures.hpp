// Shared test data: the four-sample single-feature market sample used by
// the in-repo worked example, and small random generators.
#pragma once

#include <random>

#include "ctxopt/dataset.hpp"

namespace ctxopt::testkit {

// Contexts (1, x) with x in {2,4,8,9}; outcomes (alpha', beta').
inline ContextDataset example_market_sample() {
  Matrix X(4, 2);
  X << 1, 2, 1, 4, 1, 8, 1, 9;
  Matrix Y(4, 2);
  Y << 2, 10, 17, 10, 8, 3, 16, 6;
  return ContextDataset(X, Y);
}

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace ctxopt::testkit
