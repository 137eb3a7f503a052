#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <random>

#include "ctxopt/dataset.hpp"
#include "ctxopt/ols.hpp"

namespace ctxopt {

/// One hour's order book: quantities to buy/sell at limit prices.
struct BidStack {
  struct Entry {
    double quantity = 0.0;  // MW
    double price = 0.0;
  };
  std::vector<Entry> buys;
  std::vector<Entry> sells;

  void validate() const {
    if (buys.empty() && sells.empty()) throw DataError("BidStack: empty");
    for (const auto& e : buys)
      if (!(e.quantity > 0.0) || !std::isfinite(e.price))
        throw DataError("BidStack: invalid buy entry");
    for (const auto& e : sells)
      if (!(e.quantity > 0.0) || !std::isfinite(e.price))
        throw DataError("BidStack: invalid sell entry");
  }
};

/**
 * Residual demand r(p) = sum of buy quantities with p_b >= p minus sum of
 * sell quantities with p_o <= p: the volume a new producer could serve at
 * price p. Step function, nonincreasing in p.
 */
class ResidualDemandCurve {
 public:
  explicit ResidualDemandCurve(const BidStack& stack) {
    stack.validate();
    for (const auto& e : stack.buys) {
      buy_prices_.push_back(e.price);
      total_buy_ += e.quantity;
    }
    std::sort(buy_prices_.begin(), buy_prices_.end());
    buy_qty_sorted_.resize(buy_prices_.size());
    {
      std::vector<std::pair<double, double>> tmp;
      for (const auto& e : stack.buys) tmp.emplace_back(e.price, e.quantity);
      std::sort(tmp.begin(), tmp.end());
      for (size_t i = 0; i < tmp.size(); ++i) buy_qty_sorted_[i] = tmp[i].second;
    }
    {
      std::vector<std::pair<double, double>> tmp;
      for (const auto& e : stack.sells) tmp.emplace_back(e.price, e.quantity);
      std::sort(tmp.begin(), tmp.end());
      for (const auto& [p, q] : tmp) {
        sell_prices_.push_back(p);
        sell_qty_sorted_.push_back(q);
        total_sell_ += q;
      }
    }
    // Suffix sums of buy quantities (>= price index k).
    buy_suffix_.assign(buy_prices_.size() + 1, 0.0);
    for (size_t k = buy_prices_.size(); k-- > 0;)
      buy_suffix_[k] = buy_suffix_[k + 1] + buy_qty_sorted_[k];
    sell_prefix_.assign(sell_prices_.size() + 1, 0.0);
    for (size_t k = 0; k < sell_prices_.size(); ++k)
      sell_prefix_[k + 1] = sell_prefix_[k] + sell_qty_sorted_[k];
    breakpoints_ = buy_prices_;
    breakpoints_.insert(breakpoints_.end(), sell_prices_.begin(),
                        sell_prices_.end());
    std::sort(breakpoints_.begin(), breakpoints_.end());
    breakpoints_.erase(std::unique(breakpoints_.begin(), breakpoints_.end()),
                       breakpoints_.end());
  }

  double value(double p) const {
    const auto bit =
        std::lower_bound(buy_prices_.begin(), buy_prices_.end(), p);
    const double buys = buy_suffix_[bit - buy_prices_.begin()];
    const auto sit =
        std::upper_bound(sell_prices_.begin(), sell_prices_.end(), p);
    const double sells = sell_prefix_[sit - sell_prices_.begin()];
    return buys - sells;
  }

  double max_value() const { return total_buy_; }
  double min_value() const { return -total_sell_; }
  const std::vector<double>& breakpoints() const { return breakpoints_; }

  /// Inverse map p(q) = sup{p : r(p) >= q}. Throws when the quantity is
  /// outside the curve's range.
  double inverse_price(double q) const {
    if (q > total_buy_ + 1e-12)
      throw DataError("ResidualDemandCurve: quantity above curve range");
    if (value(breakpoints_.empty() ? 0.0 : breakpoints_.back() + 1.0) >=
        q - 1e-12) {
      // r never drops below q: sup is unbounded
      throw DataError("ResidualDemandCurve: curve never falls below quantity");
    }
    // Scan event prices from the right: the set {r >= q} is a left ray.
    for (size_t k = breakpoints_.size(); k-- > 0;) {
      const double pk = breakpoints_[k];
      // Open interval just right of pk carries value(pk^+); if it still
      // satisfies r >= q the ray extends to the next breakpoint.
      if (k + 1 < breakpoints_.size()) {
        const double mid = 0.5 * (pk + breakpoints_[k + 1]);
        if (value(mid) >= q) return breakpoints_[k + 1];
      }
      if (value(pk) >= q) return pk;
    }
    // Only the region left of every breakpoint carries r = total buys >= q.
    return breakpoints_.front();
  }

 private:
  std::vector<double> buy_prices_, buy_qty_sorted_;
  std::vector<double> sell_prices_, sell_qty_sorted_;
  std::vector<double> buy_suffix_, sell_prefix_;
  std::vector<double> breakpoints_;
  double total_buy_ = 0.0, total_sell_ = 0.0;
};

inline ResidualDemandCurve residual_demand(const BidStack& stack) {
  return ResidualDemandCurve(stack);
}

struct FittedInverseDemand {
  double alpha = 0.0;
  double beta = 0.0;  // slope magnitude, > 0
  double delta = 0.0;
  double fit_rmse = 0.0;
  int grid_size = 0;
};

/**
 * Least-squares line p(q) = alpha - beta q over a uniform midpoint grid on
 * [0, delta] through the inverse step curve. Rejects windows the curve
 * does not span and fits with nonpositive slope magnitude.
 */
inline FittedInverseDemand fit_inverse_demand(const ResidualDemandCurve& curve,
                                              double delta,
                                              int grid_size = 512) {
  if (!(delta > 0.0)) throw DataError("fit_inverse_demand: delta must be > 0");
  if (grid_size < 2) throw DataError("fit_inverse_demand: grid too small");
  if (curve.max_value() < delta)
    throw DataError("fit_inverse_demand: window not covered by curve");
  Vector q(grid_size), p(grid_size);
  for (int k = 0; k < grid_size; ++k) {
    q[k] = (k + 0.5) * delta / grid_size;
    p[k] = curve.inverse_price(q[k]);  // throws when not covered
  }
  const double qbar = q.mean(), pbar = p.mean();
  const double sqq = (q.array() - qbar).square().sum();
  const double sqp = ((q.array() - qbar) * (p.array() - pbar)).sum();
  const double slope = sqp / sqq;
  FittedInverseDemand fit;
  fit.alpha = pbar - slope * qbar;
  fit.beta = -slope;
  fit.delta = delta;
  fit.grid_size = grid_size;
  fit.fit_rmse = std::sqrt(
      (p.array() - (fit.alpha - fit.beta * q.array())).square().mean());
  if (!(fit.beta > 0.0))
    throw SolveError("fit_inverse_demand: nonpositive fitted slope");
  return fit;
}

// ---------------------------------------------------------------------------
// Synthetic market generator: a stand-in dataset with the linear-gamma
// structure  gamma = a^T x + xi,  beta' lognormal (optionally coupled to
// the features), alpha' = gamma * beta'.

struct MarketGenConfig {
  Vector a;                 // gamma coefficients, a[0] pairs with the intercept
  double noise_sd = 0.3;    // xi scale
  double beta_scale = 10.0; // median of beta'
  double beta_sd = 0.3;     // lognormal sigma of beta'
  Vector b;                 // optional coupling of log beta' to the features

  Eigen::Index feature_dim() const { return a.size(); }

  void validate() const {
    if (a.size() < 1) throw DataError("MarketGenConfig: empty coefficients");
    if (!(noise_sd >= 0.0) || !(beta_scale > 0.0) || !(beta_sd >= 0.0))
      throw DataError("MarketGenConfig: invalid scales");
    if (b.size() != 0 && b.size() != a.size())
      throw DataError("MarketGenConfig: coupling size mismatch");
  }
};

/// Emits N samples (x, alpha, beta) with x = (1, N(0,1), ...), beta > 0.
/// Deterministic per seed.
inline ContextDataset synthesize_market(const MarketGenConfig& cfg,
                                        Eigen::Index N, std::uint64_t seed) {
  cfg.validate();
  if (N < 1) throw DataError("synthesize_market: N must be >= 1");
  const Eigen::Index p = cfg.feature_dim();
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> stdn(0.0, 1.0);
  Matrix X(N, p);
  Matrix Y(N, 2);
  for (Eigen::Index i = 0; i < N; ++i) {
    X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) X(i, j) = stdn(gen);
    const Vector x = X.row(i).transpose();
    const double gamma = cfg.a.dot(x) + cfg.noise_sd * stdn(gen);
    double logb = std::log(cfg.beta_scale) + cfg.beta_sd * stdn(gen);
    if (cfg.b.size() == p) logb += cfg.b.dot(x) - cfg.b[0];
    const double beta = std::exp(logb);
    Y(i, 0) = gamma * beta;  // alpha
    Y(i, 1) = beta;
  }
  return ContextDataset(std::move(X), std::move(Y));
}

// ---------------------------------------------------------------------------
// Bid-stack CSV: `side,quantity_mw,price` rows, or a long format with a
// leading `hour` column holding many stacks in one file.

inline std::map<int, BidStack> read_bid_stacks_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_bid_stacks_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw DataError("read_bid_stacks_csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);
  bool has_hour = !header.empty() && (header[0] == "hour" || header[0] == "Hour");
  const size_t base = has_hour ? 1 : 0;
  if (header.size() != base + 3)
    throw DataError("read_bid_stacks_csv: expected [hour,]side,quantity_mw,price");
  std::map<int, BidStack> stacks;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != base + 3)
      throw DataError("read_bid_stacks_csv: bad row '" + line + "'");
    const int hour = has_hour ? std::stoi(f[0]) : 0;
    BidStack::Entry e{std::stod(f[base + 1]), std::stod(f[base + 2])};
    const std::string& side = f[base];
    if (side == "buy") stacks[hour].buys.push_back(e);
    else if (side == "sell") stacks[hour].sells.push_back(e);
    else throw DataError("read_bid_stacks_csv: side must be buy|sell");
  }
  if (stacks.empty()) throw DataError("read_bid_stacks_csv: no rows");
  return stacks;
}

struct CurveFitBatch {
  std::vector<int> hours;
  std::vector<FittedInverseDemand> fits;
  int skipped = 0;  // hours whose window was not covered
};

/// Fits every hour's stack; hours that do not span [0, delta] are counted
/// and skipped rather than extrapolated.
inline CurveFitBatch fit_curves(const std::map<int, BidStack>& stacks,
                                double delta, int grid_size = 512) {
  CurveFitBatch out;
  for (const auto& [hour, stack] : stacks) {
    try {
      auto fit = fit_inverse_demand(residual_demand(stack), delta, grid_size);
      out.hours.push_back(hour);
      out.fits.push_back(fit);
    } catch (const DataError&) {
      ++out.skipped;
    } catch (const SolveError&) {
      ++out.skipped;
    }
  }
  return out;
}

}  // namespace ctxopt
