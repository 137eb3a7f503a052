// Acceptance suite: one self-contained check per shipped guarantee, each
// printing a single PASS/FAIL line. Exit code is the number of failures.
//
//   1  worked example, unconstrained table
//   2  worked example, constrained table (branch-and-bound included)
//   3  global optimality vs exhaustive pattern enumeration
//   4  regularized fit tracks the global fit within 1%
//   5  in-sample dominance (producer, placement, newsvendor)
//   6  statistical consistency of the bilevel estimate
//   7  newsvendor quantile property
//   8  market-curve fitting exactness
//   9  synthetic three-technology sweep (ordinal findings)

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <vector>

#include "ctxopt/experiment.hpp"
#include "support/oracles.hpp"

using namespace ctxopt;

namespace {

struct Criterion {
  int id;
  const char* title;
  std::function<bool(std::string&)> run;
};

bool near(double got, double expect, double tol) {
  return std::abs(got - expect) <= tol;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

#define REQUIRE_NEAR(got, expect, tol, what)                               \
  do {                                                                     \
    if (!near((got), (expect), (tol))) {                                   \
      detail_out += fmt("  %s: got %.8f expected %.8f tol %g\n", (what),   \
                        double(got), double(expect), double(tol));         \
      ok = false;                                                          \
    }                                                                      \
  } while (0)

#define REQUIRE_TRUE(cond, what)                        \
  do {                                                  \
    if (!(cond)) {                                      \
      detail_out += fmt("  failed: %s\n", (what));      \
      ok = false;                                       \
    }                                                   \
  } while (0)

ProducerData random_producer_instance(std::mt19937_64& gen, int n,
                                      int p = 2) {
  std::uniform_real_distribution<double> ux(0.0, 10.0), ua(-2.0, 18.0),
      ub(1.0, 12.0);
  Matrix X(n, p);
  std::vector<GammaSample> obs(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) X(i, j) = ux(gen);
    const double ap = ua(gen), bp = ub(gen);
    obs[i] = {ap, bp, ap / bp};
  }
  return ProducerData(X, std::move(obs));
}

// --------------------------------------------------------------------------

bool criterion1(std::string& detail_out) {
  bool ok = true;
  const auto t0 = std::chrono::steady_clock::now();
  const ProducerData data =
      ProducerData::from_transformed(illustrative_sample());
  const BoundedInterval wide{-100.0, 100.0};

  const FoCoefficients fo = pr_fit_fo(data);
  REQUIRE_NEAR(fo.w_alpha.w[0], 5.000, 1e-3, "w_alpha[0]");
  REQUIRE_NEAR(fo.w_alpha.w[1], 1.000, 1e-3, "w_alpha[1]");
  REQUIRE_NEAR(fo.w_beta.w[0], 12.298, 1e-3, "w_beta[0]");
  REQUIRE_NEAR(fo.w_beta.w[1], -0.878, 1e-3, "w_beta[1]");

  const GammaFitReport bl = pr_fit_bl(data, wide, BlMode::BigM);
  REQUIRE_TRUE(bl.status == SolveStatus::Optimal, "BL-M optimal");
  REQUIRE_NEAR(bl.w_gamma.w[0], -0.138, 1e-3, "w_gamma[0]");
  REQUIRE_NEAR(bl.w_gamma.w[1], 0.341, 1e-3, "w_gamma[1]");

  const DrFit dr = pr_fit_dr(data, wide);
  REQUIRE_NEAR(dr.w_q.w[0], 0.5 * bl.w_gamma.w[0], 1e-5, "w_q == w_gamma/2 [0]");
  REQUIRE_NEAR(dr.w_q.w[1], 0.5 * bl.w_gamma.w[1], 1e-5, "w_q == w_gamma/2 [1]");

  double i_bn = 0, i_fo = 0, i_dr = 0, i_bl = 0;
  for (int i = 0; i < 4; ++i) {
    const Vector x = data.context(i);
    i_bn += pr_income(pr_decide_bn(data.obs(i), wide), data.obs(i));
    i_fo += pr_income(pr_decide_fo(fo, x, wide), data.obs(i));
    i_dr += pr_income(predict_linear(dr.w_q, x), data.obs(i));
    i_bl += pr_income(pr_decide_bl(bl.w_gamma, x, wide), data.obs(i));
  }
  REQUIRE_NEAR(i_bn, 23.33, 0.01, "income BN");
  REQUIRE_NEAR(i_fo, 21.21, 0.01, "income FO");
  REQUIRE_NEAR(i_dr, 22.36, 0.01, "income DR");
  REQUIRE_NEAR(i_bl, 22.36, 0.01, "income BL");

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  REQUIRE_TRUE(secs < 5.0, "runtime < 5 s");
  return ok;
}

bool criterion2(std::string& detail_out) {
  bool ok = true;
  const auto t0 = std::chrono::steady_clock::now();
  const ProducerData data =
      ProducerData::from_transformed(illustrative_sample());
  const BoundedInterval unit{0.0, 1.0};

  Vector bn(4);
  for (int i = 0; i < 4; ++i) bn[i] = pr_decide_bn(data.obs(i), unit);
  const Vector bn_expect = (Vector(4) << 0.10, 0.85, 1.00, 1.00).finished();
  REQUIRE_TRUE((bn - bn_expect).cwiseAbs().maxCoeff() <= 5e-3,
               "BN decisions (0.10, 0.85, 1.00, 1.00)");
  double i_bn = 0;
  for (int i = 0; i < 4; ++i) i_bn += pr_income(bn[i], data.obs(i));

  const GammaFitReport bl = pr_fit_bl(data, unit, BlMode::BigM);
  REQUIRE_TRUE(bl.status == SolveStatus::Optimal, "BL-M optimal");
  REQUIRE_NEAR(-bl.objective, 22.33, 0.01, "BL-M income matches BN 22.33");
  REQUIRE_NEAR(-bl.objective, i_bn, 0.01, "BL-M income equals BN income");
  Vector w_ref(2);
  w_ref << -1.300, 0.750;
  REQUIRE_NEAR(gamma_policy_cost(w_ref, data, unit), bl.objective, 1e-6,
               "reference w_gamma attains the certified objective");

  const FoCoefficients fo = pr_fit_fo(data);
  double i_fo = 0;
  for (int i = 0; i < 4; ++i)
    i_fo += pr_income(pr_decide_fo(fo, data.context(i), unit), data.obs(i));
  REQUIRE_NEAR(i_fo, 20.65, 0.01, "FO income");

  const DrFit dr = pr_fit_dr(data, unit);
  REQUIRE_NEAR(dr.w_q.w[0], 0.158, 1e-3, "w_q[0]");
  REQUIRE_NEAR(dr.w_q.w[1], 0.094, 1e-3, "w_q[1]");
  double i_dr = 0;
  for (int i = 0; i < 4; ++i)
    i_dr += pr_income(predict_linear(dr.w_q, data.context(i)), data.obs(i));
  REQUIRE_NEAR(i_dr, 20.50, 0.01, "DR income");

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  REQUIRE_TRUE(secs < 30.0, "runtime < 30 s including branch-and-bound");
  return ok;
}

bool criterion3(std::string& detail_out) {
  bool ok = true;
  std::mt19937_64 gen(20240301);
  std::uniform_int_distribution<int> nd(2, 6);
  const BoundedInterval unit{0.0, 1.0};
  for (int inst = 0; inst < 50; ++inst) {
    const int n = nd(gen);
    auto data = random_producer_instance(gen, n);
    std::vector<double> ap(n), bp(n);
    for (int i = 0; i < n; ++i) {
      ap[i] = data.obs(i).alpha_p;
      bp[i] = data.obs(i).beta_p;
    }
    auto fit = pr_fit_bl(data, unit, BlMode::BigM);
    if (fit.status != SolveStatus::Optimal) {
      detail_out += fmt("  instance %d: BL-M status %s\n", inst,
                        to_string(fit.status));
      ok = false;
      continue;
    }
    auto ref = testkit::producer_pattern_enumeration(data.contexts(), ap, bp,
                                                     unit);
    if (!near(fit.objective, ref.objective, 1e-7)) {
      detail_out += fmt("  instance %d: bnb %.10f vs enumeration %.10f\n",
                        inst, fit.objective, ref.objective);
      ok = false;
    }
  }
  return ok;
}

bool criterion4(std::string& detail_out) {
  bool ok = true;
  std::mt19937_64 gen(20240404);
  const BoundedInterval unit{0.0, 1.0};
  for (int inst = 0; inst < 20; ++inst) {
    auto data = random_producer_instance(gen, 40);
    auto global = pr_fit_bl(data, unit, BlMode::BigM);
    auto local = pr_fit_bl(data, unit, BlMode::Regularized);
    const double rel =
        std::abs(local.objective - global.objective) /
        std::max(1.0, std::abs(global.objective));
    if (!(rel <= 0.01)) {
      detail_out += fmt("  instance %d: BL-R %.6f vs BL-M %.6f (rel %.4f)\n",
                        inst, local.objective, global.objective, rel);
      ok = false;
    }
  }
  return ok;
}

bool criterion5(std::string& detail_out) {
  bool ok = true;
  const BoundedInterval unit{0.0, 1.0};
  {  // producer: BL income >= DR income in sample
    std::mt19937_64 gen(505001);
    std::uniform_int_distribution<int> nd(4, 12);
    for (int inst = 0; inst < 100; ++inst) {
      auto data = random_producer_instance(gen, nd(gen));
      auto dr = pr_fit_dr(data, unit);
      if (!dr.solve.optimal()) {
        detail_out += fmt("  producer %d: DR failed\n", inst);
        ok = false;
        continue;
      }
      GammaFitOptions opts;
      opts.warm_w = 2.0 * dr.w_q.w;
      auto bl = pr_fit_bl(data, unit, BlMode::BigM, opts);
      double dr_income = 0;
      for (Eigen::Index i = 0; i < data.size(); ++i)
        dr_income +=
            pr_income(predict_linear(dr.w_q, data.context(i)), data.obs(i));
      if (!(-bl.objective >= dr_income - 1e-6)) {
        detail_out += fmt("  producer %d: BL %.8f < DR %.8f\n", inst,
                          -bl.objective, dr_income);
        ok = false;
      }
    }
  }
  {  // placement: BL cost <= DR cost in sample
    std::mt19937_64 gen(505002);
    Network net;
    net.num_nodes = 2;
    net.arcs = {{0, 1}};
    std::uniform_real_distribution<double> ux(0.0, 3.0), uy(0.0, 2.0),
        uh(1.0, 4.0), ug(1.0, 8.0);
    for (int inst = 0; inst < 100; ++inst) {
      PlacementInstance pin;
      pin.h = (Vector(2) << uh(gen), uh(gen)).finished();
      pin.g = (Vector(1) << ug(gen)).finished();
      pin.r_pen = pin.h * 3.0 + Vector::Constant(2, 1.0);
      const int N = 4;
      Matrix X(N, 2), Y(N, 2);
      for (int i = 0; i < N; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = ux(gen);
        Y(i, 0) = uy(gen);
        Y(i, 1) = uy(gen);
      }
      ContextDataset data(X, Y);
      try {
        auto dr = pl_fit_dr(pin, net, data);
        PlacementBlOptions opts;
        opts.engine.warm_W = dr.policy.W;
        opts.engine.time_cap_s = 20.0;
        auto bl = pl_fit_bl(pin, net, data, opts);
        if (!(bl.objective <= dr.objective + 1e-6)) {
          detail_out += fmt("  placement %d: BL %.8f > DR %.8f\n", inst,
                            bl.objective, dr.objective);
          ok = false;
        }
      } catch (const std::exception& e) {
        detail_out += fmt("  placement %d: %s\n", inst, e.what());
        ok = false;
      }
    }
  }
  {  // newsvendor: BL policy cost <= FO policy cost in sample
    std::mt19937_64 gen(505003);
    std::uniform_real_distribution<double> ux(0.0, 8.0), ud(0.2, 0.9);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int inst = 0; inst < 100; ++inst) {
      const int n = 5 + static_cast<int>(ux(gen) * 4);
      Matrix X(n, 2), Y(n, 1);
      for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = ux(gen);
        Y(i, 0) = std::max(0.5, 5.0 + 1.0 * X(i, 1) + noise(gen));
      }
      ContextDataset data(X, Y);
      const double r = 4.0;
      NewsvendorInstance nv{r * ud(gen), r};
      auto fo = nv_fit_fo(nv, data);
      auto bl = nv_fit_bl(nv, data);
      const double fo_cost = nv_insample_cost(nv, fo, data, true);
      const double bl_cost = nv_insample_cost(nv, bl.w, data, true);
      if (!(bl_cost <= fo_cost + 1e-6)) {
        detail_out += fmt("  newsvendor %d: BL %.8f > FO %.8f\n", inst,
                          bl_cost, fo_cost);
        ok = false;
      }
    }
  }
  return ok;
}

bool criterion6(std::string& detail_out) {
  bool ok = true;
  const auto t0 = std::chrono::steady_clock::now();
  MarketGenConfig cfg;
  cfg.a = (Vector(3) << 0.3, 0.8, -0.5).finished();  // unit-scale, p = 3
  cfg.noise_sd = 0.3;
  cfg.beta_scale = 10.0;
  cfg.beta_sd = 0.3;
  const BoundedInterval roomy{-50.0, 50.0};
  std::vector<double> err_small, err_large;
  for (int seed = 1; seed <= 20; ++seed) {
    for (const Eigen::Index N : {Eigen::Index(100), Eigen::Index(10000)}) {
      auto data = ProducerData::from_transformed(
          synthesize_market(cfg, N, 1000 + seed));
      auto fit = pr_fit_bl(data, roomy, BlMode::BigM);
      if (fit.status != SolveStatus::Optimal) {
        detail_out += fmt("  seed %d N %ld: status %s\n", seed, long(N),
                          to_string(fit.status));
        ok = false;
        continue;
      }
      const double err = (fit.w_gamma.w - cfg.a).norm();
      (N == 100 ? err_small : err_large).push_back(err);
    }
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double med_small = median(err_small), med_large = median(err_large);
  detail_out += fmt("  median ||w-a||: N=100 %.5f, N=10000 %.5f\n", med_small,
                    med_large);
  REQUIRE_TRUE(med_large < med_small, "error shrinks with sample size");
  REQUIRE_TRUE(med_large < 0.05, "error below 0.05 at N=10000");
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  REQUIRE_TRUE(secs < 600.0, "runtime < 10 min");
  return ok;
}

bool criterion7(std::string& detail_out) {
  bool ok = true;
  std::mt19937_64 gen(707007);
  std::uniform_int_distribution<int> nd(2, 50);
  std::uniform_real_distribution<double> uy(0.1, 20.0), ud(0.15, 0.95);
  for (int inst = 0; inst < 100; ++inst) {
    const int n = nd(gen);
    std::vector<double> y(n);
    for (double& v : y) v = uy(gen);
    const double r = 5.0, d = r * ud(gen);
    NewsvendorInstance nv{d, r};
    Matrix X = Matrix::Ones(n, 1);
    Matrix Y(n, 1);
    for (int i = 0; i < n; ++i) Y(i, 0) = y[i];
    ContextDataset data(X, Y);
    auto fit = nv_fit_bl(nv, data);
    const double cost = nv_insample_cost(nv, fit.w, data);
    const double ref = testkit::newsvendor_enumeration_cost(d, r, y);
    if (!near(cost, ref, 1e-8)) {
      detail_out += fmt("  instance %d: LP %.10f vs enumeration %.10f\n", inst,
                        cost, ref);
      ok = false;
    }
  }
  return ok;
}

bool criterion8(std::string& detail_out) {
  bool ok = true;
  {  // exact recovery of a linear inverse curve
    const int K = 512;
    const double delta = 3.0;
    BidStack s;
    for (int k = 0; k < K; ++k) {
      const double q = (k + 0.5) * delta / K;
      s.buys.push_back({delta / K, 10.0 - 2.0 * q});
    }
    s.sells = {{1.0, 1e6}};
    auto fit = fit_inverse_demand(residual_demand(s), delta, K);
    REQUIRE_NEAR(fit.alpha, 10.0, 1e-9, "linear alpha");
    REQUIRE_NEAR(fit.beta, 2.0, 1e-9, "linear beta");
    REQUIRE_TRUE(fit.fit_rmse < 1e-9, "linear rmse < 1e-9");
  }
  {  // two-step curve vs independent normal equations
    BidStack s;
    s.buys = {{1.0, 8.0}, {1.0, 4.0}};
    s.sells = {{1.0, 1000.0}};
    const int K = 512;
    auto fit = fit_inverse_demand(residual_demand(s), 2.0, K);
    double s1 = 0, sq = 0, sqq = 0, sp = 0, sqp = 0;
    for (int k = 0; k < K; ++k) {
      const double q = (k + 0.5) * 2.0 / K;
      const double p = q < 1.0 ? 8.0 : 4.0;
      s1 += 1;
      sq += q;
      sqq += q * q;
      sp += p;
      sqp += q * p;
    }
    const double det = s1 * sqq - sq * sq;
    REQUIRE_NEAR(fit.alpha, (sqq * sp - sq * sqp) / det, 1e-9,
                 "two-step alpha vs normal equations");
    REQUIRE_NEAR(fit.beta, -(s1 * sqp - sq * sp) / det, 1e-9,
                 "two-step beta vs normal equations");
  }
  return ok;
}

bool criterion9(std::string& detail_out) {
  bool ok = true;
  struct Tech {
    const char* name;
    double c1, c2, qmax;
  };
  const std::vector<Tech> techs{{"base", 10.0, 0.005, 1000.0},
                                {"medium", 35.0, 0.005, 500.0},
                                {"peak", 50.0, 0.005, 250.0}};
  MarketGenConfig gen_cfg;
  gen_cfg.a = (Vector(3) << 4500.0, 1500.0, -900.0).finished();
  gen_cfg.noise_sd = 600.0;
  gen_cfg.beta_scale = 0.01;
  gen_cfg.beta_sd = 0.4;
  gen_cfg.b = (Vector(3) << 0.0, 0.25, -0.15).finished();

  std::map<std::string, std::vector<double>> ri_fo, ri_dr, ri_bl, infes_dr,
      infes_fo, infes_bl;
  for (int seed = 1; seed <= 20; ++seed) {
    const ContextDataset market = synthesize_market(gen_cfg, 400, 9000 + seed);
    for (const Tech& t : techs) {
      ExperimentConfig cfg;
      cfg.instance = ProducerInstance{t.c1, t.c2, {0.0, t.qmax}};
      cfg.decision_bounds = {0.0, t.qmax};
      cfg.methods = {Method::BN, Method::FO, Method::DR, Method::BLM};
      cfg.plan = SplitPlan{200, 0.8, 1, static_cast<std::uint64_t>(seed)};
      cfg.bl.rel_gap = 1e-4;
      cfg.bl.time_cap_s = 20.0;
      auto rep = run_experiment(cfg, market);
      for (Method m : {Method::FO, Method::DR, Method::BLM})
        if (rep.methods[m].failed_splits > 0) {
          detail_out += fmt("  seed %d %s: %s failed on %d splits\n", seed,
                            t.name, to_string(m),
                            rep.methods[m].failed_splits);
          ok = false;
        }
      ri_fo[t.name].push_back(rep.methods[Method::FO].relative_income);
      ri_dr[t.name].push_back(rep.methods[Method::DR].relative_income);
      ri_bl[t.name].push_back(rep.methods[Method::BLM].relative_income);
      infes_dr[t.name].push_back(rep.methods[Method::DR].infeasibility_pct);
      infes_fo[t.name].push_back(rep.methods[Method::FO].infeasibility_pct);
      infes_bl[t.name].push_back(rep.methods[Method::BLM].infeasibility_pct);
    }
  }
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  for (const Tech& t : techs) {
    const double fo = mean(ri_fo[t.name]), dr = mean(ri_dr[t.name]),
                 bl = mean(ri_bl[t.name]);
    detail_out += fmt("  %s: RI fo %.2f dr %.2f bl-m %.2f, DR infes %.2f%%\n",
                      t.name, fo, dr, bl, mean(infes_dr[t.name]));
    REQUIRE_TRUE(bl >= fo, fmt("%s: RI bl-m >= RI fo", t.name).c_str());
    REQUIRE_TRUE(fo >= dr, fmt("%s: RI fo >= RI dr", t.name).c_str());
    REQUIRE_TRUE(mean(infes_dr[t.name]) > 0.0,
                 fmt("%s: DR infeasibility > 0", t.name).c_str());
    REQUIRE_TRUE(mean(infes_fo[t.name]) == 0.0,
                 fmt("%s: FO infeasibility == 0", t.name).c_str());
    REQUIRE_TRUE(mean(infes_bl[t.name]) == 0.0,
                 fmt("%s: BL infeasibility == 0", t.name).c_str());
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i)
    if (!std::strcmp(argv[i], "--only") && i + 1 < argc)
      only = std::atoi(argv[i + 1]);

  std::vector<Criterion> criteria{
      {1, "worked example, unconstrained table", criterion1},
      {2, "worked example, constrained table", criterion2},
      {3, "global optimality vs pattern enumeration (50 instances)",
       criterion3},
      {4, "regularized fit within 1% of global (20 instances)", criterion4},
      {5, "in-sample dominance, 100 instances per application", criterion5},
      {6, "statistical consistency of the bilevel estimate", criterion6},
      {7, "newsvendor quantile property (100 datasets)", criterion7},
      {8, "market-curve fitting exactness", criterion8},
      {9, "three-technology synthetic sweep (20 seeds)", criterion9},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail += fmt("  exception: %s\n", e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("[%s] criterion %d: %s (%.2f s)\n", ok ? "PASS" : "FAIL", c.id,
                c.title, secs);
    if (!detail.empty()) std::fputs(detail.c_str(), stdout);
    if (!ok) ++failures;
  }
  return failures;
}
