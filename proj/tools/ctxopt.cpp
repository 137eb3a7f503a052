// ctxopt: contextual decision-making under uncertainty.
//
// Subcommands:
//   producer    fit / evaluate the strategic-producer methods
//   newsvendor  fit / evaluate ordering policies
//   placement   fit / evaluate product-placement policies
//   market      fit-curves from bid stacks; synth generates datasets
//   reproduce   re-derive the bundled worked example and verify it

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

#include "ctxopt/experiment.hpp"

using namespace ctxopt;
using nlohmann::json;

namespace {

Vector parse_vector(const std::string& csv) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
  return Eigen::Map<Vector>(vals.data(), vals.size());
}

json distribution_json(const IncomeDistribution& d) {
  return json{{"pct_positive", d.pct_positive},
              {"pct_negative", d.pct_negative},
              {"pct_zero", d.pct_zero},
              {"income_positive", d.income_positive},
              {"income_negative", d.income_negative}};
}

json report_json(const EvaluationReport& rep) {
  json out;
  for (const auto& [m, agg] : rep.methods) {
    out["methods"][to_string(m)] = {
        {"income", agg.income},
        {"relative_income", agg.relative_income},
        {"infeasibility_pct", agg.infeasibility_pct},
        {"failed_splits", agg.failed_splits},
        {"fit_seconds", agg.fit_seconds},
        {"periods", agg.periods},
        {"distribution", distribution_json(agg.dist)}};
  }
  out["splits"] = json::array();
  for (const auto& s : rep.splits) {
    json row{{"bin", s.bin}, {"repeat", s.repeat}};
    for (const auto& [m, inc] : s.income)
      if (!s.failed.at(m)) row["income"][to_string(m)] = inc;
    for (const auto& [m, failed] : s.failed)
      if (failed) row["failed"].push_back(to_string(m));
    out["splits"].push_back(std::move(row));
  }
  out["wall_time_s"] = rep.wall_time_s;
  return out;
}

json cost_report_json(const CostReport& rep) {
  return json{{"in_sample_cost", rep.in_sample_cost},
              {"out_sample_cost", rep.out_sample_cost},
              {"relative_vs_bn", rep.relative_vs_bn},
              {"infeasibility_pct", rep.infeasibility_pct},
              {"splits", rep.splits}};
}

void emit(const json& payload, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << payload.dump(2) << std::endl;
  } else {
    std::ofstream out(out_path);
    out << payload.dump(2) << std::endl;
    std::cerr << "wrote " << out_path << std::endl;
  }
}

void write_report_csv(const EvaluationReport& rep, const std::string& path) {
  std::ofstream out(path);
  out << "method,income,relative_income,infeasibility_pct,failed_splits,"
         "pct_positive,pct_negative,pct_zero,income_positive,income_negative\n";
  out.precision(10);
  for (const auto& [m, a] : rep.methods)
    out << to_string(m) << "," << a.income << "," << a.relative_income << ","
        << a.infeasibility_pct << "," << a.failed_splits << ","
        << a.dist.pct_positive << "," << a.dist.pct_negative << ","
        << a.dist.pct_zero << "," << a.dist.income_positive << ","
        << a.dist.income_negative << "\n";
}

struct ProducerArgs {
  double c1 = 35.0, c2 = 0.005, qmin = 0.0, qmax = 500.0;
  bool transformed = false;
  std::string data_path, methods_csv = "bn,fo,dr,bl-m";
  std::string out_json, out_csv, curve_dump, config_path, solve_log;
  SplitPlan plan;
  bool in_sample = false;
  double gap = 1e-8, time_cap = 1200.0;
  int workers = 0;
};

ExperimentConfig to_config(const ProducerArgs& a) {
  ExperimentConfig cfg;
  cfg.data_is_transformed = a.transformed;
  if (!a.transformed) {
    cfg.instance = ProducerInstance{a.c1, a.c2,
                                    BoundedInterval(a.qmin, a.qmax)};
    cfg.instance.validate();
  }
  cfg.decision_bounds = BoundedInterval(a.qmin, a.qmax);
  cfg.methods.clear();
  std::stringstream ss(a.methods_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) cfg.methods.push_back(parse_method(tok));
  cfg.plan = a.plan;
  cfg.in_sample = a.in_sample;
  cfg.bl.rel_gap = a.gap;
  cfg.bl.time_cap_s = a.time_cap;
  cfg.workers = a.workers;
  return cfg;
}

void load_config_json(ProducerArgs& a) {
  std::ifstream in(a.config_path);
  if (!in) throw DataError("cannot open config " + a.config_path);
  json j;
  in >> j;
  if (j.contains("c1")) a.c1 = j["c1"];
  if (j.contains("c2")) a.c2 = j["c2"];
  if (j.contains("qmin")) a.qmin = j["qmin"];
  if (j.contains("qmax")) a.qmax = j["qmax"];
  if (j.contains("transformed")) a.transformed = j["transformed"];
  if (j.contains("data")) a.data_path = j["data"];
  if (j.contains("methods")) {
    a.methods_csv.clear();
    for (const auto& m : j["methods"])
      a.methods_csv += (a.methods_csv.empty() ? "" : ",") +
                       m.get<std::string>();
  }
  if (j.contains("bin_size")) a.plan.bin_size = j["bin_size"];
  if (j.contains("train_fraction")) a.plan.train_fraction = j["train_fraction"];
  if (j.contains("repeats")) a.plan.repeats = j["repeats"];
  if (j.contains("seed")) a.plan.seed = j["seed"];
  if (j.contains("in_sample")) a.in_sample = j["in_sample"];
  if (j.contains("gap")) a.gap = j["gap"];
  if (j.contains("time_cap_s")) a.time_cap = j["time_cap_s"];
  if (j.contains("workers")) a.workers = j["workers"];
  if (j.contains("output")) a.out_json = j["output"];
}

int producer_fit(const ProducerArgs& args) {
  ExperimentConfig cfg = to_config(args);
  const ContextDataset raw = read_dataset_csv(args.data_path);
  const ProducerData data =
      cfg.data_is_transformed
          ? ProducerData::from_transformed(raw)
          : ProducerData::from_market(cfg.instance, raw);
  const BoundedInterval box = cfg.decision_bounds;
  json out;
  for (Method m : cfg.methods) {
    if (m == Method::BN) continue;  // nothing to fit
    if (m == Method::FO) {
      auto fo = pr_fit_fo(data);
      out["fo"] = {{"w_alpha", std::vector<double>(
                                   fo.w_alpha.w.data(),
                                   fo.w_alpha.w.data() + fo.w_alpha.w.size())},
                   {"w_beta", std::vector<double>(
                                  fo.w_beta.w.data(),
                                  fo.w_beta.w.data() + fo.w_beta.w.size())}};
    } else if (m == Method::DR) {
      auto dr = pr_fit_dr(data, box, cfg.bl.solver);
      out["dr"] = {{"status", to_string(dr.solve.status)},
                   {"w_q", std::vector<double>(dr.w_q.w.data(),
                                               dr.w_q.w.data() +
                                                   dr.w_q.w.size())}};
    } else {
      GammaFitOptions opts = cfg.bl;
      auto fit = pr_fit_bl(data, box,
                           m == Method::BLM ? BlMode::BigM
                                            : BlMode::Regularized,
                           opts);
      out[to_string(m)] = {
          {"status", to_string(fit.status)},
          {"w_gamma", std::vector<double>(fit.w_gamma.w.data(),
                                          fit.w_gamma.w.data() +
                                              fit.w_gamma.w.size())},
          {"objective", fit.objective},
          {"income", -fit.objective},
          {"nodes", fit.nodes},
          {"gap", fit.gap}};
    }
  }
  if (!args.curve_dump.empty()) {
    if (data.feature_dim() != 2)
      throw DataError("--curve-dump expects contexts (1, x)");
    double xlo = data.contexts().col(1).minCoeff();
    double xhi = data.contexts().col(1).maxCoeff();
    std::ofstream curve(args.curve_dump);
    curve << "x";
    for (Method m : cfg.methods) curve << ",q_" << to_string(m);
    curve << "\n";
    curve.precision(10);
    auto fo = pr_fit_fo(data);
    auto dr = pr_fit_dr(data, box, cfg.bl.solver);
    GammaFitReport bl;
    bool have_bl = false;
    for (Method m : cfg.methods)
      if (m == Method::BLM || m == Method::BLR) {
        bl = pr_fit_bl(data, box,
                       m == Method::BLM ? BlMode::BigM : BlMode::Regularized,
                       cfg.bl);
        have_bl = true;
      }
    for (int k = 0; k <= 400; ++k) {
      const double xv = xlo + (xhi - xlo) * k / 400.0;
      Vector x(2);
      x << 1.0, xv;
      curve << xv;
      for (Method m : cfg.methods) {
        double q = 0.0;
        if (m == Method::BN) q = std::numeric_limits<double>::quiet_NaN();
        else if (m == Method::FO) q = pr_decide_fo(fo, x, box);
        else if (m == Method::DR) q = predict_linear(dr.w_q, x);
        else if (have_bl) q = pr_decide_bl(bl.w_gamma, x, box);
        curve << "," << q;
      }
      curve << "\n";
    }
    std::cerr << "wrote " << args.curve_dump << std::endl;
  }
  emit(out, args.out_json);
  return 0;
}

int producer_evaluate(const ProducerArgs& args) {
  ExperimentConfig cfg = to_config(args);
  const ContextDataset data = read_dataset_csv(args.data_path);
  EvaluationReport rep = run_experiment(cfg, data);
  emit(report_json(rep), args.out_json);
  if (!args.out_csv.empty()) {
    write_report_csv(rep, args.out_csv);
    std::cerr << "wrote " << args.out_csv << std::endl;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contextual decision-making under uncertainty"};
  app.require_subcommand(1);

  // ---- producer ----
  ProducerArgs pa;
  auto* producer = app.add_subcommand("producer", "strategic producer");
  producer->require_subcommand(1);
  auto add_producer_common = [&](CLI::App* cmd) {
    cmd->add_option("--c1", pa.c1, "linear cost (currency/MWh)");
    cmd->add_option("--c2", pa.c2, "quadratic cost (currency/MWh^2)");
    cmd->add_option("--qmin", pa.qmin, "minimum output");
    cmd->add_option("--qmax", pa.qmax, "maximum output");
    cmd->add_flag("--transformed", pa.transformed,
                  "dataset outcomes are already (alpha', beta')");
    cmd->add_option("--data", pa.data_path, "dataset CSV");
    cmd->add_option("--method,--methods", pa.methods_csv,
                    "comma list of bn,fo,dr,bl-m,bl-r");
    cmd->add_option("--gap", pa.gap, "BL-M relative optimality gap");
    cmd->add_option("--time-cap", pa.time_cap, "BL-M per-fit seconds cap");
    cmd->add_option("--config", pa.config_path, "JSON config file");
    cmd->add_option("--out", pa.out_json, "JSON output path");
  };
  auto* pfit = producer->add_subcommand("fit", "fit on the full dataset");
  add_producer_common(pfit);
  pfit->add_option("--curve-dump", pa.curve_dump,
                   "CSV of (x, q_method) over the context range");
  auto* peval = producer->add_subcommand("evaluate", "bin/split protocol");
  add_producer_common(peval);
  peval->add_option("--bin-size", pa.plan.bin_size, "samples per bin");
  peval->add_option("--train-frac", pa.plan.train_fraction, "train fraction");
  peval->add_option("--repeats", pa.plan.repeats, "repeats per bin");
  peval->add_option("--seed", pa.plan.seed, "split seed");
  peval->add_flag("--in-sample", pa.in_sample, "train = test = full data");
  peval->add_option("--workers", pa.workers,
                    "worker threads (default: CTXOPT_WORKERS or cores)");
  peval->add_option("--out-csv", pa.out_csv, "CSV summary path");

  // ---- newsvendor ----
  struct {
    double d = 1.0, r = 2.0;
    std::string data_path, method = "bl", out_json;
    SplitPlan plan;
    bool in_sample = false;
  } nv;
  auto* news = app.add_subcommand("newsvendor", "ordering under uncertainty");
  news->require_subcommand(1);
  auto* nfit = news->add_subcommand("fit", "fit on the full dataset");
  auto* neval = news->add_subcommand("evaluate", "bin/split protocol");
  for (CLI::App* cmd : {nfit, neval}) {
    cmd->add_option("--d", nv.d, "unit cost");
    cmd->add_option("--r", nv.r, "unit revenue");
    cmd->add_option("--data", nv.data_path, "dataset CSV")->required();
    cmd->add_option("--method", nv.method, "fo, bl or dr (dr aliases bl)");
    cmd->add_option("--out", nv.out_json, "JSON output path");
  }
  neval->add_option("--bin-size", nv.plan.bin_size, "samples per bin");
  neval->add_option("--train-frac", nv.plan.train_fraction, "train fraction");
  neval->add_option("--repeats", nv.plan.repeats, "repeats per bin");
  neval->add_option("--seed", nv.plan.seed, "split seed");
  neval->add_flag("--in-sample", nv.in_sample, "train = test = full data");

  // ---- placement ----
  struct {
    std::string arcs, nodes, data_path, method = "bl", out_json;
    SplitPlan plan;
    bool in_sample = false;
  } pl;
  auto* place = app.add_subcommand("placement", "product placement");
  place->require_subcommand(1);
  auto* plfit = place->add_subcommand("fit", "fit on the full dataset");
  auto* pleval = place->add_subcommand("evaluate", "bin/split protocol");
  for (CLI::App* cmd : {plfit, pleval}) {
    cmd->add_option("--network", pl.arcs, "arc list CSV origin,end,g")
        ->required();
    cmd->add_option("--nodes", pl.nodes, "node file CSV node,h,r_pen")
        ->required();
    cmd->add_option("--data", pl.data_path, "dataset CSV")->required();
    cmd->add_option("--method", pl.method, "fo, dr or bl");
    cmd->add_option("--out", pl.out_json, "JSON output path");
  }
  pleval->add_option("--bin-size", pl.plan.bin_size, "samples per bin");
  pleval->add_option("--train-frac", pl.plan.train_fraction, "train fraction");
  pleval->add_option("--repeats", pl.plan.repeats, "repeats per bin");
  pleval->add_option("--seed", pl.plan.seed, "split seed");
  pleval->add_flag("--in-sample", pl.in_sample, "train = test = full data");

  // ---- market ----
  struct {
    std::string stacks, contexts, out_path = "market_curves.csv";
    double delta = 5000.0;
    int grid = 512;
    long n = 1000;
    std::uint64_t seed = 0;
    std::string a_csv = "0.3,0.8,-0.5", b_csv;
    double noise_sd = 0.3, beta_scale = 10.0, beta_sd = 0.3;
  } mk;
  auto* market = app.add_subcommand("market", "inverse-demand tooling");
  market->require_subcommand(1);
  auto* mcurves = market->add_subcommand(
      "fit-curves", "fit p(q) = alpha - beta q per hour from bid stacks");
  mcurves->add_option("--stacks", mk.stacks, "bid-stack CSV")->required();
  mcurves->add_option("--delta", mk.delta, "fit window width (MW)");
  mcurves->add_option("--grid", mk.grid, "fitting grid size");
  mcurves->add_option("--contexts", mk.contexts,
                      "optional CSV hour,x2,... joined on hour");
  mcurves->add_option("--out", mk.out_path, "output dataset CSV");
  auto* msynth = market->add_subcommand("synth", "synthetic market dataset");
  msynth->add_option("--n", mk.n, "sample count")->required();
  msynth->add_option("--seed", mk.seed, "RNG seed")->required();
  msynth->add_option("--a", mk.a_csv, "gamma coefficients, comma list");
  msynth->add_option("--b", mk.b_csv, "beta' feature coupling, comma list");
  msynth->add_option("--noise-sd", mk.noise_sd, "gamma noise scale");
  msynth->add_option("--beta-scale", mk.beta_scale, "beta' median");
  msynth->add_option("--beta-sd", mk.beta_sd, "beta' lognormal sigma");
  msynth->add_option("--out", mk.out_path, "output dataset CSV");

  // ---- reproduce ----
  struct {
    std::string what = "illustrative", out_dir = "reproduce_out";
  } rp;
  auto* reproduce =
      app.add_subcommand("reproduce", "re-derive bundled reference results");
  reproduce->add_option("what", rp.what, "illustrative");
  reproduce->add_option("--out-dir", rp.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (producer->parsed()) {
      if (!pa.config_path.empty()) load_config_json(pa);
      if (pa.data_path.empty())
        throw DataError("producer: --data (or config with data) is required");
      return pfit->parsed() ? producer_fit(pa) : producer_evaluate(pa);
    }
    if (news->parsed()) {
      const NewsvendorInstance inst{nv.d, nv.r};
      inst.validate();
      const ContextDataset data = read_dataset_csv(nv.data_path);
      if (nfit->parsed()) {
        json out;
        if (nv.method == "fo") {
          auto w = nv_fit_fo(inst, data);
          out["fo"]["w"] = std::vector<double>(w.w.data(),
                                               w.w.data() + w.w.size());
        } else {
          auto fit = nv_fit_bl(inst, data);
          const char* name = nv.method == "dr" ? "dr" : "bl";
          out[name]["w"] = std::vector<double>(
              fit.w.w.data(), fit.w.w.data() + fit.w.w.size());
          if (nv.method == "dr")
            out[name]["note"] = "dr coincides with bl for this application";
        }
        emit(out, nv.out_json);
      } else {
        auto rep = nv_run_experiment(inst, data, nv.plan, nv.in_sample);
        emit(cost_report_json(rep), nv.out_json);
      }
      return 0;
    }
    if (place->parsed()) {
      auto [net, inst] = read_network_csv(pl.arcs, pl.nodes);
      const ContextDataset data = read_dataset_csv(pl.data_path);
      if (plfit->parsed()) {
        json out;
        Matrix W;
        if (pl.method == "fo") W = pl_fit_fo(inst, net, data).W;
        else if (pl.method == "dr") W = pl_fit_dr(inst, net, data).policy.W;
        else W = pl_fit_bl(inst, net, data).policy.W;
        out[pl.method]["W"] = json::array();
        for (Eigen::Index b = 0; b < W.rows(); ++b)
          out[pl.method]["W"].push_back(std::vector<double>(
              W.row(b).data(), W.row(b).data() + W.cols()));
        emit(out, pl.out_json);
      } else {
        auto rep = pl_run_experiment(inst, net, data, pl.plan, pl.in_sample);
        emit(cost_report_json(rep), pl.out_json);
      }
      return 0;
    }
    if (market->parsed()) {
      if (mcurves->parsed()) {
        auto stacks = read_bid_stacks_csv(mk.stacks);
        auto batch = fit_curves(stacks, mk.delta, mk.grid);
        std::map<int, std::vector<double>> ctx;
        Eigen::Index extra = 0;
        if (!mk.contexts.empty()) {
          std::ifstream in(mk.contexts);
          if (!in) throw DataError("cannot open " + mk.contexts);
          std::string line;
          std::getline(in, line);
          while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = detail::split_csv_line(line);
            std::vector<double> xs;
            for (size_t k = 1; k < f.size(); ++k)
              xs.push_back(std::stod(f[k]));
            extra = static_cast<Eigen::Index>(xs.size());
            ctx[std::stoi(f[0])] = std::move(xs);
          }
        }
        std::ofstream out(mk.out_path);
        out << "x1";
        for (Eigen::Index j = 0; j < extra; ++j) out << ",x" << (j + 2);
        out << ",y1,y2\n";
        out.precision(12);
        int joined = 0;
        for (size_t k = 0; k < batch.fits.size(); ++k) {
          const int hour = batch.hours[k];
          if (!mk.contexts.empty() && !ctx.count(hour)) continue;
          out << 1.0;
          if (!mk.contexts.empty())
            for (double v : ctx[hour]) out << "," << v;
          out << "," << batch.fits[k].alpha << "," << batch.fits[k].beta
              << "\n";
          ++joined;
        }
        std::cerr << "fitted " << batch.fits.size() << " hours, skipped "
                  << batch.skipped << ", wrote " << joined << " rows to "
                  << mk.out_path << std::endl;
      } else {
        MarketGenConfig cfg;
        cfg.a = parse_vector(mk.a_csv);
        if (!mk.b_csv.empty()) cfg.b = parse_vector(mk.b_csv);
        cfg.noise_sd = mk.noise_sd;
        cfg.beta_scale = mk.beta_scale;
        cfg.beta_sd = mk.beta_sd;
        write_dataset_csv(synthesize_market(cfg, mk.n, mk.seed), mk.out_path);
        std::cerr << "wrote " << mk.n << " samples to " << mk.out_path
                  << std::endl;
      }
      return 0;
    }
    if (reproduce->parsed()) {
      if (rp.what != "illustrative")
        throw DataError("reproduce: unknown target '" + rp.what + "'");
      auto res = reproduce_illustrative(rp.out_dir);
      for (const auto& f : res.files_written)
        std::cerr << "wrote " << f << std::endl;
      if (!res.ok) {
        std::cerr << "DEVIATIONS:" << std::endl;
        for (const auto& d : res.deviations)
          std::cerr << "  " << d << std::endl;
        return 1;
      }
      std::cout << "illustrative example reproduced: all values within "
                   "tolerance"
                << std::endl;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
