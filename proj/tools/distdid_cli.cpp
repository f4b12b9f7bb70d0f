// distdid: estimate, simulate, generate.
//
// Exit codes: 0 ok, 2 configuration, 3 data, 4 identification, 5 numerical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "distdid/distdid.hpp"

namespace fs = std::filesystem;
using namespace distdid;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kIdent = 4, kNumeric = 5 };

// Flag values land in an overlay so that only flags given on the command
// line override the config file.
struct Overlay {
  json values = json::object();

  template <typename T>
  void add(CLI::App& app, const std::string& flag, const std::string& key, const std::string& help) {
    app.add_option(flag, help)->type_name(CLI::detail::type_name<T>())->each([this, key](const std::string& raw) {
      T v{};
      if (!CLI::detail::lexical_cast(raw, v)) throw ConfigError(key + ": cannot read '" + raw + "'");
      values[key] = v;
    });
  }
  void add_flag(CLI::App& app, const std::string& flag, const std::string& key, bool value,
                const std::string& help) {
    app.add_flag_callback(flag, [this, key, value] { values[key] = value; }, help);
  }
  void add_list(CLI::App& app, const std::string& flag, const std::string& key, bool numeric,
                const std::string& help) {
    app.add_option(flag, help)->type_name("LIST")->each([this, key, numeric](const std::string& raw) {
      json arr = json::array();
      std::stringstream ss(raw);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        if (!numeric) {
          arr.push_back(item);
          continue;
        }
        try {
          arr.push_back(std::stod(item));
        } catch (const std::exception&) {
          throw ConfigError(key + ": '" + item + "' is not a number");
        }
      }
      values[key] = arr;
    });
  }
};

json merged_config(const std::string& path, const Overlay& overlay) {
  json cfg = path.empty() ? json::object() : load_config(path);
  for (const auto& [k, v] : overlay.values.items()) cfg[k] = v;
  return cfg;
}

template <typename F>
void write_file(const fs::path& path, F&& body) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  body(out);
}

EffectCurve banded(const std::vector<double>& axis, const std::vector<double>& values,
                   const UniformBand* band) {
  EffectCurve c{axis, values, std::nullopt};
  if (band) c.band = envelope_of(*band);
  return c;
}

EffectCurve quantile_curve(const StepDF& df, const std::vector<double>& taus,
                           const std::vector<Interval>* intervals, double level) {
  EffectCurve c;
  c.axis = taus;
  for (double t : taus) c.values.push_back(left_inverse(df, t));
  if (intervals) c.band = envelope_of(*intervals, level);
  return c;
}

int run_estimate(const json& cfg) {
  const std::string data_path = detail::get_string(cfg, "data", "");
  if (data_path.empty()) throw ConfigError("estimate needs --data (or 'data' in the config)");
  const CsvSchema schema = schema_from(cfg);
  const PanelDataset data = load_csv(data_path, schema);
  const EstimatorSpec spec = estimator_spec_from(cfg, data);
  const BootstrapPlan plan = plan_from(cfg);
  const auto taus = taus_from(cfg);
  const auto threads = static_cast<unsigned>(std::max<long long>(1, detail::get_integer(cfg, "threads", 1)));
  const fs::path out = detail::get_string(cfg, "out", "distdid_out");
  fs::create_directories(out);

  const DesignInfo design = detect_design(data);
  std::optional<BandResult> bands;
  PointEstimate point;
  if (plan.replications > 0) {
    bands = band_pipeline(data, spec, plan, taus, threads);
    point = bands->estimate;
  } else {
    point = estimate(data, spec);
  }
  const auto& grid = spec.grid;

  write_file(out / "treated_df.csv", [&](std::ostream& o) {
    write_csv(o, banded(grid.points, point.treated.values, bands ? &bands->treated_band : nullptr));
  });
  write_file(out / "counterfactual_df.csv", [&](std::ostream& o) {
    write_csv(o, banded(grid.points, point.counterfactual.values, bands ? &bands->counterfactual_band : nullptr));
  });
  write_file(out / "dtt.csv", [&](std::ostream& o) { write_csv(o, point.dtt); });
  const double level = plan.level;
  const auto qf_t = quantile_curve(point.treated, taus, bands ? &bands->qf_treated : nullptr, level);
  const auto qf_c = quantile_curve(point.counterfactual, taus, bands ? &bands->qf_counterfactual : nullptr, level);
  const EffectCurve qtt_curve = bands ? bands->qtt : qtt(point.treated, point.counterfactual, taus);
  write_file(out / "qf_treated.csv", [&](std::ostream& o) { write_csv(o, qf_t); });
  write_file(out / "qf_counterfactual.csv", [&](std::ostream& o) { write_csv(o, qf_c); });
  write_file(out / "qtt.csv", [&](std::ostream& o) { write_csv(o, qtt_curve); });
  write_file(out / "weights.csv", [&](std::ostream& o) {
    o.precision(17);
    o << "g,tpre,tpost,weight\n";
    for (const auto& [t, w] : point.weights.weights)
      o << group_name(t.group) << ',' << t.pre << ',' << t.post << ',' << w << '\n';
  });
  write_file(out / "plot_df.dat", [&](std::ostream& o) {
    write_plot_data(o, banded(grid.points, point.treated.values, bands ? &bands->treated_band : nullptr),
                    "treated DF");
    o << "\n\n";
    write_plot_data(o, banded(grid.points, point.counterfactual.values,
                              bands ? &bands->counterfactual_band : nullptr),
                    "counterfactual DF");
  });
  write_file(out / "plot_dtt.dat", [&](std::ostream& o) { write_plot_data(o, point.dtt, "DTT"); });
  write_file(out / "plot_qtt.dat", [&](std::ostream& o) { write_plot_data(o, qtt_curve, "QTT"); });

  const double a = adtt(point.dtt);
  json summary{{"command", "estimate"},
               {"version", kVersion},
               {"seed", plan.seed},
               {"config_hash", config_hash(cfg)},
               {"design", std::string(to_string(design.mode))},
               {"sampling", std::string(to_string(design.kind))},
               {"units", data.num_units()},
               {"observations", data.size()},
               {"grid_points", grid.size()},
               {"triples", point.weights.weights.size()},
               {"adtt", a},
               {"level", level},
               {"bootstrap", plan.replications}};
  json diag{{"clipped", point.diagnostics.clipped},
            {"out_of_range", point.diagnostics.out_of_range},
            {"nonmonotone_counterfactual", point.diagnostics.nonmonotone}};
  if (bands) {
    summary["dtt_test"] = {{"reject", bands->dtt_test.reject},
                           {"statistic", bands->dtt_test.statistic},
                           {"critical", bands->dtt_test.critical}};
    summary["critical_value_df"] = bands->treated_band.critical_value;
    diag["degenerate_replications"] = bands->degenerate_replications;
    diag["df_bands_truncated"] = bands->treated_band.truncated || bands->counterfactual_band.truncated;
  }
  summary["diagnostics"] = diag;
  write_file(out / "summary.json", [&](std::ostream& o) { o << summary.dump(2) << '\n'; });

  std::ostringstream line;
  line.precision(6);
  line << "status=ok command=estimate design=" << to_string(design.mode) << " triples="
       << point.weights.weights.size() << " adtt=" << a;
  if (bands) line << " dtt_reject=" << (bands->dtt_test.reject ? 1 : 0);
  line << " out=" << out.string();
  std::cout << line.str() << std::endl;
  return kOk;
}

int run_simulate(const json& cfg) {
  const DGPConfig dgp = dgp_from(cfg);
  const MCMetrics m = run_mc(dgp);
  const std::string out = detail::get_string(cfg, "out", "");
  if (out.empty()) {
    write_table_header(std::cout);
    write_table_row(std::cout, dgp, m);
    return kOk;
  }
  const bool append = fs::exists(out) && fs::file_size(out) > 0;
  std::ofstream f(out, append ? std::ios::app : std::ios::trunc);
  if (!f) throw DataError("cannot write " + out);
  if (!append) write_table_header(f);
  write_table_row(f, dgp, m);
  std::ostringstream line;
  line.precision(6);
  line << "status=ok command=simulate n=" << dgp.n << " reps=" << dgp.reps << " L2_DTT=" << m.l2_dtt
       << " L2_cDF=" << m.l2_cdf;
  if (m.rej_dtt) line << " Rej_DTT=" << *m.rej_dtt;
  line << " out=" << out;
  std::cout << line.str() << std::endl;
  return kOk;
}

int run_generate(const json& cfg) {
  const std::string kind = detail::get_string(cfg, "kind", "panel");
  const std::string out = detail::get_string(cfg, "out", "");
  if (out.empty()) throw ConfigError("generate needs --out");
  PanelDataset data = [&] {
    if (kind == "panel" || kind == "staggered") {
      PanelConfig p;
      p.staggered = kind == "staggered";
      p.seed = static_cast<std::uint64_t>(detail::get_integer(cfg, "seed", 7));
      p.effect = detail::get_number(cfg, "effect", 0.0);
      p.units = static_cast<std::size_t>(detail::get_integer(cfg, "units", 876));
      p.treated = static_cast<std::size_t>(detail::get_integer(cfg, "treated", 37));
      return gen_block_panel(p);
    }
    if (kind == "dgp") {
      const DGPConfig d = dgp_from(cfg);
      auto rng = rng_stream(d.seed, 0, 0);
      return gen_dgp(d, rng);
    }
    throw ConfigError("unknown kind '" + kind + "' (valid: panel, staggered, dgp)");
  }();
  write_file(out, [&](std::ostream& o) { write_csv(o, data); });
  std::cout << "status=ok command=generate rows=" << data.size() << " units=" << data.num_units()
            << " out=" << out << std::endl;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributional difference-in-differences under functional index parallel trends"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path;
  Overlay est, sim, gen;

  auto* e = app.add_subcommand("estimate", "Estimate DTT/QTT with uniform bands from a CSV file");
  e->add_option("--config", config_path, "TOML-style config file (flags override it)");
  est.add<std::string>(*e, "--data", "data", "input CSV");
  est.add<std::string>(*e, "--id", "id", "unit id column (default id)");
  est.add<std::string>(*e, "--time", "time", "period column (default time)");
  est.add<std::string>(*e, "--group", "group", "group column (default group)");
  est.add<std::string>(*e, "--outcome", "outcome", "outcome column (default y)");
  est.add<std::string>(*e, "--design", "design", "two-period | nsmp | staggered (default: inferred)");
  est.add_list(*e, "--covariates", "covariates", false, "comma-separated covariate columns");
  est.add<std::string>(*e, "--dictionary", "dictionary", "linear | quadratic");
  est.add<std::string>(*e, "--link", "link", "shared working link: " + valid_link_names());
  est.add<std::string>(*e, "--theta", "theta", "group | time indexing of links");
  est.add<std::string>(*e, "--grid", "grid", "unique | simulation | trim:<lo>,<hi>");
  est.add_list(*e, "--grid-points", "grid", true, "explicit comma-separated outcome grid");
  est.add_list(*e, "--taus", "taus", true, "comma-separated quantile levels");
  est.add<std::string>(*e, "--aggregate", "aggregate", "equal | equal:<g> | event:<e> | file:<path>");
  est.add<long long>(*e, "--boot", "boot", "bootstrap replications (0 disables bands)");
  est.add<long long>(*e, "--seed", "seed", "random seed");
  est.add<double>(*e, "--level", "level", "band level (default 0.9)");
  est.add<std::string>(*e, "--scheme", "scheme", "nonparam | rademacher | normal | mammen");
  est.add<long long>(*e, "--threads", "threads", "worker threads");
  est.add<double>(*e, "--clip-eps", "clip_eps", "fixed ECDF clipping level");
  est.add_flag(*e, "--no-clip", "clip", false, "disable ECDF clipping");
  est.add_flag(*e, "--monotonize", "monotonize", true, "rearrange the counterfactual to be monotone");
  est.add<std::string>(*e, "--out", "out", "output directory");

  auto* s = app.add_subcommand("simulate", "Monte Carlo study; appends a metrics row to a CSV table");
  s->add_option("--config", config_path, "TOML-style config file (flags override it)");
  sim.add<long long>(*s, "--dgp", "dgp", "1 (censored) | 2 (continuous)");
  sim.add<std::string>(*s, "--error", "error", "normal | ald:<kappa>");
  sim.add<long long>(*s, "--n", "n", "sample size (even)");
  sim.add<long long>(*s, "--reps", "reps", "Monte Carlo replications");
  sim.add<long long>(*s, "--boot", "boot", "bootstrap replications (0 skips inference)");
  sim.add<std::string>(*s, "--link", "link", "working link: " + valid_link_names());
  sim.add<double>(*s, "--delta", "delta", "treatment effect on the latent index");
  sim.add<std::string>(*s, "--grid", "grid", "simulation (default) | unique | trim:<lo>,<hi>");
  sim.add<long long>(*s, "--seed", "seed", "random seed");
  sim.add<double>(*s, "--level", "level", "band level (default 0.9)");
  sim.add<long long>(*s, "--threads", "threads", "worker threads");
  sim.add_flag(*s, "--qtt-coverage", "qtt_coverage", true, "also record QTT interval coverage");
  sim.add<std::string>(*s, "--out", "out", "table CSV (appended; stdout when omitted)");

  auto* g = app.add_subcommand("generate", "Write a synthetic dataset");
  g->add_option("--config", config_path, "TOML-style config file (flags override it)");
  gen.add<std::string>(*g, "--kind", "kind", "panel | staggered | dgp");
  gen.add<long long>(*g, "--units", "units", "panel units (default 876)");
  gen.add<long long>(*g, "--treated", "treated", "treated units (default 37)");
  gen.add<double>(*g, "--effect", "effect", "treatment effect on the log rate");
  gen.add<long long>(*g, "--dgp", "dgp", "1 | 2 (kind dgp)");
  gen.add<std::string>(*g, "--error", "error", "normal | ald:<kappa> (kind dgp)");
  gen.add<long long>(*g, "--n", "n", "sample size (kind dgp)");
  gen.add<double>(*g, "--delta", "delta", "treatment effect (kind dgp)");
  gen.add<long long>(*g, "--seed", "seed", "random seed");
  gen.add<std::string>(*g, "--out", "out", "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kConfig;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kConfig;
  }

  try {
    if (e->parsed()) return run_estimate(merged_config(config_path, est));
    if (s->parsed()) return run_simulate(merged_config(config_path, sim));
    return run_generate(merged_config(config_path, gen));
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kConfig;
  } catch (const DomainError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kConfig;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kData;
  } catch (const IdentificationError& err) {
    std::cerr << "identification error: " << err.what() << '\n';
    return kIdent;
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << '\n';
    return kNumeric;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kNumeric;
  }
}
