#include "ozcal/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "ozcal/io.hpp"
#include "ozcal/predict.hpp"
#include "ozcal/scoring.hpp"
#include "ozcal/synth.hpp"

namespace ozcal::cli {

namespace fs = std::filesystem;

namespace {

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw data_error("missing input file: " + p.string());
}

fs::path ensure_out_dir(const std::string& dir) {
  const fs::path p(dir);
  fs::create_directories(p);
  return p;
}

std::vector<double> parse_number_list(const std::string& s,
                                      const std::string& what) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string tok =
        s.substr(start, comma == std::string::npos ? comma : comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw input_error("cannot parse " + what + " entry '" + tok + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

/// "name=v1,v2,..." -> named control vector.
std::pair<std::string, std::vector<double>> parse_eta_spec(
    const std::string& s) {
  const std::size_t eq = s.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw input_error("control spec must look like name=v1,v2,... : " + s);
  }
  return {s.substr(0, eq),
          parse_number_list(s.substr(eq + 1), "control vector")};
}

/// Scenario file: flat key=value lines (name, eta, replicates, kth,
/// thresholds).
predict::ScenarioSpec load_scenario_file(const fs::path& path) {
  require_file(path);
  std::ifstream in(path);
  predict::ScenarioSpec spec;
  spec.name = path.stem().string();
  std::string line;
  long line_no = 0;
  bool have_eta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw data_error(path.string() + ":" + std::to_string(line_no) +
                       ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "name") {
      spec.name = value;
    } else if (key == "eta") {
      spec.eta = parse_number_list(value, "eta");
      have_eta = true;
    } else if (key == "replicates") {
      spec.replicates = std::stoi(value);
    } else if (key == "kth") {
      spec.order_statistic = std::stoi(value);
    } else if (key == "thresholds") {
      spec.thresholds = parse_number_list(value, "thresholds");
    } else {
      throw data_error(path.string() + ":" + std::to_string(line_no) +
                       ": unknown key '" + key + "'");
    }
  }
  if (!have_eta) throw data_error(path.string() + ": missing eta=...");
  return spec;
}

struct FitDir {
  io::FitManifest manifest;
  std::vector<MonitorSite> sites;
  inference::PosteriorDraws draws;
  inference::CopulaFit copula;
};

FitDir load_fit_dir(const fs::path& dir) {
  require_file(dir / "manifest.txt");
  const io::FitManifest manifest = io::load_manifest(dir / "manifest.txt");
  const inference::ParameterLayout layout(manifest.n_inputs, manifest.n_sites,
                                          manifest.settings);
  require_file(dir / "posterior.csv");
  require_file(dir / "sites.csv");
  require_file(dir / "copula.csv");
  auto sites = io::load_sites(dir / "sites.csv");
  if (static_cast<int>(sites.size()) != manifest.n_sites) {
    throw data_error(dir.string() + ": sites.csv does not match manifest");
  }
  return {manifest, std::move(sites),
          io::load_posterior(dir / "posterior.csv", layout),
          io::load_copula(dir / "copula.csv")};
}

// -- gen-synth ---------------------------------------------------------------

int cmd_gen_synth(synth::SynthConfig cfg, const std::string& out_dir,
                  bool no_gpd, const std::string& alpha_spec) {
  cfg.settings.use_gpd = !no_gpd;
  if (!alpha_spec.empty()) {
    cfg.alpha = parse_number_list(alpha_spec, "alpha");
  }
  const auto out = ensure_out_dir(out_dir);
  const synth::SyntheticData data = synth::generate_synthetic(cfg);
  io::save_sensitivity(out / "sensitivity.csv", data.field);
  io::save_monitors(out / "monitors.csv", data.monitors);
  const inference::ParameterLayout layout(cfg.n_inputs, cfg.n_sites,
                                          cfg.settings);
  io::save_state(out / "truth.csv", layout, data.truth.state);
  io::write_file_atomic(out / "synth.txt", [&](std::ostream& os) {
    os << "seed=" << cfg.seed << '\n'
       << "phi=" << io::format_double(data.truth.phi) << '\n'
       << "n_inputs=" << cfg.n_inputs << '\n'
       << "n_sites=" << cfg.n_sites << '\n'
       << "n_days=" << cfg.n_days << '\n'
       << "grid_nx=" << cfg.grid_nx << '\n'
       << "grid_ny=" << cfg.grid_ny << '\n'
       << "basis_count=" << cfg.settings.basis_count << '\n'
       << "poly_order=" << cfg.settings.poly_order << '\n'
       << "use_gpd=" << (cfg.settings.use_gpd ? 1 : 0) << '\n';
  });
  std::cout << "wrote synthetic data to " << out.string() << "\n";
  return 0;
}

// -- fit ----------------------------------------------------------------------

int cmd_fit(const std::string& sens_path, const std::string& monitors_path,
            const std::string& out_dir, inference::ModelSettings settings,
            inference::McmcConfig config, double train_fraction) {
  require_file(sens_path);
  require_file(monitors_path);
  const auto out = ensure_out_dir(out_dir);
  const rfm::SensitivityField field = io::load_sensitivity(sens_path);
  const MonitorDataset all = io::load_monitors(monitors_path);
  all.link_to_field(field);

  MonitorDataset train = all;
  if (train_fraction < 1.0) {
    train = scoring::split_train_test(all, train_fraction, config.seed).first;
  }

  const inference::ChainResult chain =
      inference::run_chain(settings, config, train, field);
  const inference::ParameterLayout layout(field.n_inputs, train.n_sites(),
                                          settings);
  inference::PosteriorDraws draws(layout, chain.draws, chain.n_draws);
  const inference::PosteriorState mean_state = draws.mean_state();
  const inference::CopulaFit copula =
      inference::fit_copula(mean_state, train, field, settings);

  io::save_posterior(out / "posterior.csv", chain.names, chain.draws,
                     chain.n_draws);
  io::save_diagnostics(out / "diagnostics.csv", chain.blocks);
  io::save_trace(out / "trace.csv", chain, config.burn_in);
  io::save_copula(out / "copula.csv", copula);
  io::save_sites(out / "sites.csv", train.sites);
  io::save_manifest(out / "manifest.txt",
                    {field.n_inputs, train.n_sites(), settings,
                     config.iterations, config.burn_in, config.seed,
                     train_fraction});
  if (copula.independence_fallback) {
    std::cout << "note: nonpositive lag-1 residual correlation ("
              << copula.lag1_corr
              << "); copula falls back to temporal independence\n";
  }
  std::cout << "fit complete: " << chain.n_draws << " retained draws, "
            << "lag-1 residual correlation "
            << io::format_double(copula.lag1_corr) << ", phi "
            << io::format_double(copula.params.phi) << "\n";
  return 0;
}

// -- predict -------------------------------------------------------------------

int cmd_predict(const std::string& sens_path, const std::string& fit_dir,
                const std::string& out_dir,
                const std::vector<std::string>& eta_specs,
                const std::vector<std::string>& scenario_files,
                int replicates, int kth, std::vector<double> thresholds,
                bool retain_draws, std::optional<double> phi_override,
                std::uint64_t seed) {
  require_file(sens_path);
  const auto out = ensure_out_dir(out_dir);
  const rfm::SensitivityField field = io::load_sensitivity(sens_path);
  const FitDir fit = load_fit_dir(fit_dir);
  if (fit.manifest.n_inputs != field.n_inputs) {
    throw data_error("sensitivity field input count does not match the fit");
  }
  std::vector<spatial::Point> site_pts(fit.sites.size());
  for (std::size_t i = 0; i < fit.sites.size(); ++i) {
    site_pts[i] = {fit.sites[i].x_km, fit.sites[i].y_km};
  }
  const double phi =
      phi_override.value_or(fit.copula.params.phi);

  std::vector<predict::ScenarioSpec> specs;
  for (const auto& s : eta_specs) {
    auto [name, eta] = parse_eta_spec(s);
    predict::ScenarioSpec spec;
    spec.name = name;
    spec.eta = std::move(eta);
    specs.push_back(std::move(spec));
  }
  for (const auto& f : scenario_files) {
    specs.push_back(load_scenario_file(f));
  }
  if (specs.empty()) {
    throw input_error("no scenarios given; use --eta or --scenario");
  }
  for (auto& spec : specs) {
    spec.replicates = replicates;
    spec.order_statistic = kth;
    if (!thresholds.empty()) spec.thresholds = thresholds;
    spec.retain_draws = retain_draws;
  }

  std::vector<predict::ScenarioSummary> summaries;
  for (const auto& spec : specs) {
    summaries.push_back(predict::run_scenario(spec, fit.draws, field,
                                              site_pts, phi, seed));
    io::save_scenario_summary(out / ("scenario_" + spec.name + ".csv"),
                              summaries.back(), field);
    std::cout << "scenario " << spec.name << ": wrote per-cell summary ("
              << spec.replicates << " replicates)\n";
    if (summaries.back().negative_concentrations > 0) {
      std::cout << "note: scenario " << spec.name << " produced "
                << summaries.back().negative_concentrations
                << " negative surrogate concentrations (not clipped)\n";
    }
    if (spec.retain_draws) {
      io::save_scenario_draws(
          out / ("scenario_" + spec.name + "_draws.csv"), summaries.back());
    }
  }
  for (std::size_t a = 0; a < summaries.size(); ++a) {
    for (std::size_t b = a + 1; b < summaries.size(); ++b) {
      io::save_scenario_diff(
          out / ("diff_" + summaries[a].name + "_vs_" + summaries[b].name +
                 ".csv"),
          summaries[a], summaries[b], field);
    }
  }
  return 0;
}

// -- score ----------------------------------------------------------------------

int cmd_score(const std::string& sens_path, const std::string& monitors_path,
              const std::string& out_dir,
              const std::vector<std::string>& fit_specs,
              std::vector<double> levels, std::vector<double> thresholds) {
  require_file(sens_path);
  require_file(monitors_path);
  const auto out = ensure_out_dir(out_dir);
  const rfm::SensitivityField field = io::load_sensitivity(sens_path);
  const MonitorDataset all = io::load_monitors(monitors_path);
  all.link_to_field(field);
  if (levels.empty()) levels = scoring::kDefaultLevels;
  if (thresholds.empty()) thresholds = scoring::kDefaultThresholds;

  struct NamedFit {
    std::string label;
    FitDir fit;
  };
  std::vector<NamedFit> fits;
  for (const auto& s : fit_specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw input_error("--fit expects label=DIR, got: " + s);
    }
    fits.push_back({s.substr(0, eq), load_fit_dir(s.substr(eq + 1))});
    if (fits.back().fit.manifest.n_sites != all.n_sites()) {
      throw data_error("fit '" + fits.back().label +
                       "' was trained on a different site set");
    }
  }
  const double train_fraction = fits.front().fit.manifest.train_fraction;
  const std::uint64_t split_seed = fits.front().fit.manifest.seed;
  for (const auto& nf : fits) {
    if (nf.fit.manifest.train_fraction != train_fraction ||
        nf.fit.manifest.seed != split_seed) {
      throw data_error(
          "fits disagree on the train/test split; score them separately");
    }
  }

  MonitorDataset train = all;
  MonitorDataset test = all;
  if (train_fraction < 1.0) {
    auto [tr, te] = scoring::split_train_test(all, train_fraction, split_seed);
    train = std::move(tr);
    test = std::move(te);
  } else {
    std::cout << "note: fits used the full data; scoring in-sample\n";
  }

  std::vector<scoring::ScoreReport> reports;
  reports.push_back(
      scoring::slr_baseline(train, test, field, levels, thresholds));
  for (const auto& nf : fits) {
    const inference::PosteriorState mean_state = nf.fit.draws.mean_state();
    reports.push_back(scoring::score_model(nf.label, mean_state,
                                           nf.fit.manifest.settings, test,
                                           field, levels, thresholds));
  }
  io::save_scores(out / "scores.csv", reports);
  std::cout << "wrote scores for " << reports.size() << " models over "
            << test.size() << " test records\n";
  return 0;
}

// -- diagnose --------------------------------------------------------------------

int cmd_diagnose(const std::string& sens_path,
                 const std::string& monitors_path, const std::string& fit_dir,
                 const std::string& out_dir) {
  require_file(sens_path);
  require_file(monitors_path);
  const auto out = ensure_out_dir(out_dir);
  const rfm::SensitivityField field = io::load_sensitivity(sens_path);
  const MonitorDataset all = io::load_monitors(monitors_path);
  all.link_to_field(field);
  const FitDir fit = load_fit_dir(fit_dir);
  if (fit.manifest.n_sites != all.n_sites()) {
    throw data_error("fit was trained on a different site set");
  }

  MonitorDataset data = all;
  if (fit.manifest.train_fraction < 1.0) {
    data = scoring::split_train_test(all, fit.manifest.train_fraction,
                                     fit.manifest.seed)
               .first;
  }
  const inference::PosteriorState mean_state = fit.draws.mean_state();
  const inference::CopulaFit residfit = inference::fit_copula(
      mean_state, data, field, fit.manifest.settings);
  io::save_residual_pairs(out / "residual_pairs.csv", residfit, data.sites);
  std::cout << "wrote " << residfit.n_pairs
            << " consecutive-day residual pairs (lag-1 correlation "
            << io::format_double(residfit.lag1_corr) << ")\n";
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Air-quality surrogate calibration with extreme-value tails"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key=value config file; flags override");

  // gen-synth
  auto* gen = app.add_subcommand(
      "gen-synth", "Generate a synthetic sensitivity field, monitors, truth");
  synth::SynthConfig synth_cfg;
  std::string gen_out;
  bool gen_no_gpd = false;
  std::string gen_alpha;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", synth_cfg.seed, "Master seed");
  gen->add_option("--sites", synth_cfg.n_sites, "Monitor site count");
  gen->add_option("--days", synth_cfg.n_days, "Season length in days");
  gen->add_option("--grid-nx", synth_cfg.grid_nx, "Grid columns");
  gen->add_option("--grid-ny", synth_cfg.grid_ny, "Grid rows");
  gen->add_option("--cell-km", synth_cfg.cell_km, "Cell size (km)");
  gen->add_option("--inputs", synth_cfg.n_inputs, "Number of model inputs d");
  gen->add_option("--L", synth_cfg.settings.basis_count,
                  "Basis count of the generating model");
  gen->add_option("--M", synth_cfg.settings.poly_order,
                  "Polynomial order of the generating model");
  gen->add_flag("--no-gpd", gen_no_gpd, "Generate without a tail (T = 1)");
  gen->add_option("--tail-xi", synth_cfg.tail_xi,
                  "Shape intercept of the generating tail");
  gen->add_option("--thr-lower", synth_cfg.thr_lower,
                  "Generating threshold lower bound");
  gen->add_option("--thr-upper", synth_cfg.thr_upper,
                  "Generating threshold upper bound");
  gen->add_option("--phi", synth_cfg.phi, "AR(1) copula range (days)");
  gen->add_option("--alpha", gen_alpha,
                  "Truth perturbation vector, comma separated");

  // fit
  auto* fit = app.add_subcommand(
      "fit", "Calibrate the conditional model against monitor data");
  std::string fit_sens, fit_monitors, fit_out;
  inference::ModelSettings fit_settings;
  inference::McmcConfig fit_config;
  bool fit_no_gpd = false;
  double fit_train_fraction = 1.0;
  fit->add_option("--sens", fit_sens, "Sensitivity CSV")->required();
  fit->add_option("--monitors", fit_monitors, "Monitor CSV")->required();
  fit->add_option("--out", fit_out, "Output directory")->required();
  fit->add_option("--L", fit_settings.basis_count, "Basis count (1 or even)");
  fit->add_option("--M", fit_settings.poly_order, "Polynomial order");
  fit->add_flag("--no-gpd", fit_no_gpd, "Fit without the tail (T = 1)");
  fit->add_option("--iterations", fit_config.iterations, "MCMC iterations");
  fit->add_option("--burn-in", fit_config.burn_in, "Burn-in iterations");
  fit->add_option("--target-accept", fit_config.target_accept,
                  "Adaptation target acceptance rate");
  fit->add_option("--seed", fit_config.seed, "Master seed");
  fit->add_option("--train-fraction", fit_train_fraction,
                  "Fit on this fraction of records (1 = all)");
  fit->add_option("--alpha-prior-sd", fit_config.alpha_prior_sd,
                  "Prior sd of each perturbation component");
  fit->add_option("--coef-prior-sd", fit_config.coef_prior_sd,
                  "Prior sd of global coefficients and process means (c1)");
  fit->add_option("--hyper-var-shape", fit_config.hyper_var_shape,
                  "Gamma shape of process variances (c2)");
  fit->add_option("--hyper-var-rate", fit_config.hyper_var_rate,
                  "Gamma rate of process variances (c3)");

  // predict
  auto* pred = app.add_subcommand(
      "predict", "Simulate posterior-predictive seasons under scenarios");
  std::string pred_sens, pred_fit, pred_out;
  std::vector<std::string> pred_eta, pred_scn;
  int pred_replicates = 10000;
  int pred_kth = 4;
  std::vector<double> pred_thresholds;
  bool pred_retain = false;
  double pred_phi = -1.0;
  std::uint64_t pred_seed = 1;
  pred->add_option("--sens", pred_sens, "Sensitivity CSV")->required();
  pred->add_option("--fit", pred_fit, "Fit output directory")->required();
  pred->add_option("--out", pred_out, "Output directory")->required();
  pred->add_option("--eta", pred_eta,
                   "Scenario as name=v1,v2,... (repeatable)");
  pred->add_option("--scenario", pred_scn,
                   "Scenario key=value file (repeatable)");
  pred->add_option("--replicates", pred_replicates, "Replicates per scenario");
  pred->add_option("--kth", pred_kth, "Order statistic (k-th largest)");
  pred->add_option("--threshold", pred_thresholds,
                   "Exceedance threshold ppb (repeatable)");
  pred->add_flag("--retain-draws", pred_retain,
                 "Keep raw order statistics in memory outputs");
  pred->add_option("--phi", pred_phi,
                   "Override the fitted AR(1) range (days)");
  pred->add_option("--seed", pred_seed, "Master seed");

  // score
  auto* score = app.add_subcommand(
      "score", "Holdout quantile and Brier scores against the SLR baseline");
  std::string score_sens, score_monitors, score_out;
  std::vector<std::string> score_fits;
  std::vector<double> score_levels, score_thresholds;
  score->add_option("--sens", score_sens, "Sensitivity CSV")->required();
  score->add_option("--monitors", score_monitors, "Monitor CSV")->required();
  score->add_option("--out", score_out, "Output directory")->required();
  score->add_option("--fit", score_fits, "label=DIR (repeatable)")
      ->required();
  score->add_option("--level", score_levels,
                    "Quantile level (repeatable; default 0.75/0.95/0.99/0.995)");
  score->add_option("--threshold", score_thresholds,
                    "Brier threshold ppb (repeatable; default 70..100)");

  // diagnose
  auto* diag = app.add_subcommand(
      "diagnose", "Residual pairs with normal and unit-Frechet margins");
  std::string diag_sens, diag_monitors, diag_fit, diag_out;
  diag->add_option("--sens", diag_sens, "Sensitivity CSV")->required();
  diag->add_option("--monitors", diag_monitors, "Monitor CSV")->required();
  diag->add_option("--fit", diag_fit, "Fit output directory")->required();
  diag->add_option("--out", diag_out, "Output directory")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_synth(synth_cfg, gen_out, gen_no_gpd, gen_alpha);
    }
    if (fit->parsed()) {
      fit_settings.use_gpd = !fit_no_gpd;
      if (!(fit_train_fraction > 0.0 && fit_train_fraction <= 1.0)) {
        throw input_error("--train-fraction must lie in (0,1]");
      }
      return cmd_fit(fit_sens, fit_monitors, fit_out, fit_settings,
                     fit_config, fit_train_fraction);
    }
    if (pred->parsed()) {
      return cmd_predict(pred_sens, pred_fit, pred_out, pred_eta, pred_scn,
                         pred_replicates, pred_kth, pred_thresholds,
                         pred_retain,
                         pred_phi >= 0.0 ? std::optional<double>(pred_phi)
                                         : std::nullopt,
                         pred_seed);
    }
    if (score->parsed()) {
      return cmd_score(score_sens, score_monitors, score_out, score_fits,
                       score_levels, score_thresholds);
    }
    if (diag->parsed()) {
      return cmd_diagnose(diag_sens, diag_monitors, diag_fit, diag_out);
    }
    std::cerr << "no subcommand given\n";
    return 2;
  } catch (const input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const numerical_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace ozcal::cli
