#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ozcal/cli.hpp"
#include "ozcal/io.hpp"
#include "ozcal/synth.hpp"

using namespace ozcal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ozcal_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  fs::path operator/(const std::string& name) const { return path / name; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

synth::SynthConfig small_cfg() {
  synth::SynthConfig cfg;
  cfg.grid_nx = 4;
  cfg.grid_ny = 4;
  cfg.n_sites = 6;
  cfg.n_days = 10;
  cfg.n_inputs = 2;
  cfg.seed = 33;
  cfg.settings = {1, 1, true};
  return cfg;
}

}  // namespace

TEST_CASE("format_double shortest round trip") {
  for (const double v : {0.0, 1.0, -0.5, 1.0 / 3.0, 92.94627058970836,
                         1e-300, -1.7976931348623157e308}) {
    const std::string s = io::format_double(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("atomic writes never leave partial files") {
  TempDir dir;
  const fs::path target = dir / "out.txt";
  io::write_file_atomic(target, [](std::ostream& os) { os << "first\n"; });
  CHECK(slurp(target) == "first\n");
  // A failing writer leaves the previous content intact and no temp file.
  CHECK_THROWS_AS(io::write_file_atomic(
                      target,
                      [](std::ostream& os) {
                        os << "partial";
                        throw data_error("boom");
                      }),
                  data_error);
  CHECK(slurp(target) == "first\n");
  CHECK_FALSE(fs::exists(target.string() + ".tmp"));
}

TEST_CASE("sensitivity field round trips losslessly") {
  const auto world = synth::generate_synthetic(small_cfg());
  TempDir dir;
  io::save_sensitivity(dir / "s.csv", world.field);
  const auto loaded = io::load_sensitivity(dir / "s.csv");
  CHECK(loaded.n_days == world.field.n_days);
  CHECK(loaded.n_inputs == world.field.n_inputs);
  CHECK(loaded.base == world.field.base);
  CHECK(loaded.first_order == world.field.first_order);
  CHECK(loaded.second_diag == world.field.second_diag);
  CHECK(loaded.second_cross == world.field.second_cross);
  for (int c = 0; c < loaded.n_cells(); ++c) {
    CHECK(loaded.cells[c].x_km == world.field.cells[c].x_km);
    CHECK(loaded.cells[c].y_km == world.field.cells[c].y_km);
  }
  // Write-back is byte-identical.
  io::save_sensitivity(dir / "s2.csv", loaded);
  CHECK(slurp(dir / "s.csv") == slurp(dir / "s2.csv"));
}

TEST_CASE("monitor data round trips losslessly") {
  const auto world = synth::generate_synthetic(small_cfg());
  TempDir dir;
  io::save_monitors(dir / "m.csv", world.monitors);
  const auto loaded = io::load_monitors(dir / "m.csv");
  CHECK(loaded.records.size() == world.monitors.records.size());
  for (std::size_t i = 0; i < loaded.records.size(); ++i) {
    CHECK(loaded.records[i].day == world.monitors.records[i].day);
    CHECK(loaded.records[i].site == world.monitors.records[i].site);
    CHECK(loaded.records[i].value == world.monitors.records[i].value);
  }
  io::save_monitors(dir / "m2.csv", loaded);
  CHECK(slurp(dir / "m.csv") == slurp(dir / "m2.csv"));
}

TEST_CASE("monitor loader validates structure") {
  TempDir dir;
  const auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream out(dir / name);
    out << body;
    return dir / name;
  };
  // Header only: empty dataset, no error.
  const auto empty =
      io::load_monitors(write("e.csv", "day,site_id,x_km,y_km,cell_id,o3_ppb\n"));
  CHECK(empty.records.empty());
  CHECK(empty.sites.empty());
  // Duplicate (day, site).
  CHECK_THROWS_AS(
      io::load_monitors(write("d.csv",
                              "day,site_id,x_km,y_km,cell_id,o3_ppb\n"
                              "0,7,1,2,0,50\n0,7,1,2,0,51\n")),
      data_error);
  // Malformed number carries the line.
  try {
    io::load_monitors(write("b.csv",
                            "day,site_id,x_km,y_km,cell_id,o3_ppb\n"
                            "0,7,1,2,0,fifty\n"));
    CHECK(false);
  } catch (const data_error& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  // Negative concentration.
  CHECK_THROWS_AS(io::load_monitors(
                      write("n.csv", "day,site_id,x_km,y_km,cell_id,o3_ppb\n"
                                     "0,7,1,2,0,-3\n")),
                  data_error);
  // Inconsistent site metadata.
  CHECK_THROWS_AS(
      io::load_monitors(write("i.csv",
                              "day,site_id,x_km,y_km,cell_id,o3_ppb\n"
                              "0,7,1,2,0,50\n1,7,1,3,0,51\n")),
      data_error);
  // Wrong header.
  CHECK_THROWS_AS(io::load_monitors(write("h.csv", "day,site,o3\n0,1,2\n")),
                  data_error);
}

TEST_CASE("sensitivity loader validates coverage and duplicates") {
  const auto world = synth::generate_synthetic(small_cfg());
  TempDir dir;
  io::save_sensitivity(dir / "s.csv", world.field);
  const std::string good = slurp(dir / "s.csv");

  // Drop the last row: incomplete coverage.
  const auto cut = good.rfind('\n', good.size() - 2);
  {
    std::ofstream out(dir / "cut.csv", std::ios::binary);
    out << good.substr(0, cut + 1);
  }
  CHECK_THROWS_AS(io::load_sensitivity(dir / "cut.csv"), data_error);

  // Duplicate a row: duplicate (day, cell).
  const auto second_line_end = good.find('\n', good.find('\n') + 1);
  const std::string row =
      good.substr(good.find('\n') + 1, second_line_end - good.find('\n'));
  {
    std::ofstream out(dir / "dup.csv", std::ios::binary);
    out << good << row;
  }
  CHECK_THROWS_AS(io::load_sensitivity(dir / "dup.csv"), data_error);
}

TEST_CASE("posterior, state, manifest, copula and sites round trip") {
  TempDir dir;
  const inference::ModelSettings settings{1, 2, true};
  const inference::ParameterLayout layout(2, 3, settings);
  Rng rng(4);
  std::vector<double> rows(2 * layout.size());
  for (auto& v : rows) v = rng.uniform01();
  rows[layout.index_of("thr_l")] = 0.85;
  rows[layout.index_of("thr_u")] = 0.95;
  rows[layout.size() + layout.index_of("thr_l")] = 0.9;
  rows[layout.size() + layout.index_of("thr_u")] = 0.99;
  io::save_posterior(dir / "p.csv", layout.names(), rows, 2);
  const auto draws = io::load_posterior(dir / "p.csv", layout);
  CHECK(draws.size() == 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(draws.row(i / layout.size())[i % layout.size()] == rows[i]);
  }
  // Mismatched layout is rejected.
  const inference::ParameterLayout other(2, 4, settings);
  CHECK_THROWS_AS(io::load_posterior(dir / "p.csv", other), data_error);

  auto st = layout.make_state();
  draws.state_at(1, st);
  io::save_state(dir / "t.csv", layout, st);
  const auto st2 = io::load_state(dir / "t.csv", layout);
  std::vector<double> a(layout.size()), b(layout.size());
  layout.pack(st, a);
  layout.pack(st2, b);
  CHECK(a == b);

  const io::FitManifest m{2, 3, settings, 100, 40, 77, 0.5};
  io::save_manifest(dir / "manifest.txt", m);
  const auto m2 = io::load_manifest(dir / "manifest.txt");
  CHECK(m2.n_inputs == 2);
  CHECK(m2.n_sites == 3);
  CHECK(m2.settings.basis_count == 1);
  CHECK(m2.settings.poly_order == 2);
  CHECK(m2.settings.use_gpd);
  CHECK(m2.iterations == 100);
  CHECK(m2.burn_in == 40);
  CHECK(m2.seed == 77);
  CHECK(m2.train_fraction == 0.5);

  inference::CopulaFit fit;
  fit.params.phi = 1.75;
  fit.lag1_corr = std::exp(-1.0 / 1.75);
  fit.n_pairs = 123;
  io::save_copula(dir / "c.csv", fit);
  const auto fit2 = io::load_copula(dir / "c.csv");
  CHECK(fit2.params.phi == fit.params.phi);
  CHECK(fit2.lag1_corr == fit.lag1_corr);
  CHECK(fit2.n_pairs == 123);
  CHECK_FALSE(fit2.independence_fallback);

  const std::vector<MonitorSite> sites{{7, 1.5, 2.5, 3}, {9, 0.25, 8.0, 1}};
  io::save_sites(dir / "sites.csv", sites);
  const auto sites2 = io::load_sites(dir / "sites.csv");
  CHECK(sites2.size() == 2);
  CHECK(sites2[1].id == 9);
  CHECK(sites2[1].x_km == 0.25);
  CHECK(sites2[0].cell == 3);
}

TEST_CASE("generator is deterministic and respects support constraints") {
  const auto a = synth::generate_synthetic(small_cfg());
  const auto b = synth::generate_synthetic(small_cfg());
  CHECK(a.field.base == b.field.base);
  CHECK(a.monitors.records.size() == b.monitors.records.size());
  for (std::size_t i = 0; i < a.monitors.records.size(); ++i) {
    CHECK(a.monitors.records[i].value == b.monitors.records[i].value);
  }
  // Every generated observation has positive density under the truth.
  const evt::QuantileBasis basis(small_cfg().settings.basis_count);
  const auto c = record_concentrations(a.field, a.monitors,
                                       a.truth.state.alpha.values);
  for (std::size_t i = 0; i < a.monitors.records.size(); ++i) {
    const auto& r = a.monitors.records[i];
    const auto dist = evt::resolve(a.truth.state.site[r.site],
                                   a.truth.state.global, basis, c[i]);
    CHECK(dist.density(r.value) > 0.0);
    CHECK(r.value >= 0.0);
  }
}

TEST_CASE("gaussian truth with flat coefficients matches site moments") {
  // T = 1, L = 1, constant coefficients: y ~ N(beta, theta^2) exactly.
  synth::SynthConfig cfg = small_cfg();
  cfg.settings = {1, 1, false};
  cfg.n_days = 4000;  // long season for tight moments
  cfg.n_sites = 3;
  cfg.phi = 0.0;
  const inference::ParameterLayout layout(cfg.n_inputs, cfg.n_sites,
                                          cfg.settings);
  const auto world = synth::generate_synthetic(cfg);

  auto truth = world.truth.state;
  for (auto& sc : truth.site) {
    sc.a_beta = {60.0, 0.0};
    sc.a_theta[0] = {std::log(5.0), 0.0};
  }
  const auto data = synth::simulate_observations(
      world.field, world.monitors.sites, truth, 0.0, cfg.settings, 4242);
  for (int s = 0; s < data.n_sites(); ++s) {
    const auto [begin, end] = data.site_ranges[s];
    double sum = 0, sumsq = 0;
    for (std::size_t i = begin; i < end; ++i) {
      sum += data.records[i].value;
      sumsq += data.records[i].value * data.records[i].value;
    }
    const double n = static_cast<double>(end - begin);
    const double mean = sum / n;
    const double sd = std::sqrt(sumsq / n - mean * mean);
    CHECK(mean == doctest::Approx(60.0).epsilon(0.01));
    CHECK(sd == doctest::Approx(5.0).epsilon(0.05));
  }
}

TEST_CASE("cli pipeline smoke: every command runs and is reproducible") {
  TempDir root;
  const auto run = [&](std::vector<std::string> args) {
    return cli::dispatch(args);
  };
  const std::string synth_a = (root / "synth_a").string();
  const std::string synth_b = (root / "synth_b").string();
  const std::vector<std::string> gen_args{
      "gen-synth", "--seed", "5",  "--sites", "6",    "--days", "10",
      "--grid-nx", "4",      "--grid-ny", "4", "--inputs", "2",
      "--L", "1", "--M", "1"};
  auto ga = gen_args;
  ga.push_back("--out");
  ga.push_back(synth_a);
  auto gb = gen_args;
  gb.push_back("--out");
  gb.push_back(synth_b);
  REQUIRE(run(ga) == 0);
  REQUIRE(run(gb) == 0);
  for (const std::string f : {"sensitivity.csv", "monitors.csv", "truth.csv",
                              "synth.txt"}) {
    CHECK(slurp(root / ("synth_a/" + f)) == slurp(root / ("synth_b/" + f)));
  }

  const std::string sens = synth_a + "/sensitivity.csv";
  const std::string mons = synth_a + "/monitors.csv";
  const std::string fit_a = (root / "fit_a").string();
  const std::string fit_b = (root / "fit_b").string();
  for (const auto& out : {fit_a, fit_b}) {
    REQUIRE(run({"fit", "--sens", sens, "--monitors", mons, "--out", out,
                 "--L", "1", "--M", "1", "--iterations", "60", "--burn-in",
                 "30", "--seed", "3", "--train-fraction", "0.5"}) == 0);
  }
  for (const std::string f :
       {"posterior.csv", "diagnostics.csv", "trace.csv", "copula.csv",
        "sites.csv", "manifest.txt"}) {
    CHECK(slurp(root / ("fit_a/" + f)) == slurp(root / ("fit_b/" + f)));
  }
  // Row-count contract: one posterior row per retained iteration.
  const std::string posterior = slurp(root / "fit_a/posterior.csv");
  CHECK(std::count(posterior.begin(), posterior.end(), '\n') == 30 + 1);

  const std::string pred_a = (root / "pred_a").string();
  const std::string pred_b = (root / "pred_b").string();
  for (const auto& out : {pred_a, pred_b}) {
    REQUIRE(run({"predict", "--sens", sens, "--fit", fit_a, "--out", out,
                 "--eta", "S0=0,0", "--eta", "S1=-0.5,0", "--replicates",
                 "5", "--kth", "2", "--threshold", "75", "--seed", "9"}) == 0);
  }
  for (const std::string f : {"scenario_S0.csv", "scenario_S1.csv",
                              "diff_S0_vs_S1.csv"}) {
    CHECK(slurp(root / ("pred_a/" + f)) == slurp(root / ("pred_b/" + f)));
  }

  const std::string score_a = (root / "score_a").string();
  const std::string score_b = (root / "score_b").string();
  for (const auto& out : {score_a, score_b}) {
    REQUIRE(run({"score", "--sens", sens, "--monitors", mons, "--out", out,
                 "--fit", "gpd=" + fit_a}) == 0);
  }
  CHECK(slurp(root / "score_a/scores.csv") == slurp(root / "score_b/scores.csv"));

  const std::string diag_a = (root / "diag_a").string();
  const std::string diag_b = (root / "diag_b").string();
  for (const auto& out : {diag_a, diag_b}) {
    REQUIRE(run({"diagnose", "--sens", sens, "--monitors", mons, "--fit",
                 fit_a, "--out", out}) == 0);
  }
  CHECK(slurp(root / "diag_a/residual_pairs.csv") ==
        slurp(root / "diag_b/residual_pairs.csv"));

  // Exit codes: usage, data, and missing files.
  CHECK(run({"fit", "--bogus-flag"}) == 2);
  CHECK(run({"score", "--sens", sens, "--monitors", mons, "--out",
             (root / "x").string(), "--fit", "nolabel"}) == 2);
  CHECK(run({"fit", "--sens", (root / "absent.csv").string(), "--monitors",
             mons, "--out", (root / "y").string()}) == 3);
  CHECK(run({}) == 2);
}

TEST_CASE("scenario files and config files drive predict") {
  TempDir root;
  const std::string synth_dir = (root / "s").string();
  REQUIRE(cli::dispatch({"gen-synth", "--seed", "5", "--sites", "5", "--days",
                         "8", "--grid-nx", "3", "--grid-ny", "3", "--inputs",
                         "2", "--L", "1", "--M", "1", "--out", synth_dir}) ==
          0);
  const std::string fit_dir = (root / "f").string();
  REQUIRE(cli::dispatch({"fit", "--sens", synth_dir + "/sensitivity.csv",
                         "--monitors", synth_dir + "/monitors.csv", "--out",
                         fit_dir, "--L", "1", "--M", "1", "--iterations",
                         "40", "--burn-in", "20", "--seed", "2"}) == 0);
  {
    std::ofstream scn(root / "control.scn");
    scn << "# halve the first input\n"
        << "name=half\n"
        << "eta=-0.5,0\n";
  }
  const std::string out = (root / "p").string();
  REQUIRE(cli::dispatch({"predict", "--sens", synth_dir + "/sensitivity.csv",
                         "--fit", fit_dir, "--out", out, "--scenario",
                         (root / "control.scn").string(), "--replicates", "3",
                         "--kth", "1", "--retain-draws", "--seed", "1"}) == 0);
  CHECK(fs::exists(fs::path(out) / "scenario_half.csv"));
  // Retained order statistics: replicates x cells rows plus a header.
  const std::string raw = slurp(fs::path(out) / "scenario_half_draws.csv");
  CHECK(std::count(raw.begin(), raw.end(), '\n') == 3 * 9 + 1);
}
