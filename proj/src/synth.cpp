#include "ozcal/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "ozcal/predict.hpp"
#include "ozcal/spatial.hpp"

namespace ozcal::synth {

namespace {

constexpr double kPi = 3.141592653589793;

/// One zero-mean unit-variance draw of an exponential-correlation GP over
/// the given points.
std::vector<double> gp_draw(const std::vector<spatial::Point>& pts,
                            double range, Rng& rng) {
  Eigen::MatrixXd r = spatial::exp_correlation(pts, pts, range);
  r.diagonal().array() += spatial::kJitter;
  const Eigen::LLT<Eigen::MatrixXd> llt(r);
  if (llt.info() != Eigen::Success) {
    throw numerical_error("synthetic GP draw: Cholesky failed");
  }
  Eigen::VectorXd z(static_cast<Eigen::Index>(pts.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  const Eigen::VectorXd v = Eigen::MatrixXd(llt.matrixL()) * z;
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<double> default_alpha(int d) {
  std::vector<double> a(d);
  for (int j = 0; j < d; ++j) {
    const double magnitude = 0.08 + 0.03 * (j % 4);
    a[j] = (j % 2 == 0 ? -1.0 : 1.0) * magnitude;
  }
  return a;
}

/// Truth GP hyperparameters per process; patterns cover intercept, linear,
/// and higher covariate coefficients.
void truth_hypers(const inference::ModelSettings& s, double tail_xi,
                  inference::GpHyperSet& hyper,
                  std::vector<double>& a_xi, std::vector<double>& a_d) {
  const int M = s.poly_order;
  const int L = s.basis_count;
  const int P = L + 1 + (s.use_gpd ? 1 : 0);
  const auto fill = [&](std::vector<double>& v, double j0, double j1,
                        double j2) {
    v.assign(M + 1, 0.0);
    v[0] = j0;
    if (M >= 1) v[1] = j1;
    if (M >= 2) v[2] = j2;
  };
  hyper.mean.assign(P, {});
  hyper.variance.assign(P, {});
  fill(hyper.mean[0], 50.0, 15.0, 0.3);
  fill(hyper.variance[0], 9.0, 0.5, 0.01);
  for (int l = 1; l <= L; ++l) {
    fill(hyper.mean[l], std::log(5.0), 0.12, 0.02);
    fill(hyper.variance[l], 0.02, 0.004, 0.001);
  }
  if (s.use_gpd) {
    fill(hyper.mean[L + 1], std::log(3.0), 0.1, 0.0);
    fill(hyper.variance[L + 1], 0.02, 0.004, 0.001);
  }
  fill(a_xi, tail_xi, 0.04, 0.0);
  fill(a_d, 0.4, 0.3, 0.0);
}

}  // namespace

MonitorDataset simulate_observations(const rfm::SensitivityField& field,
                                     std::vector<MonitorSite> sites,
                                     const inference::PosteriorState& truth,
                                     double phi,
                                     const inference::ModelSettings& settings,
                                     std::uint64_t seed) {
  field.validate();
  const evt::QuantileBasis basis(settings.basis_count);
  const int n_days = field.n_days;
  MonitorDataset data;
  data.sites = std::move(sites);
  std::vector<double> c_series(n_days), y(n_days);
  const std::vector<double> c_field =
      rfm::evaluate_rfm_field(field, truth.alpha);
  for (int s = 0; s < data.n_sites(); ++s) {
    for (int t = 0; t < n_days; ++t) {
      c_series[t] = c_field[field.index(t, data.sites[s].cell)];
    }
    Rng rng(derive_seed(seed, "obs", static_cast<std::uint64_t>(s)));
    predict::simulate_site_year(c_series, truth.site[s], truth.global, basis,
                                phi, rng, y);
    for (int t = 0; t < n_days; ++t) {
      data.records.push_back({t, s, std::max(y[t], 0.0)});
    }
  }
  data.reindex();
  data.link_to_field(field);
  return data;
}

SyntheticData generate_synthetic(const SynthConfig& config) {
  if (config.grid_nx < 2 || config.grid_ny < 2 || config.n_sites < 2 ||
      config.n_days < 2 || config.n_inputs < 1) {
    throw input_error("synthetic geometry too small");
  }
  const int d = config.n_inputs;
  const int nx = config.grid_nx;
  const int ny = config.grid_ny;
  const int n_cells = nx * ny;
  const int n_days = config.n_days;
  const double width = nx * config.cell_km;
  const double height = ny * config.cell_km;

  SyntheticData out;
  auto& field = out.field;
  field.n_days = n_days;
  field.n_inputs = d;
  field.cells.resize(n_cells);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      field.cells[iy * nx + ix] = {(ix + 0.5) * config.cell_km,
                                   (iy + 0.5) * config.cell_km};
    }
  }
  for (int j = 1; j <= d; ++j) {
    field.input_names.push_back("p" + std::to_string(j));
  }

  std::vector<spatial::Point> cell_pts(n_cells);
  for (int c = 0; c < n_cells; ++c) {
    cell_pts[c] = {field.cells[c].x_km, field.cells[c].y_km};
  }
  const double field_range = 0.3 * std::max(width, height);

  // Base concentrations: spatial trend, a seasonal bump, and a slowly
  // varying synoptic signal with spatially varying loading.
  Rng field_rng(derive_seed(config.seed, "field"));
  const auto g0 = gp_draw(cell_pts, field_range, field_rng);
  const auto g1 = gp_draw(cell_pts, field_range, field_rng);
  std::vector<double> synoptic(n_days);
  predict::ar1_normal_scores(5.0, field_rng, synoptic);
  const std::size_t n = static_cast<std::size_t>(n_days) * n_cells;
  field.base.resize(n);
  for (int t = 0; t < n_days; ++t) {
    const double season = std::sin(kPi * (t + 0.5) / n_days);
    for (int c = 0; c < n_cells; ++c) {
      field.base[field.index(t, c)] = 47.0 + 9.0 * g0[c] + 6.0 * season +
                                      (3.5 + 1.5 * g1[c]) * synoptic[t];
    }
  }

  // Sensitivities: per-input magnitude with smooth spatial modulation deep
  // enough to flip sign locally, plus day-to-day synoptic modulation per
  // input. The daily variation matters: a time-constant concentration shift
  // is absorbable by the per-site covariate links, so it is the within-site
  // day-to-day structure that identifies the perturbations.
  field.first_order.assign(d, std::vector<double>(n));
  field.second_diag.assign(d, std::vector<double>(n));
  field.second_cross.assign(d * (d - 1) / 2, std::vector<double>(n));
  for (int j = 0; j < d; ++j) {
    Rng rng(derive_seed(config.seed, "sens", static_cast<std::uint64_t>(j)));
    const double magnitude = 2.5 + 0.8 * (j % 5) + rng.uniform01();
    const double sign = (j % 3 == 2) ? -1.0 : 1.0;
    const double phase = 2.0 * kPi * rng.uniform01();
    const auto h = gp_draw(cell_pts, field_range, rng);
    const auto h2 = gp_draw(cell_pts, field_range, rng);
    std::vector<double> daily(n_days);
    predict::ar1_normal_scores(4.0, rng, daily);
    for (int t = 0; t < n_days; ++t) {
      const double season =
          1.0 + 0.2 * std::sin(kPi * (t + 0.5) / n_days + phase) +
          0.45 * daily[t];
      for (int c = 0; c < n_cells; ++c) {
        const std::size_t i = field.index(t, c);
        const double s1 = sign * magnitude * (1.0 + 0.6 * h[c]) * season;
        field.first_order[j][i] = s1;
        field.second_diag[j][i] = -0.3 * s1 * (1.0 + 0.4 * h2[c]);
      }
    }
  }
  {
    Rng rng(derive_seed(config.seed, "cross"));
    for (int l = 0; l < d; ++l) {
      for (int j = l + 1; j < d; ++j) {
        const int p = rfm::SensitivityField::cross_index(l, j, d);
        const double w = 0.3 * (2.0 * rng.uniform01() - 1.0);
        for (std::size_t i = 0; i < n; ++i) {
          field.second_cross[p][i] =
              w * 0.5 *
              (field.first_order[l][i] + field.first_order[j][i]);
        }
      }
    }
  }
  field.validate();

  // Monitor sites: uniform over the domain, mapped to containing cells.
  std::vector<MonitorSite> sites(config.n_sites);
  {
    Rng rng(derive_seed(config.seed, "sites"));
    for (int s = 0; s < config.n_sites; ++s) {
      const double x = rng.uniform01() * width;
      const double y = rng.uniform01() * height;
      const int ix = std::min(static_cast<int>(x / config.cell_km), nx - 1);
      const int iy = std::min(static_cast<int>(y / config.cell_km), ny - 1);
      sites[s] = {s, x, y, iy * nx + ix};
    }
  }

  // Truth state: coefficient surfaces drawn from their GP priors.
  const inference::ParameterLayout layout(d, config.n_sites, config.settings);
  auto& truth = out.truth.state;
  truth = layout.make_state();
  truth.alpha.values =
      config.alpha.empty() ? default_alpha(d) : config.alpha;
  if (truth.alpha.values.size() != static_cast<std::size_t>(d)) {
    throw input_error("truth alpha length does not match inputs");
  }
  truth_hypers(config.settings, config.tail_xi, truth.hyper,
               truth.global.a_xi, truth.global.a_d);
  truth.hyper.range = 0.25 * std::max(width, height);
  if (config.settings.use_gpd) {
    truth.global.thr_lower = config.thr_lower;
    truth.global.thr_upper = config.thr_upper;
  }
  std::vector<spatial::Point> site_pts(sites.size());
  for (std::size_t s = 0; s < sites.size(); ++s) {
    site_pts[s] = {sites[s].x_km, sites[s].y_km};
  }
  {
    Rng rng(derive_seed(config.seed, "coeff"));
    const int P = static_cast<int>(truth.hyper.mean.size());
    for (int k = 0; k < P; ++k) {
      for (int j = 0; j <= config.settings.poly_order; ++j) {
        const auto u = gp_draw(site_pts, truth.hyper.range, rng);
        const double mean = truth.hyper.mean[k][j];
        const double sd = std::sqrt(truth.hyper.variance[k][j]);
        for (int s = 0; s < config.n_sites; ++s) {
          auto& sc = truth.site[s];
          const double v = mean + sd * u[s];
          if (k == 0) {
            sc.a_beta[j] = v;
          } else if (k <= config.settings.basis_count) {
            sc.a_theta[k - 1][j] = v;
          } else {
            sc.a_sigma[j] = v;
          }
        }
      }
    }
  }

  out.truth.phi = config.phi;
  out.monitors = simulate_observations(field, sites, truth, config.phi,
                                       config.settings,
                                       derive_seed(config.seed, "monitors"));
  return out;
}

}  // namespace ozcal::synth
