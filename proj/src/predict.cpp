#include "ozcal/predict.hpp"

#include <algorithm>
#include <cmath>

#include "ozcal/normal.hpp"

namespace ozcal::predict {

double kth_largest(std::span<const double> values, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > values.size()) {
    throw input_error("kth_largest: k outside [1, n]");
  }
  std::vector<double> v(values.begin(), values.end());
  std::nth_element(v.begin(), v.begin() + (k - 1), v.end(),
                   std::greater<double>());
  return v[k - 1];
}

double exceedance_probability(std::span<const double> statistics,
                              double threshold) {
  if (statistics.empty()) {
    throw input_error("exceedance_probability: empty statistics");
  }
  std::size_t above = 0;
  for (const double s : statistics) {
    if (s > threshold) ++above;
  }
  return static_cast<double>(above) / static_cast<double>(statistics.size());
}

void ar1_normal_scores(double phi, Rng& rng, std::span<double> out) {
  if (out.empty()) return;
  const double r = phi > 0.0 ? std::exp(-1.0 / phi) : 0.0;
  const double innovation_sd = std::sqrt(1.0 - r * r);
  out[0] = rng.normal();
  for (std::size_t t = 1; t < out.size(); ++t) {
    out[t] = r * out[t - 1] + innovation_sd * rng.normal();
  }
}

void transform_normal_scores(std::span<const double> c_series,
                             const evt::SiteCoeffs& site,
                             const evt::GlobalCoeffs& global,
                             const evt::QuantileBasis& basis,
                             std::span<const double> z,
                             std::span<double> out) {
  if (z.size() != c_series.size() || out.size() != c_series.size()) {
    throw input_error("transform_normal_scores: length mismatch");
  }
  for (std::size_t t = 0; t < c_series.size(); ++t) {
    const auto dist = evt::resolve(site, global, basis, c_series[t]);
    const double tau =
        std::clamp(norm_cdf(z[t]), evt::kTauClamp, 1.0 - evt::kTauClamp);
    out[t] = dist.quantile(tau);
  }
}

void simulate_site_year(std::span<const double> c_series,
                        const evt::SiteCoeffs& site,
                        const evt::GlobalCoeffs& global,
                        const evt::QuantileBasis& basis, double phi, Rng& rng,
                        std::span<double> out) {
  std::vector<double> z(c_series.size());
  ar1_normal_scores(phi, rng, z);
  transform_normal_scores(c_series, site, global, basis, z, out);
}

ScenarioSummary run_scenario(const ScenarioSpec& spec,
                             const inference::PosteriorDraws& draws,
                             const rfm::SensitivityField& field,
                             std::span<const spatial::Point> site_locations,
                             double phi, std::uint64_t seed,
                             const ReplicateObserver& observer) {
  field.validate();
  if (spec.eta.size() != static_cast<std::size_t>(field.n_inputs)) {
    throw input_error("scenario control vector length does not match inputs");
  }
  if (spec.replicates < 1) throw input_error("replicates must be >= 1");
  const auto& layout = draws.layout();
  if (static_cast<std::size_t>(layout.n_sites()) != site_locations.size()) {
    throw input_error("site location count does not match posterior layout");
  }
  const int n_cells = field.n_cells();
  const int n_days = field.n_days;
  const int n_thr = static_cast<int>(spec.thresholds.size());
  const inference::ModelSettings settings = layout.settings();
  const evt::QuantileBasis basis(settings.basis_count);
  const int n_proc = layout.n_processes();
  const int M = settings.poly_order;

  std::vector<spatial::Point> targets(n_cells);
  for (int c = 0; c < n_cells; ++c) {
    targets[c] = {field.cells[c].x_km, field.cells[c].y_km};
  }

  ScenarioSummary summary;
  summary.name = spec.name;
  summary.replicates = spec.replicates;
  summary.order_statistic = spec.order_statistic;
  summary.thresholds = spec.thresholds;
  summary.mean_kth.assign(n_cells, 0.0);
  summary.p_exceed.assign(n_thr, std::vector<double>(n_cells, 0.0));
  if (spec.retain_draws) {
    summary.raw_kth.reserve(static_cast<std::size_t>(spec.replicates) *
                            n_cells);
  }
  if (spec.order_statistic < 1 || spec.order_statistic > n_days) {
    throw input_error("order statistic outside the season length");
  }

  inference::PosteriorState state = layout.make_state();
  std::vector<double> observed(site_locations.size());
  // Cell-resolved coefficient draws: [process][j] over cells.
  std::vector<std::vector<std::vector<double>>> cell_coeff(
      n_proc, std::vector<std::vector<double>>(M + 1));
  evt::SiteCoeffs cell_site;
  cell_site.a_beta.assign(M + 1, 0.0);
  cell_site.a_theta.assign(settings.basis_count,
                           std::vector<double>(M + 1, 0.0));
  cell_site.a_sigma.assign(M + 1, 0.0);

  std::vector<double> c_field;
  std::vector<double> c_series(n_days);
  std::vector<double> y_season(n_days);

  for (int rep = 0; rep < spec.replicates; ++rep) {
    Rng rep_rng(derive_seed(seed, "scenario:" + spec.name,
                            static_cast<std::uint64_t>(rep)));
    const std::size_t draw_index = rep_rng.uniform_index(draws.size());
    draws.state_at(draw_index, state);

    // All coefficient processes share the drawn range.
    const spatial::Interpolator interp(site_locations, targets,
                                       state.hyper.range);
    for (int k = 0; k < n_proc; ++k) {
      for (int j = 0; j <= M; ++j) {
        for (std::size_t s = 0; s < site_locations.size(); ++s) {
          const auto& sc = state.site[s];
          observed[s] = (k == 0)
                            ? sc.a_beta[j]
                            : (k <= settings.basis_count
                                   ? sc.a_theta[k - 1][j]
                                   : sc.a_sigma[j]);
        }
        cell_coeff[k][j] =
            interp.draw(observed, state.hyper.mean[k][j],
                        state.hyper.variance[k][j], rep_rng);
      }
    }

    const rfm::PerturbationVector alpha_star =
        rfm::compose_perturbation(state.alpha, spec.eta);
    c_field.resize(field.n_values());
    rfm::evaluate_rfm_field(field, alpha_star.values, c_field);
    for (const double v : c_field) {
      if (v < 0.0) ++summary.negative_concentrations;
    }
    if (observer) observer(rep, draw_index, alpha_star, c_field);

    for (int cell = 0; cell < n_cells; ++cell) {
      for (int k = 0; k < n_proc; ++k) {
        for (int j = 0; j <= M; ++j) {
          const double v = cell_coeff[k][j][cell];
          if (k == 0) {
            cell_site.a_beta[j] = v;
          } else if (k <= settings.basis_count) {
            cell_site.a_theta[k - 1][j] = v;
          } else {
            cell_site.a_sigma[j] = v;
          }
        }
      }
      for (int t = 0; t < n_days; ++t) {
        c_series[t] = c_field[field.index(t, cell)];
      }
      Rng cell_rng(derive_seed(seed, "scenario:" + spec.name,
                               static_cast<std::uint64_t>(rep),
                               static_cast<std::uint64_t>(cell)));
      simulate_site_year(c_series, cell_site, state.global, basis, phi,
                         cell_rng, y_season);
      const double stat = kth_largest(y_season, spec.order_statistic);
      summary.mean_kth[cell] += stat;
      for (int h = 0; h < n_thr; ++h) {
        if (stat > spec.thresholds[h]) summary.p_exceed[h][cell] += 1.0;
      }
      if (spec.retain_draws) summary.raw_kth.push_back(stat);
    }
  }

  const double r = static_cast<double>(spec.replicates);
  for (int cell = 0; cell < n_cells; ++cell) summary.mean_kth[cell] /= r;
  for (int h = 0; h < n_thr; ++h) {
    for (int cell = 0; cell < n_cells; ++cell) summary.p_exceed[h][cell] /= r;
  }
  return summary;
}

}  // namespace ozcal::predict
