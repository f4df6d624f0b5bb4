#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ozcal/evt.hpp"
#include "ozcal/inference.hpp"
#include "ozcal/rfm.hpp"
#include "ozcal/rng.hpp"
#include "ozcal/spatial.hpp"

namespace ozcal::predict {

/// Control strategy: fractional emission changes applied on top of the
/// calibrated perturbation, plus replicate and summary settings.
struct ScenarioSpec {
  std::string name = "S0";
  std::vector<double> eta;
  int replicates = 10000;
  int order_statistic = 4;  // k-th largest value of the simulated season
  std::vector<double> thresholds{75.0};
  bool retain_draws = false;  // keep raw order statistics (small runs only)
};

/// Per-cell summaries over replicates.
struct ScenarioSummary {
  std::string name;
  int replicates = 0;
  int order_statistic = 4;
  std::vector<double> thresholds;
  std::vector<double> mean_kth;               // per cell
  std::vector<std::vector<double>> p_exceed;  // [threshold][cell]
  std::vector<double> raw_kth;                // replicate-major when retained
  // The surrogate polynomial is not clipped at zero; negative values are
  // counted and surfaced, never silently truncated.
  long negative_concentrations = 0;
};

/// k-th largest of values (k = 1 is the maximum).
double kth_largest(std::span<const double> values, int k);

/// Fraction of replicate statistics strictly above the threshold.
double exceedance_probability(std::span<const double> statistics,
                              double threshold);

/// Zero-mean unit-variance AR(1) series with lag-h correlation exp(-h/phi);
/// phi <= 0 yields independent draws.
void ar1_normal_scores(double phi, Rng& rng, std::span<double> out);

/// y_t = quantile(Phi(z_t) | C_t) for a given latent normal path; the
/// marginal of y_t is exactly the conditional distribution at C_t.
void transform_normal_scores(std::span<const double> c_series,
                             const evt::SiteCoeffs& site,
                             const evt::GlobalCoeffs& global,
                             const evt::QuantileBasis& basis,
                             std::span<const double> z, std::span<double> out);

/// One simulated season at a single location.
void simulate_site_year(std::span<const double> c_series,
                        const evt::SiteCoeffs& site,
                        const evt::GlobalCoeffs& global,
                        const evt::QuantileBasis& basis, double phi, Rng& rng,
                        std::span<double> out);

/// Test/inspection hook invoked once per replicate with the perturbation
/// actually used and the evaluated concentration field.
using ReplicateObserver = std::function<void(
    int replicate, std::size_t draw_index, const rfm::PerturbationVector& alpha_star,
    std::span<const double> c_field)>;

/// Posterior-predictive scenario run. Per replicate: sample a posterior
/// draw, interpolate the site-varying coefficients to the grid cells,
/// compose the control strategy with the drawn calibration, evaluate the
/// field, and simulate one season per cell through the AR(1) copula.
/// Substreams are derived from (seed, scenario name, replicate, cell).
ScenarioSummary run_scenario(const ScenarioSpec& spec,
                             const inference::PosteriorDraws& draws,
                             const rfm::SensitivityField& field,
                             std::span<const spatial::Point> site_locations,
                             double phi, std::uint64_t seed,
                             const ReplicateObserver& observer = {});

}  // namespace ozcal::predict
