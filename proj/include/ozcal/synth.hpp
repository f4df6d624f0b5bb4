#pragma once

#include <cstdint>
#include <vector>

#include "ozcal/dataset.hpp"
#include "ozcal/inference.hpp"
#include "ozcal/rfm.hpp"

namespace ozcal::synth {

/// Desk-scale synthetic world: geometry, model structure, and the knobs
/// that matter for recovery experiments.
struct SynthConfig {
  int grid_nx = 20;
  int grid_ny = 20;
  double cell_km = 12.0;
  int n_sites = 50;
  int n_days = 92;
  int n_inputs = 6;
  std::uint64_t seed = 1;

  inference::ModelSettings settings{1, 2, true};
  double phi = 2.0;          // AR(1) copula range, days
  double tail_xi = 0.08;     // shape intercept of the generating tail
  double thr_lower = 0.85;   // threshold bounds of the generating model
  double thr_upper = 0.95;
  std::vector<double> alpha; // empty -> built-in alternating pattern
};

struct SyntheticTruth {
  inference::PosteriorState state;
  double phi = 2.0;
};

struct SyntheticData {
  rfm::SensitivityField field;
  MonitorDataset monitors;
  SyntheticTruth truth;
};

/// Draws observations at the monitor sites from a given parameter state:
/// one AR(1)-copula season per site, transformed through the conditional
/// quantile function at the site's cell concentrations.
MonitorDataset simulate_observations(const rfm::SensitivityField& field,
                                     std::vector<MonitorSite> sites,
                                     const inference::PosteriorState& truth,
                                     double phi,
                                     const inference::ModelSettings& settings,
                                     std::uint64_t seed);

/// Smooth random sensitivity fields (low-order trends plus correlated
/// noise), GP-distributed coefficient surfaces, and observations simulated
/// under the generated truth. Deterministic in the seed.
SyntheticData generate_synthetic(const SynthConfig& config);

}  // namespace ozcal::synth
