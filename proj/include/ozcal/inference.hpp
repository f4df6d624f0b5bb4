#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ozcal/dataset.hpp"
#include "ozcal/evt.hpp"
#include "ozcal/rfm.hpp"
#include "ozcal/rng.hpp"
#include "ozcal/spatial.hpp"

namespace ozcal::inference {

/// Model structure shared by fitting, prediction, and scoring.
struct ModelSettings {
  int basis_count = 1;   // L: 1 or even
  int poly_order = 2;    // M
  bool use_gpd = true;   // false pins the threshold level at 1 (no tail)
};

/// GP hyperparameters of every spatially varying coefficient process.
/// Process order: beta, theta_1..theta_L, sigma (sigma only with a tail).
struct GpHyperSet {
  std::vector<std::vector<double>> mean;      // [process][j]
  std::vector<std::vector<double>> variance;  // [process][j]
  double range = 50.0;                        // shared rho, km
};

/// One full parameter configuration: everything a single MCMC draw carries.
struct PosteriorState {
  rfm::PerturbationVector alpha;
  std::vector<evt::SiteCoeffs> site;  // one entry per monitor site
  evt::GlobalCoeffs global;
  GpHyperSet hyper;
};

struct McmcConfig {
  int iterations = 25000;
  int burn_in = 10000;
  double target_accept = 0.4;
  std::uint64_t seed = 1;
  // Proposal-scale adaptation, burn-in only: after every adapt_window
  // proposals of a block, log sd moves by adapt_rate * log(rate/target),
  // capped by a bound that shrinks with the batch count.
  int adapt_window = 25;
  double adapt_rate = 0.9;

  // Priors.
  double alpha_prior_sd = 0.5;       // N(0, sd^2) truncated to alpha > -1
  double coef_prior_sd = 100.0;      // c1, for global coefficients and means
  double hyper_var_shape = 0.1;      // c2 (Gamma shape on process variances)
  double hyper_var_rate = 0.1;       // c3 (Gamma rate)
  double log_range_prior_var = 10.0; // variance of N prior on log rho
  double thr_lower_min = 0.8;        // support of the lower threshold bound
};

/// Column naming and packing for posterior draws; the single source of truth
/// for the flattened parameter order used by files and the scenario engine.
class ParameterLayout {
 public:
  ParameterLayout(int n_inputs, int n_sites, ModelSettings settings);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  int n_inputs() const { return d_; }
  int n_sites() const { return n_sites_; }
  const ModelSettings& settings() const { return settings_; }
  int n_processes() const { return n_processes_; }

  void pack(const PosteriorState& state, std::span<double> out) const;
  void unpack(std::span<const double> row, PosteriorState& state) const;
  PosteriorState make_state() const;

  /// Index of a named column; throws input_error when absent.
  std::size_t index_of(const std::string& name) const;

 private:
  int d_ = 0;
  int n_sites_ = 0;
  ModelSettings settings_;
  int n_processes_ = 0;
  std::vector<std::string> names_;
};

/// Stage-one log likelihood: sum over records of the log conditional
/// density of y given the surrogate concentration at the record's cell.
/// Returns -inf when any record has zero density.
double log_likelihood(const PosteriorState& state, const MonitorDataset& data,
                      const rfm::SensitivityField& field,
                      const ModelSettings& settings);

/// One Gaussian random-walk Metropolis step on a scalar. cand_log_target
/// receives the proposed value and returns the (unnormalized) log target;
/// -inf always rejects. Consumes one normal draw, plus one uniform when the
/// decision is not forced either way.
struct MhStep {
  bool accepted = false;
  double value = 0.0;
  double log_target = 0.0;
  double accept_prob = 0.0;  // min(1, ratio); drives proposal adaptation
};
MhStep mh_step(double current, double current_log_target, double proposal_sd,
               const std::function<double(double)>& cand_log_target, Rng& rng);

struct BlockStats {
  std::string name;
  long proposals = 0;
  long accepts = 0;
  double proposal_sd = 0.0;

  double rate() const {
    return proposals > 0 ? static_cast<double>(accepts) / proposals : 0.0;
  }
};

struct ChainResult {
  ModelSettings settings;
  std::vector<std::string> names;       // layout column names
  std::vector<double> draws;            // row-major, n_draws x names.size()
  std::size_t n_draws = 0;
  std::vector<BlockStats> blocks;       // post-burn-in acceptance tracking
  std::vector<std::string> trace_names;
  std::vector<double> traces;           // row-major, iterations x trace cols

  std::span<const double> draw(std::size_t i) const {
    return {draws.data() + i * names.size(), names.size()};
  }
};

/// Stage one: one-at-a-time Metropolis-Hastings over alpha, the coefficient
/// processes, the GP hyperparameters, and the threshold bounds. Proposal
/// scales adapt toward the target acceptance during burn-in only.
ChainResult run_chain(const ModelSettings& settings, const McmcConfig& config,
                      const MonitorDataset& data,
                      const rfm::SensitivityField& field);

/// Posterior draws with their layout; wraps ChainResult rows or a loaded
/// posterior file.
class PosteriorDraws {
 public:
  PosteriorDraws(ParameterLayout layout, std::vector<double> rows,
                 std::size_t n_rows);

  const ParameterLayout& layout() const { return layout_; }
  std::size_t size() const { return n_rows_; }
  std::span<const double> row(std::size_t i) const {
    return {rows_.data() + i * layout_.size(), layout_.size()};
  }
  void state_at(std::size_t i, PosteriorState& state) const {
    layout_.unpack(row(i), state);
  }

  /// Columnwise mean unpacked into a state (plug-in posterior mean).
  PosteriorState mean_state() const;

 private:
  ParameterLayout layout_;
  std::vector<double> rows_;
  std::size_t n_rows_ = 0;
};

/// Stage two: AR(1) copula range from lag-1 correlation of the normal-score
/// residuals z = Phi^{-1}(F(y)) at the posterior mean parameters.
struct CopulaParams {
  double phi = 0.0;  // temporal range, days; 0 means independence
};

struct ResidualRow {
  int site = 0;
  int day = 0;
  double z = 0.0;
};

struct CopulaFit {
  CopulaParams params;
  double lag1_corr = 0.0;
  long n_pairs = 0;
  bool independence_fallback = false;
  std::vector<ResidualRow> residuals;
};

CopulaFit fit_copula(const PosteriorState& mean_state,
                     const MonitorDataset& data,
                     const rfm::SensitivityField& field,
                     const ModelSettings& settings);

/// phi solving corr = exp(-1/phi); requires 0 < corr < 1.
double phi_from_lag1(double corr);

/// Unit-Frechet transform of a standard-normal residual:
/// z_F = -1 / log(Phi(z)); strictly increasing, clamped at the extremes.
double frechet_transform(double z);

}  // namespace ozcal::inference
