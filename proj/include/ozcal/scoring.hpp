#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ozcal/dataset.hpp"
#include "ozcal/inference.hpp"
#include "ozcal/rfm.hpp"

namespace ozcal::scoring {

/// Pinball score 2 (I[y < qhat] - tau) (qhat - y); nonnegative, 0 at y = qhat.
double quantile_score(double y, double qhat, double tau);

/// (I[y > threshold] - p_exceed)^2 in [0, 1].
double brier_score(double y, double p_exceed, double threshold);

/// Record-level random partition; sites are shared by both halves so site
/// indices stay aligned with fitted parameters. train gets
/// round(train_fraction * n) records.
std::pair<MonitorDataset, MonitorDataset> split_train_test(
    const MonitorDataset& data, double train_fraction, std::uint64_t seed);

inline const std::vector<double> kDefaultLevels{0.75, 0.95, 0.99, 0.995};
inline const std::vector<double> kDefaultThresholds{70, 75, 80, 85, 90, 95, 100};

/// Holdout scores for one model: mean quantile scores by level and mean
/// Brier scores (x100) by threshold.
struct ScoreReport {
  std::string label;
  std::vector<double> levels;
  std::vector<double> quantile_scores;
  std::vector<double> thresholds;
  std::vector<double> brier_scores_x100;
  std::size_t test_size = 0;
  bool degenerate_fallback = false;  // SLR only: some site lacked a slope fit
};

/// Plug-in predictive scoring at the posterior mean parameters:
/// qhat(tau) = conditional quantile, P(c) = 1 - conditional CDF.
ScoreReport score_model(const std::string& label,
                        const inference::PosteriorState& mean_state,
                        const inference::ModelSettings& settings,
                        const MonitorDataset& test,
                        const rfm::SensitivityField& field,
                        std::span<const double> levels,
                        std::span<const double> thresholds);

/// Site-wise linear regression baseline a(s) + b(s) C0: the fitted value is
/// the prediction at every quantile level and exceedance is its indicator.
/// Sites with fewer than two training records (or constant C0) fall back to
/// an intercept-only fit and flag the report.
ScoreReport slr_baseline(const MonitorDataset& train,
                         const MonitorDataset& test,
                         const rfm::SensitivityField& field,
                         std::span<const double> levels,
                         std::span<const double> thresholds);

}  // namespace ozcal::scoring
