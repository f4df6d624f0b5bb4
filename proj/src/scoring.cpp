#include "ozcal/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ozcal/evt.hpp"
#include "ozcal/rng.hpp"

namespace ozcal::scoring {

double quantile_score(double y, double qhat, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw input_error("quantile level must lie in (0,1)");
  }
  const double indicator = y < qhat ? 1.0 : 0.0;
  return 2.0 * (indicator - tau) * (qhat - y);
}

double brier_score(double y, double p_exceed, double threshold) {
  if (!(p_exceed >= 0.0 && p_exceed <= 1.0)) {
    throw input_error("exceedance probability outside [0,1]");
  }
  const double e = y > threshold ? 1.0 : 0.0;
  const double diff = e - p_exceed;
  return diff * diff;
}

std::pair<MonitorDataset, MonitorDataset> split_train_test(
    const MonitorDataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw input_error("train fraction must lie in (0,1)");
  }
  const std::size_t n = data.records.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  // Fisher-Yates with the pinned index draw.
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  const std::size_t n_train =
      static_cast<std::size_t>(std::llround(train_fraction * n));
  MonitorDataset train, test;
  train.sites = data.sites;
  test.sites = data.sites;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? train : test).records.push_back(data.records[order[i]]);
  }
  train.reindex();
  test.reindex();
  return {std::move(train), std::move(test)};
}

namespace {

struct Accumulator {
  std::vector<double> qsum;
  std::vector<double> bsum;
  std::size_t n = 0;

  Accumulator(std::size_t n_levels, std::size_t n_thresholds)
      : qsum(n_levels, 0.0), bsum(n_thresholds, 0.0) {}

  ScoreReport report(std::string label, std::span<const double> levels,
                     std::span<const double> thresholds) const {
    ScoreReport r;
    r.label = std::move(label);
    r.levels.assign(levels.begin(), levels.end());
    r.thresholds.assign(thresholds.begin(), thresholds.end());
    r.test_size = n;
    const double denom = n > 0 ? static_cast<double>(n) : 1.0;
    for (const double s : qsum) r.quantile_scores.push_back(s / denom);
    for (const double s : bsum) r.brier_scores_x100.push_back(100.0 * s / denom);
    return r;
  }
};

}  // namespace

ScoreReport score_model(const std::string& label,
                        const inference::PosteriorState& mean_state,
                        const inference::ModelSettings& settings,
                        const MonitorDataset& test,
                        const rfm::SensitivityField& field,
                        std::span<const double> levels,
                        std::span<const double> thresholds) {
  test.link_to_field(field);
  const evt::QuantileBasis basis(settings.basis_count);
  const std::vector<double> c =
      record_concentrations(field, test, mean_state.alpha.values);
  Accumulator acc(levels.size(), thresholds.size());
  for (std::size_t i = 0; i < test.records.size(); ++i) {
    const auto& r = test.records[i];
    const auto dist =
        evt::resolve(mean_state.site[r.site], mean_state.global, basis, c[i]);
    for (std::size_t q = 0; q < levels.size(); ++q) {
      acc.qsum[q] += quantile_score(r.value, dist.quantile(levels[q]),
                                    levels[q]);
    }
    for (std::size_t h = 0; h < thresholds.size(); ++h) {
      acc.bsum[h] += brier_score(r.value, 1.0 - dist.cdf(thresholds[h]),
                                 thresholds[h]);
    }
    acc.n += 1;
  }
  return acc.report(label, levels, thresholds);
}

ScoreReport slr_baseline(const MonitorDataset& train,
                         const MonitorDataset& test,
                         const rfm::SensitivityField& field,
                         std::span<const double> levels,
                         std::span<const double> thresholds) {
  train.link_to_field(field);
  test.link_to_field(field);
  if (train.sites.size() != test.sites.size()) {
    throw input_error("slr_baseline: train/test site tables differ");
  }
  const int n_sites = train.n_sites();
  std::vector<double> intercept(n_sites, 0.0), slope(n_sites, 0.0);
  bool fallback = false;
  double global_sum = 0.0;
  for (const auto& r : train.records) global_sum += r.value;
  const double global_mean =
      train.records.empty() ? 0.0
                            : global_sum / static_cast<double>(train.records.size());
  for (int s = 0; s < n_sites; ++s) {
    const auto [begin, end] = train.site_ranges[s];
    const long n = static_cast<long>(end - begin);
    if (n == 0) {
      intercept[s] = global_mean;
      fallback = true;
      continue;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = train.records[i];
      const double c0 = field.base[field.index(r.day, train.sites[s].cell)];
      sx += c0;
      sy += r.value;
      sxx += c0 * c0;
      sxy += c0 * r.value;
    }
    const double vx = sxx - sx * sx / n;
    if (n >= 2 && vx > 1e-12) {
      slope[s] = (sxy - sx * sy / n) / vx;
      intercept[s] = (sy - slope[s] * sx) / n;
    } else {
      intercept[s] = sy / n;
      fallback = true;
    }
  }
  Accumulator acc(levels.size(), thresholds.size());
  for (const auto& r : test.records) {
    const double c0 = field.base[field.index(r.day, test.sites[r.site].cell)];
    const double fit = intercept[r.site] + slope[r.site] * c0;
    for (std::size_t q = 0; q < levels.size(); ++q) {
      acc.qsum[q] += quantile_score(r.value, fit, levels[q]);
    }
    for (std::size_t h = 0; h < thresholds.size(); ++h) {
      acc.bsum[h] += brier_score(
          r.value, fit > thresholds[h] ? 1.0 : 0.0, thresholds[h]);
    }
    acc.n += 1;
  }
  ScoreReport report = acc.report("slr", levels, thresholds);
  report.degenerate_fallback = fallback;
  return report;
}

}  // namespace ozcal::scoring
