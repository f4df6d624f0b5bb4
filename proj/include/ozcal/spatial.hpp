#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "ozcal/errors.hpp"
#include "ozcal/rng.hpp"

namespace ozcal::spatial {

struct Point {
  double x_km = 0.0;
  double y_km = 0.0;
};

inline double distance(const Point& a, const Point& b) {
  const double dx = a.x_km - b.x_km;
  const double dy = a.y_km - b.y_km;
  return std::sqrt(dx * dx + dy * dy);
}

/// Relative diagonal jitter applied to correlation matrices before Cholesky.
inline constexpr double kJitter = 1e-8;

/// Hyperparameters of one coefficient process: GP mean, variance, and the
/// spatial range (km) shared across all processes.
struct GpHyper {
  double mean = 0.0;
  double variance = 1.0;
  double range = 1.0;
};

/// Exponential correlation exp(-dist/range) between two site lists.
Eigen::MatrixXd exp_correlation(std::span<const Point> a,
                                std::span<const Point> b, double range);

/// Multivariate normal log density of values with mean hyper.mean * 1 and
/// covariance hyper.variance * R(hyper.range); jittered Cholesky inside.
double gp_log_density(std::span<const double> values, const GpHyper& hyper,
                      std::span<const Point> sites);

/// One draw from the conditional Gaussian of the process at new_sites given
/// observed values at sites (simple kriging around the process mean).
std::vector<double> gp_predict(std::span<const double> observed,
                               const GpHyper& hyper,
                               std::span<const Point> sites,
                               std::span<const Point> new_sites, Rng& rng);

/// Cached Cholesky of the jittered site correlation for a fixed range;
/// shared across coefficient processes inside the sampler.
class SitePrior {
 public:
  explicit SitePrior(std::vector<Point> sites);

  void set_range(double range);
  double range() const { return range_; }
  int size() const { return static_cast<int>(sites_.size()); }
  const std::vector<Point>& sites() const { return sites_; }

  /// log N(values | mean * 1, variance * R(range)) using the cached factor.
  double log_density(std::span<const double> values, double mean,
                     double variance) const;

 private:
  std::vector<Point> sites_;
  double range_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_corr_ = 0.0;  // log |R + jitter I|
};

/// Precomputed conditional-Gaussian structure for interpolating all
/// coefficient processes (which share the range) from sites to targets.
class Interpolator {
 public:
  Interpolator(std::span<const Point> sites, std::span<const Point> targets,
               double range);

  /// Conditional mean at the targets for one process.
  Eigen::VectorXd conditional_mean(std::span<const double> observed,
                                   double mean) const;

  /// Conditional draw: mean + sqrt(variance) * L_cond * z.
  std::vector<double> draw(std::span<const double> observed, double mean,
                           double variance, Rng& rng) const;

  int n_targets() const { return static_cast<int>(cross_weights_.rows()); }

 private:
  Eigen::MatrixXd cross_weights_;  // R_ts R_ss^-1
  Eigen::MatrixXd chol_cond_;      // lower Cholesky of conditional correlation
};

}  // namespace ozcal::spatial
