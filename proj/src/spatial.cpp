#include "ozcal/spatial.hpp"

#include <cmath>

#include "ozcal/normal.hpp"

namespace ozcal::spatial {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

Eigen::MatrixXd jittered_correlation(std::span<const Point> sites,
                                     double range) {
  Eigen::MatrixXd r = exp_correlation(sites, sites, range);
  r.diagonal().array() += kJitter;
  return r;
}

Eigen::LLT<Eigen::MatrixXd> factor_or_throw(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw numerical_error("Cholesky factorization failed after jitter");
  }
  return llt;
}

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double mvn_log_density(std::span<const double> values, double mean,
                       double variance,
                       const Eigen::LLT<Eigen::MatrixXd>& llt,
                       double log_det_corr) {
  if (!(variance > 0.0)) throw input_error("GP variance must be positive");
  const int n = static_cast<int>(values.size());
  Eigen::VectorXd centered(n);
  for (int i = 0; i < n; ++i) centered[i] = values[i] - mean;
  const Eigen::VectorXd w = llt.matrixL().solve(centered);
  const double quad = w.squaredNorm() / variance;
  const double log_det = n * std::log(variance) + log_det_corr;
  return -0.5 * (n * kLog2Pi + log_det + quad);
}

}  // namespace

Eigen::MatrixXd exp_correlation(std::span<const Point> a,
                                std::span<const Point> b, double range) {
  if (!(range > 0.0)) throw input_error("spatial range must be positive");
  Eigen::MatrixXd r(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::exp(-distance(a[i], b[j]) / range);
    }
  }
  return r;
}

double gp_log_density(std::span<const double> values, const GpHyper& hyper,
                      std::span<const Point> sites) {
  if (values.size() != sites.size()) {
    throw input_error("gp_log_density: one value per site required");
  }
  const auto llt = factor_or_throw(jittered_correlation(sites, hyper.range));
  return mvn_log_density(values, hyper.mean, hyper.variance, llt,
                         log_det_from_llt(llt));
}

std::vector<double> gp_predict(std::span<const double> observed,
                               const GpHyper& hyper,
                               std::span<const Point> sites,
                               std::span<const Point> new_sites, Rng& rng) {
  if (observed.size() != sites.size()) {
    throw input_error("gp_predict: one observed value per site required");
  }
  Interpolator interp(sites, new_sites, hyper.range);
  return interp.draw(observed, hyper.mean, hyper.variance, rng);
}

SitePrior::SitePrior(std::vector<Point> sites) : sites_(std::move(sites)) {}

void SitePrior::set_range(double range) {
  if (!(range > 0.0)) throw input_error("spatial range must be positive");
  llt_ = factor_or_throw(jittered_correlation(sites_, range));
  log_det_corr_ = log_det_from_llt(llt_);
  range_ = range;
}

double SitePrior::log_density(std::span<const double> values, double mean,
                              double variance) const {
  if (range_ <= 0.0) throw numerical_error("SitePrior range not set");
  if (values.size() != sites_.size()) {
    throw input_error("SitePrior: one value per site required");
  }
  return mvn_log_density(values, mean, variance, llt_, log_det_corr_);
}

Interpolator::Interpolator(std::span<const Point> sites,
                           std::span<const Point> targets, double range) {
  const auto llt = factor_or_throw(
      jittered_correlation(sites, range));
  const Eigen::MatrixXd cross = exp_correlation(targets, sites, range);
  // R_ts R_ss^-1 via the cached factor.
  cross_weights_ = llt.solve(cross.transpose()).transpose();
  Eigen::MatrixXd cond = exp_correlation(targets, targets, range);
  cond.noalias() -= cross_weights_ * cross.transpose();
  cond.diagonal().array() += kJitter;
  chol_cond_ = factor_or_throw(cond).matrixL();
}

Eigen::VectorXd Interpolator::conditional_mean(std::span<const double> observed,
                                               double mean) const {
  Eigen::VectorXd centered(observed.size());
  for (std::size_t i = 0; i < observed.size(); ++i) {
    centered[static_cast<Eigen::Index>(i)] = observed[i] - mean;
  }
  Eigen::VectorXd out = cross_weights_ * centered;
  out.array() += mean;
  return out;
}

std::vector<double> Interpolator::draw(std::span<const double> observed,
                                       double mean, double variance,
                                       Rng& rng) const {
  if (!(variance > 0.0)) throw input_error("GP variance must be positive");
  const Eigen::VectorXd cond_mean = conditional_mean(observed, mean);
  const double sd = std::sqrt(variance);
  Eigen::VectorXd z(n_targets());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  const Eigen::VectorXd value = cond_mean + sd * (chol_cond_ * z);
  return std::vector<double>(value.data(), value.data() + value.size());
}

}  // namespace ozcal::spatial
