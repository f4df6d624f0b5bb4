#pragma once

#include <array>
#include <limits>
#include <span>
#include <vector>

#include "ozcal/errors.hpp"

namespace ozcal::evt {

/// |xi| below this switches GPD formulas to their exponential limit. The
/// expm1/log1p forms are stable down to tiny shapes, so the switch only
/// guards the xi -> 0 division; at 1e-12 the branch jump is ~sigma*xi*log^2
/// (far below 1e-8 everywhere tested).
inline constexpr double kShapeTol = 1e-12;

/// Quantile levels are clamped to [kTauClamp, 1-kTauClamp] before any
/// normal-quantile evaluation.
inline constexpr double kTauClamp = 1e-12;

inline constexpr int kMaxBasis = 8;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Generalized Pareto: lower bound mu, scale sigma > 0, shape xi.
/// Support is (mu, inf) for xi >= 0 and (mu, mu - sigma/xi) for xi < 0;
/// the density is taken as 1/sigma at y = mu itself.
struct GpdParams {
  double mu = 0.0;
  double sigma = 1.0;
  double xi = 0.0;

  double upper_endpoint() const {
    return xi < 0.0 ? mu - sigma / xi : kInf;
  }
};

/// qGPD(p) = mu + (sigma/xi) ((1-p)^(-xi) - 1); exponential limit
/// mu - sigma log(1-p) for small |xi|. p = 1 is allowed only when xi < 0.
double gpd_quantile(double p, const GpdParams& params);

/// dGPD(y) = (1/sigma) (1 + xi (y-mu)/sigma)_+^(-1/xi - 1); 0 outside support.
double gpd_density(double y, const GpdParams& params);
double gpd_log_density(double y, const GpdParams& params);

/// 1 - (1 + xi (y-mu)/sigma)_+^(-1/xi); 0 below mu, 1 beyond a finite endpoint.
double gpd_cdf(double y, const GpdParams& params);

/// Monotone quantile-regression basis on equally spaced knots
/// kappa_1 = 0 < ... < kappa_{L+1} = 1. L = 1 is the Gaussian case
/// B_1(tau) = Phi^{-1}(tau); otherwise L is even and each B_l is the
/// piecewise probit ramp that is flat outside [kappa_l, kappa_{l+1}).
class QuantileBasis {
 public:
  explicit QuantileBasis(int basis_count);

  int size() const { return L_; }
  double knot(int l) const { return knots_[l - 1]; }  // l in 1..L+1

  /// B_l(tau) for l in 1..L; tau is clamped.
  double value(double tau, int l) const;

  /// Segment index (1-based) whose knot interval contains tau.
  int segment(double tau) const;

  // Precomputed tables used to assemble the closed-form density. On the
  // interval [kappa_l, kappa_{l+1}) the quantile function is
  // q0(tau) = a_l + theta_l Phi^{-1}(tau) with
  //   a_l  = beta + sum_m seg_coeff(l, m) theta_m,
  // and the interval's lower breakpoint is
  //   q0(kappa_l) = beta + sum_m knot_coeff(l, m) theta_m.
  double seg_coeff(int l, int m) const { return seg_coeff_[(l - 1) * L_ + (m - 1)]; }
  double knot_coeff(int l, int m) const { return knot_coeff_[(l - 1) * L_ + (m - 1)]; }

 private:
  int L_ = 1;
  std::vector<double> knots_;       // L+1 values
  std::vector<double> probits_;     // Phi^{-1}(kappa_l), +-inf at the ends
  std::vector<double> seg_coeff_;   // L x L
  std::vector<double> knot_coeff_;  // L x L, rows 2..L meaningful
};

/// Covariate row X = (1, c, ..., c^M) with c = (C - center) / scale.
void covariate_row(double concentration, int order, double center,
                   double scale, std::span<double> out);
std::vector<double> covariate_row(double concentration, int order,
                                  double center = 50.0, double scale = 15.0);

/// Threshold quantile level T in [lower, upper] via the logistic link
/// T = lower e^d/(1+e^d) + upper 1/(1+e^d); T -> lower as d -> +inf.
double threshold_level(double d, double lower, double upper);

/// Coefficient vectors that vary by site (each of length M+1).
struct SiteCoeffs {
  std::vector<double> a_beta;
  std::vector<std::vector<double>> a_theta;  // L entries
  std::vector<double> a_sigma;
};

/// Coefficients shared across sites, threshold bounds, and the covariate
/// standardization. thr_lower = thr_upper = 1 disables the tail entirely
/// (T == 1, pure basis model).
struct GlobalCoeffs {
  std::vector<double> a_xi;
  std::vector<double> a_d;
  double thr_lower = 0.8;
  double thr_upper = 1.0;
  double center = 50.0;
  double scale = 15.0;
};

/// One site's full conditional model; resolve() produces the distribution
/// of a monitor value given surrogate-model output C.
struct ConditionalModelParams {
  int order = 2;  // M
  SiteCoeffs site;
  GlobalCoeffs global;
};

/// The conditional distribution of y given C at one site, fully resolved:
/// basis quantile function below the threshold quantile T, GPD tail above.
/// The density is multiply-split normal below mu = q0(T) with breakpoints
/// q0(kappa_l), and (1-T) dGPD above; membership is half-open below and
/// y >= mu for the tail.
class ConditionalDistribution {
 public:
  ConditionalDistribution(const QuantileBasis& basis, double beta,
                          std::span<const double> theta, double sigma,
                          double xi, double threshold);

  double quantile(double tau) const;
  double cdf(double y) const;
  double density(double y) const;
  double log_density(double y) const;

  double threshold() const { return T_; }
  /// GPD lower bound mu = q0(T); +inf when T == 1 (no tail).
  double lower_tail_bound() const { return gpd_.mu; }
  double beta() const { return beta_; }
  double theta(int l) const { return theta_[l - 1]; }
  const GpdParams& tail() const { return gpd_; }
  bool finite_params() const { return finite_; }

 private:
  double q0(double tau) const;

  const QuantileBasis* basis_;
  int L_;
  double beta_;
  std::array<double, kMaxBasis> theta_{};
  double T_;
  GpdParams gpd_;
  std::array<double, kMaxBasis> seg_mean_{};        // a_l
  std::array<double, kMaxBasis + 2> breakpoint_{};  // q0(kappa_l), 1..L+1
  bool finite_ = true;
};

/// Evaluates the covariate links at C and assembles the distribution:
/// beta = X a_beta, theta_l = exp(X a_theta_l), sigma = exp(X a_sigma),
/// xi = X a_xi, T = threshold_level(X a_d, lower, upper). The polynomial
/// order is taken from the coefficient lengths.
ConditionalDistribution resolve(const SiteCoeffs& site,
                                const GlobalCoeffs& global,
                                const QuantileBasis& basis,
                                double concentration);
ConditionalDistribution resolve(const ConditionalModelParams& params,
                                const QuantileBasis& basis,
                                double concentration);

}  // namespace ozcal::evt
