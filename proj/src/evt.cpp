#include "ozcal/evt.hpp"

#include <algorithm>
#include <cmath>

#include "ozcal/normal.hpp"

namespace ozcal::evt {

namespace {

constexpr int kMaxOrder = 8;

double clamp_tau(double tau) {
  return std::clamp(tau, kTauClamp, 1.0 - kTauClamp);
}

void check_gpd(const GpdParams& g) {
  if (!(g.sigma > 0.0)) throw input_error("GPD scale must be positive");
}

}  // namespace

double gpd_quantile(double p, const GpdParams& g) {
  check_gpd(g);
  if (!(p >= 0.0 && p <= 1.0)) {
    throw input_error("gpd_quantile: p outside [0,1]");
  }
  if (p == 1.0) {
    if (g.xi < 0.0) return g.upper_endpoint();
    throw input_error("gpd_quantile: p = 1 requires xi < 0");
  }
  if (std::abs(g.xi) < kShapeTol) {
    return g.mu - g.sigma * std::log1p(-p);
  }
  return g.mu + g.sigma / g.xi * std::expm1(-g.xi * std::log1p(-p));
}

double gpd_cdf(double y, const GpdParams& g) {
  check_gpd(g);
  const double z = y - g.mu;
  if (z <= 0.0) return 0.0;
  if (std::abs(g.xi) < kShapeTol) {
    return -std::expm1(-z / g.sigma);
  }
  const double w = g.xi * z / g.sigma;
  if (w <= -1.0) return 1.0;  // beyond the finite endpoint (xi < 0)
  return -std::expm1(std::log1p(w) * (-1.0 / g.xi));
}

double gpd_density(double y, const GpdParams& g) {
  check_gpd(g);
  const double z = y - g.mu;
  if (z < 0.0) return 0.0;
  if (std::abs(g.xi) < kShapeTol) {
    return std::exp(-z / g.sigma) / g.sigma;
  }
  const double w = g.xi * z / g.sigma;
  if (w <= -1.0) return 0.0;
  return std::exp((-1.0 / g.xi - 1.0) * std::log1p(w)) / g.sigma;
}

double gpd_log_density(double y, const GpdParams& g) {
  check_gpd(g);
  const double z = y - g.mu;
  if (z < 0.0) return -kInf;
  if (std::abs(g.xi) < kShapeTol) {
    return -std::log(g.sigma) - z / g.sigma;
  }
  const double w = g.xi * z / g.sigma;
  if (w <= -1.0) return -kInf;
  return -std::log(g.sigma) - (1.0 / g.xi + 1.0) * std::log1p(w);
}

QuantileBasis::QuantileBasis(int basis_count) : L_(basis_count) {
  if (!(L_ == 1 || (L_ >= 2 && L_ % 2 == 0)) || L_ > kMaxBasis) {
    throw input_error("basis count must be 1 or even, at most " +
                      std::to_string(kMaxBasis));
  }
  knots_.resize(L_ + 1);
  probits_.resize(L_ + 1);
  for (int i = 0; i <= L_; ++i) {
    knots_[i] = static_cast<double>(i) / L_;
  }
  probits_[0] = -kInf;
  probits_[L_] = kInf;
  for (int i = 1; i < L_; ++i) probits_[i] = norm_quantile(knots_[i]);

  seg_coeff_.assign(static_cast<std::size_t>(L_) * L_, 0.0);
  knot_coeff_.assign(static_cast<std::size_t>(L_) * L_, 0.0);
  for (int l = 1; l <= L_; ++l) {
    const double mid = 0.5 * (knot(l) + knot(l + 1));
    const double mid_probit = norm_quantile(mid);
    for (int m = 1; m <= L_; ++m) {
      double c = value(mid, m);
      if (m == l) c -= mid_probit;
      seg_coeff_[(l - 1) * L_ + (m - 1)] = c;
      if (l >= 2) {
        knot_coeff_[(l - 1) * L_ + (m - 1)] = value(knot(l), m);
      }
    }
  }
}

double QuantileBasis::value(double tau, int l) const {
  if (l < 1 || l > L_) throw input_error("basis index out of range");
  tau = clamp_tau(tau);
  if (L_ == 1) return norm_quantile(tau);
  const double lo = knot(l);
  const double hi = knot(l + 1);
  if (lo < 0.5) {
    if (tau < lo) return probits_[l - 1] - probits_[l];
    if (tau < hi) return norm_quantile(tau) - probits_[l];
    return 0.0;
  }
  if (tau < lo) return 0.0;
  if (tau < hi) return norm_quantile(tau) - probits_[l - 1];
  return probits_[l] - probits_[l - 1];
}

int QuantileBasis::segment(double tau) const {
  tau = clamp_tau(tau);
  const int l = 1 + static_cast<int>(tau * L_);
  return std::min(l, L_);
}

void covariate_row(double concentration, int order, double center,
                   double scale, std::span<double> out) {
  if (order < 1) throw input_error("polynomial order must be >= 1");
  if (out.size() != static_cast<std::size_t>(order) + 1) {
    throw input_error("covariate_row: output span has wrong length");
  }
  const double c = (concentration - center) / scale;
  out[0] = 1.0;
  for (int m = 1; m <= order; ++m) out[m] = out[m - 1] * c;
}

std::vector<double> covariate_row(double concentration, int order,
                                  double center, double scale) {
  std::vector<double> out(order + 1);
  covariate_row(concentration, order, center, scale, out);
  return out;
}

double threshold_level(double d, double lower, double upper) {
  if (!(lower <= upper) || !(lower >= 0.0) || !(upper <= 1.0)) {
    throw input_error("threshold bounds must satisfy 0 <= lower <= upper <= 1");
  }
  if (d >= 0.0) {
    const double e = std::exp(-d);
    return (lower + upper * e) / (1.0 + e);
  }
  const double e = std::exp(d);
  return (lower * e + upper) / (1.0 + e);
}

ConditionalDistribution::ConditionalDistribution(const QuantileBasis& basis,
                                                 double beta,
                                                 std::span<const double> theta,
                                                 double sigma, double xi,
                                                 double threshold)
    : basis_(&basis), L_(basis.size()), beta_(beta), T_(threshold) {
  if (theta.size() != static_cast<std::size_t>(L_)) {
    throw input_error("theta count must equal basis size");
  }
  finite_ = std::isfinite(beta_) && std::isfinite(T_) && T_ > 0.0 && T_ <= 1.0;
  for (int l = 0; l < L_; ++l) {
    theta_[l] = theta[l];
    finite_ = finite_ && std::isfinite(theta_[l]) && theta_[l] > 0.0;
  }
  if (T_ < 1.0) {
    finite_ = finite_ && std::isfinite(sigma) && sigma > 0.0 &&
              std::isfinite(xi);
  }
  if (!finite_) {
    gpd_ = GpdParams{kInf, 1.0, 0.0};
    T_ = 1.0;
    return;
  }
  for (int l = 1; l <= L_; ++l) {
    double a = beta_;
    for (int m = 1; m <= L_; ++m) {
      a += basis_->seg_coeff(l, m) * theta_[m - 1];
    }
    seg_mean_[l - 1] = a;
  }
  breakpoint_[1] = -kInf;
  breakpoint_[L_ + 1] = kInf;
  for (int l = 2; l <= L_; ++l) {
    double b = beta_;
    for (int m = 1; m <= L_; ++m) {
      b += basis_->knot_coeff(l, m) * theta_[m - 1];
    }
    breakpoint_[l] = b;
  }
  if (T_ >= 1.0) {
    T_ = 1.0;
    gpd_ = GpdParams{kInf, (sigma > 0.0 ? sigma : 1.0), xi};
  } else {
    gpd_ = GpdParams{q0(T_), sigma, xi};
  }
}

double ConditionalDistribution::q0(double tau) const {
  tau = clamp_tau(tau);
  const int l = basis_->segment(tau);
  return seg_mean_[l - 1] + theta_[l - 1] * norm_quantile(tau);
}

double ConditionalDistribution::quantile(double tau) const {
  if (!finite_) throw numerical_error("conditional distribution degenerate");
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw input_error("quantile level outside (0,1]");
  }
  if (tau == 1.0) {
    if (T_ < 1.0 && gpd_.xi < 0.0) return gpd_.upper_endpoint();
    throw input_error("quantile level 1 requires a bounded tail");
  }
  if (tau <= T_) return q0(tau);
  return gpd_quantile((tau - T_) / (1.0 - T_), gpd_);
}

double ConditionalDistribution::cdf(double y) const {
  if (!finite_) throw numerical_error("conditional distribution degenerate");
  if (T_ < 1.0 && y >= gpd_.mu) {
    return T_ + (1.0 - T_) * gpd_cdf(y, gpd_);
  }
  int l = 1;
  while (l < L_ && y >= breakpoint_[l + 1]) ++l;
  const double tau = norm_cdf((y - seg_mean_[l - 1]) / theta_[l - 1]);
  // Roundoff guard: values below mu may not exceed the threshold level.
  return (T_ < 1.0) ? std::min(tau, T_) : tau;
}

double ConditionalDistribution::density(double y) const {
  if (!finite_) return 0.0;
  if (T_ < 1.0 && y >= gpd_.mu) {
    return (1.0 - T_) * gpd_density(y, gpd_);
  }
  int l = 1;
  while (l < L_ && y >= breakpoint_[l + 1]) ++l;
  const double th = theta_[l - 1];
  return norm_pdf((y - seg_mean_[l - 1]) / th) / th;
}

double ConditionalDistribution::log_density(double y) const {
  if (!finite_) return -kInf;
  if (T_ < 1.0 && y >= gpd_.mu) {
    return std::log1p(-T_) + gpd_log_density(y, gpd_);
  }
  int l = 1;
  while (l < L_ && y >= breakpoint_[l + 1]) ++l;
  const double th = theta_[l - 1];
  return norm_log_pdf((y - seg_mean_[l - 1]) / th) - std::log(th);
}

ConditionalDistribution resolve(const SiteCoeffs& site,
                                const GlobalCoeffs& global,
                                const QuantileBasis& basis,
                                double concentration) {
  const int L = basis.size();
  if (static_cast<int>(site.a_theta.size()) != L) {
    throw input_error("theta coefficient count must equal basis size");
  }
  const int order = static_cast<int>(site.a_beta.size()) - 1;
  if (order < 1 || order > kMaxOrder) {
    throw input_error("polynomial order out of range");
  }
  std::array<double, kMaxOrder + 1> x{};
  covariate_row(concentration, order, global.center, global.scale,
                std::span<double>(x.data(), order + 1));
  const auto dot = [&](const std::vector<double>& a) {
    if (a.size() != static_cast<std::size_t>(order) + 1) {
      throw input_error("coefficient vector length mismatch");
    }
    double s = 0.0;
    for (int m = 0; m <= order; ++m) s += x[m] * a[m];
    return s;
  };
  const double beta = dot(site.a_beta);
  std::array<double, kMaxBasis> theta{};
  for (int l = 0; l < L; ++l) theta[l] = std::exp(dot(site.a_theta[l]));

  const bool no_tail = global.thr_lower >= 1.0 && global.thr_upper >= 1.0;
  double sigma = 1.0;
  double xi = 0.0;
  double threshold = 1.0;
  if (!no_tail) {
    sigma = std::exp(dot(site.a_sigma));
    xi = dot(global.a_xi);
    threshold = threshold_level(dot(global.a_d), global.thr_lower,
                                global.thr_upper);
  }
  return ConditionalDistribution(basis, beta,
                                 std::span<const double>(theta.data(), L),
                                 sigma, xi, threshold);
}

ConditionalDistribution resolve(const ConditionalModelParams& params,
                                const QuantileBasis& basis,
                                double concentration) {
  if (static_cast<int>(params.site.a_beta.size()) != params.order + 1) {
    throw input_error("coefficient length does not match declared order");
  }
  return resolve(params.site, params.global, basis, concentration);
}

}  // namespace ozcal::evt
