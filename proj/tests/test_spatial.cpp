#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "ozcal/normal.hpp"
#include "ozcal/rng.hpp"
#include "ozcal/spatial.hpp"

using namespace ozcal;
using spatial::GpHyper;
using spatial::Point;

TEST_CASE("exponential correlation basics") {
  const std::vector<Point> a{{0, 0}, {3, 4}};
  const auto r = spatial::exp_correlation(a, a, 5.0);
  CHECK(r(0, 0) == 1.0);
  CHECK(r(1, 1) == 1.0);
  CHECK(r(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(r(0, 1) == r(1, 0));
  CHECK_THROWS_AS(spatial::exp_correlation(a, a, 0.0), input_error);
  CHECK_THROWS_AS(spatial::exp_correlation(a, a, -2.0), input_error);
}

TEST_CASE("collinear sites give the expected off-diagonals") {
  const double rho = 7.0;
  const std::vector<Point> pts{{0, 0}, {rho, 0}, {2 * rho, 0}};
  const auto r = spatial::exp_correlation(pts, pts, rho);
  CHECK(r(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(r(1, 2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(r(0, 2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
}

TEST_CASE("single-site GP density reduces to the univariate normal") {
  const std::vector<Point> one{{10, 20}};
  const GpHyper hyper{2.5, 4.0, 30.0};
  const std::vector<double> v{3.7};
  const double got = spatial::gp_log_density(v, hyper, one);
  const double z = (3.7 - 2.5) / 2.0;
  // The jitter inflates the variance by a relative 1e-8; tolerate that.
  CHECK(got == doctest::Approx(norm_log_pdf(z) - std::log(2.0)).epsilon(1e-7));
}

TEST_CASE("GP density matches a dense multivariate-normal oracle") {
  Rng rng(17);
  const std::vector<Point> pts{{0, 0}, {15, 5}, {3, 22}};
  const GpHyper hyper{1.0, 2.5, 12.0};
  std::vector<double> v(3);
  for (auto& x : v) x = 5.0 * rng.uniform01();

  // Oracle: explicit covariance, LU determinant and inverse.
  Eigen::MatrixXd cov = spatial::exp_correlation(pts, pts, hyper.range);
  cov.diagonal().array() += spatial::kJitter;
  cov *= hyper.variance;
  Eigen::VectorXd centered(3);
  for (int i = 0; i < 3; ++i) centered[i] = v[i] - hyper.mean;
  const Eigen::MatrixXd inv = cov.fullPivLu().inverse();
  const double logdet = std::log(cov.fullPivLu().determinant());
  const double quad = centered.dot(inv * centered);
  const double oracle =
      -0.5 * (3.0 * std::log(2.0 * 3.141592653589793) + logdet + quad);

  CHECK(spatial::gp_log_density(v, hyper, pts) ==
        doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("coincident sites with different values are wildly improbable") {
  const std::vector<Point> pts{{5, 5}, {5, 5}};
  const GpHyper hyper{0.0, 1.0, 10.0};
  const std::vector<double> v_same{1.0, 1.0};
  const std::vector<double> v_diff{1.0, 2.0};
  const double same = spatial::gp_log_density(v_same, hyper, pts);
  const double diff = spatial::gp_log_density(v_diff, hyper, pts);
  CHECK(diff < same - 1e6);  // jitter keeps it finite but extreme
}

TEST_CASE("gp_predict interpolates observed sites") {
  const std::vector<Point> obs_pts{{0, 0}, {20, 0}, {0, 20}};
  const std::vector<double> obs{4.0, 6.0, 5.0};
  const GpHyper hyper{5.0, 2.0, 15.0};
  Rng rng(derive_seed(99, "predict"));
  const auto out = spatial::gp_predict(obs, hyper, obs_pts,
                                       std::vector<Point>{{20, 0}}, rng);
  // Conditional variance at an observed site is at the jitter scale.
  CHECK(out[0] == doctest::Approx(6.0).epsilon(1e-3));
}

TEST_CASE("far-away prediction reverts to the process prior") {
  const std::vector<Point> obs_pts{{0, 0}};
  const std::vector<double> obs{100.0};
  const GpHyper hyper{-2.0, 9.0, 1.0};
  const std::vector<Point> far{{1e6, 1e6}};
  double sum = 0.0, sumsq = 0.0;
  const int n = 20000;
  Rng rng(5);
  for (int i = 0; i < n; ++i) {
    const auto v = spatial::gp_predict(obs, hyper, obs_pts, far, rng);
    sum += v[0];
    sumsq += v[0] * v[0];
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(mean == doctest::Approx(-2.0).epsilon(0.05));
  CHECK(var == doctest::Approx(9.0).epsilon(0.05));
}

TEST_CASE("two observed plus one target matches hand kriging algebra") {
  // Sites at x=0 and x=1 with rho=1; target at x=0.5.
  const std::vector<Point> obs_pts{{0, 0}, {1, 0}};
  const std::vector<Point> target{{0.5, 0}};
  const double rho = 1.0;
  const GpHyper hyper{1.0, 4.0, rho};
  const std::vector<double> obs{2.0, 3.0};

  const double r01 = std::exp(-1.0);
  const double rt = std::exp(-0.5);
  // Hand algebra: symmetric weights R_ts R_ss^{-1}.
  const double w = rt / (1.0 + r01);
  const double mean_hand = 1.0 + w * ((obs[0] - 1.0) + (obs[1] - 1.0));
  const double var_hand = 4.0 * (1.0 - 2.0 * rt * rt / (1.0 + r01));

  const spatial::Interpolator interp(obs_pts, target, rho);
  const auto cm = interp.conditional_mean(obs, hyper.mean);
  CHECK(cm[0] == doctest::Approx(mean_hand).epsilon(1e-6));

  double sum = 0.0, sumsq = 0.0;
  const int n = 40000;
  Rng rng(7);
  for (int i = 0; i < n; ++i) {
    const auto v = interp.draw(obs, hyper.mean, hyper.variance, rng);
    sum += v[0];
    sumsq += v[0] * v[0];
  }
  const double var = sumsq / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(var_hand).epsilon(0.05));
}

TEST_CASE("gp_predict is reproducible bit for bit") {
  const std::vector<Point> obs_pts{{0, 0}, {10, 10}, {20, 0}};
  const std::vector<double> obs{1.0, 2.0, 3.0};
  const GpHyper hyper{0.0, 1.0, 8.0};
  std::vector<Point> targets;
  for (int i = 0; i < 25; ++i) targets.push_back({i * 1.7, 30.0 - i});
  Rng r1(derive_seed(123, "draw"));
  Rng r2(derive_seed(123, "draw"));
  const auto a = spatial::gp_predict(obs, hyper, obs_pts, targets, r1);
  const auto b = spatial::gp_predict(obs, hyper, obs_pts, targets, r2);
  CHECK(a == b);
}

TEST_CASE("SitePrior caches the factorization consistently") {
  const std::vector<Point> pts{{0, 0}, {5, 3}, {9, 9}, {2, 7}};
  spatial::SitePrior prior(pts);
  prior.set_range(6.0);
  const std::vector<double> v{0.5, -0.2, 1.0, 0.3};
  const double cached = prior.log_density(v, 0.1, 0.8);
  const double direct = spatial::gp_log_density(v, {0.1, 0.8, 6.0}, pts);
  CHECK(cached == doctest::Approx(direct).epsilon(1e-12));
  CHECK_THROWS_AS(prior.log_density(v, 0.1, -1.0), input_error);
  spatial::SitePrior unset(pts);
  CHECK_THROWS_AS(unset.log_density(v, 0.0, 1.0), numerical_error);
}
