#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ozcal/evt.hpp"
#include "ozcal/normal.hpp"
#include "ozcal/rng.hpp"

using namespace ozcal;
using evt::ConditionalDistribution;
using evt::GpdParams;
using evt::QuantileBasis;

namespace {

// Test-only quadrature oracle: adaptive Simpson with recursion guard.
double simpson(const std::function<double(double)>& f, double a, double m,
               double b, double fa, double fm, double fb, double whole,
               double tol, int depth) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return simpson(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, m, b, fa, fm, fb, whole, tol, 40);
}

// Test-only inversion oracle: bisection on the CDF.
double invert_cdf(const std::function<double(double)>& cdf, double target,
                  double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct RandomParams {
  int L = 1;
  double beta = 0, sigma = 1, xi = 0, threshold = 0.9;
  std::vector<double> theta;
};

RandomParams draw_params(Rng& rng, int xi_case /* 0 neg, 1 near zero, 2 pos */,
                         bool with_tail = true) {
  RandomParams p;
  p.L = rng.uniform01() < 0.5 ? 1 : 4;
  p.beta = 20.0 + 60.0 * rng.uniform01();
  p.theta.resize(p.L);
  for (auto& t : p.theta) t = 0.5 + 7.5 * rng.uniform01();
  p.sigma = 0.5 + 5.5 * rng.uniform01();
  switch (xi_case) {
    case 0: p.xi = -0.45 + 0.4 * rng.uniform01(); break;
    case 1: p.xi = (rng.uniform01() < 0.5 ? -1.0 : 1.0) * 1e-8; break;
    default: p.xi = 0.05 + 0.45 * rng.uniform01(); break;
  }
  p.threshold = with_tail ? 0.8 + 0.18 * rng.uniform01() : 1.0;
  return p;
}

ConditionalDistribution make_dist(const RandomParams& p,
                                  const QuantileBasis& basis) {
  return ConditionalDistribution(basis, p.beta, p.theta, p.sigma, p.xi,
                                 p.threshold);
}

}  // namespace

TEST_CASE("normal quantile and CDF agree to high accuracy") {
  for (double p = 1e-10; p < 1.0 - 1e-12; p += 0.001) {
    const double z = norm_quantile(p);
    CHECK(std::abs(norm_cdf(z) - p) < 1e-13);
  }
  CHECK(norm_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(norm_quantile(0.975) ==
        doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK_THROWS_AS(norm_quantile(0.0), input_error);
  CHECK_THROWS_AS(norm_quantile(1.0), input_error);
}

TEST_CASE("gpd_quantile closed forms") {
  CHECK(evt::gpd_quantile(0.0, {3.0, 2.0, 0.3}) == 3.0);
  // Exponential limit: mu=0, sigma=1, p=0.75 -> -log(0.25)
  CHECK(evt::gpd_quantile(0.75, {0.0, 1.0, 0.0}) ==
        doctest::Approx(1.3862943611198906).epsilon(1e-14));
  CHECK(evt::gpd_quantile(0.75, {0.0, 1.0, 1e-9}) ==
        doctest::Approx(1.3862943611198906).epsilon(1e-8));
  // xi=0.5, p=0.5 -> 2(sqrt(2)-1); cross-checked by CDF bisection.
  const GpdParams g{0.0, 1.0, 0.5};
  const double q = evt::gpd_quantile(0.5, g);
  CHECK(q == doctest::Approx(0.8284271247461903).epsilon(1e-14));
  const double oracle =
      invert_cdf([&](double y) { return evt::gpd_cdf(y, g); }, 0.5, 0.0, 100.0);
  CHECK(q == doctest::Approx(oracle).epsilon(1e-10));
  // p=1 only with a bounded tail.
  CHECK(evt::gpd_quantile(1.0, {0.0, 1.0, -0.5}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(evt::gpd_quantile(1.0, {0.0, 1.0, 0.1}), input_error);
  CHECK_THROWS_AS(evt::gpd_quantile(-0.1, {0.0, 1.0, 0.1}), input_error);
  CHECK_THROWS_AS(evt::gpd_quantile(1.1, {0.0, 1.0, 0.1}), input_error);
}

TEST_CASE("gpd_density closed forms and support") {
  CHECK(evt::gpd_density(5.0, {5.0, 2.0, 0.3}) == 0.5);
  CHECK(evt::gpd_density(3.0, {0.0, 1.0, -0.5}) == 0.0);  // beyond mu + 2
  CHECK(evt::gpd_density(-0.1, {0.0, 1.0, 0.5}) == 0.0);
  CHECK(evt::gpd_density(2.0, {0.0, 2.0, 0.0}) ==
        doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(evt::gpd_log_density(3.0, {0.0, 1.0, -0.5}) ==
        -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(evt::gpd_density(1.0, {0.0, -1.0, 0.0}), input_error);
}

TEST_CASE("gpd round trip over the shape grid") {
  for (const double xi : {-0.4, -0.1, -1e-9, 0.0, 1e-9, 0.1, 0.5}) {
    const GpdParams g{10.0, 3.0, xi};
    for (double p = 0.001; p < 0.9995; p += 0.001) {
      const double y = evt::gpd_quantile(p, g);
      CHECK(std::abs(evt::gpd_cdf(y, g) - p) < 1e-10);
    }
  }
}

TEST_CASE("gpd quantile is continuous across the small-shape switch") {
  const double at = evt::kShapeTol;
  const double below = std::nextafter(at, 0.0);
  for (double p = 0.01; p < 1.0; p += 0.01) {
    const double hi = evt::gpd_quantile(p, {0.0, 1.0, at});
    const double lo = evt::gpd_quantile(p, {0.0, 1.0, below});
    CHECK(std::abs(hi - lo) < 1e-8);
    const double hi_n = evt::gpd_quantile(p, {0.0, 1.0, -at});
    const double lo_n = evt::gpd_quantile(p, {0.0, 1.0, -below});
    CHECK(std::abs(hi_n - lo_n) < 1e-8);
  }
}

TEST_CASE("basis values match the piecewise definition") {
  const QuantileBasis g1(1);
  CHECK(g1.value(0.5, 1) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(g1.value(0.975, 1) ==
        doctest::Approx(1.959963984540054).epsilon(1e-12));

  const QuantileBasis g4(4);  // knots 0, .25, .5, .75, 1
  CHECK(g4.knot(1) == 0.0);
  CHECK(g4.knot(3) == 0.5);
  CHECK(g4.knot(5) == 1.0);
  // kappa_3 = 0.5: zero below its knot.
  CHECK(g4.value(0.3, 3) == 0.0);
  // kappa_2 = 0.25: zero at and above kappa_3.
  CHECK(g4.value(0.9, 2) == 0.0);
  // Within-interval values are probit differences.
  CHECK(g4.value(0.3, 2) ==
        doctest::Approx(norm_quantile(0.3) - norm_quantile(0.5))
            .epsilon(1e-14));
  CHECK(g4.value(0.6, 3) ==
        doctest::Approx(norm_quantile(0.6) - norm_quantile(0.5))
            .epsilon(1e-14));
  // Flat plateau of a lower-half basis below its knot.
  CHECK(g4.value(0.1, 2) ==
        doctest::Approx(norm_quantile(0.25) - norm_quantile(0.5))
            .epsilon(1e-14));
  // B_l(0.5) = 0 for all l when L is even.
  for (int l = 1; l <= 4; ++l) CHECK(g4.value(0.5, l) == 0.0);
  CHECK_THROWS_AS(g4.value(0.5, 0), input_error);
  CHECK_THROWS_AS(g4.value(0.5, 5), input_error);
  CHECK_THROWS_AS(QuantileBasis(3), input_error);
  CHECK_THROWS_AS(QuantileBasis(-2), input_error);
}

TEST_CASE("covariate row standardization") {
  CHECK(evt::covariate_row(50.0, 2) == std::vector<double>{1.0, 0.0, 0.0});
  CHECK(evt::covariate_row(65.0, 2) == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(evt::covariate_row(80.0, 2) == std::vector<double>{1.0, 2.0, 4.0});
  CHECK_THROWS_AS(evt::covariate_row(50.0, 0), input_error);
}

TEST_CASE("threshold link orientation and midpoint") {
  // d -> +inf saturates at the lower bound.
  CHECK(evt::threshold_level(40.0, 0.8, 1.0) ==
        doctest::Approx(0.8).epsilon(1e-12));
  CHECK(evt::threshold_level(-40.0, 0.8, 1.0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(evt::threshold_level(0.0, 0.8, 1.0) == doctest::Approx(0.9));
  CHECK(evt::threshold_level(std::log(3.0), 0.8, 1.0) ==
        doctest::Approx(0.85).epsilon(1e-14));
  CHECK_THROWS_AS(evt::threshold_level(0.0, 0.9, 0.8), input_error);
}

TEST_CASE("conditional quantile: splice continuity and tail values") {
  const QuantileBasis basis(1);
  const double theta = 3.0;
  const double T = 0.9;
  const double beta = 80.0 - theta * norm_quantile(T);  // mu lands on 80
  const ConditionalDistribution dist(basis, beta, std::vector<double>{theta},
                                     5.0, 0.1, T);
  CHECK(dist.lower_tail_bound() == doctest::Approx(80.0).epsilon(1e-13));
  // Continuity at the splice.
  CHECK(dist.quantile(T) ==
        doctest::Approx(dist.lower_tail_bound()).epsilon(1e-12));
  CHECK(std::abs(dist.quantile(T + 1e-13) - dist.quantile(T - 1e-13)) < 1e-8);
  // tau = 0.99 lands at relative level 0.9 of the tail.
  CHECK(dist.quantile(0.99) ==
        doctest::Approx(92.94627058970836).epsilon(1e-10));
  const double oracle =
      invert_cdf([&](double y) { return dist.cdf(y); }, 0.99, 80.0, 200.0);
  CHECK(dist.quantile(0.99) == doctest::Approx(oracle).epsilon(1e-9));
  CHECK_THROWS_AS(dist.quantile(0.0), input_error);
  CHECK_THROWS_AS(dist.quantile(1.0), input_error);  // xi > 0: unbounded
  CHECK_THROWS_AS(dist.quantile(-0.5), input_error);
}

TEST_CASE("no-tail model is the pure Gaussian quantile function") {
  const QuantileBasis basis(1);
  const ConditionalDistribution dist(basis, 10.0, std::vector<double>{2.0},
                                     1.0, 0.0, 1.0);
  for (double tau = 0.01; tau < 1.0; tau += 0.01) {
    CHECK(dist.quantile(tau) ==
          doctest::Approx(10.0 + 2.0 * norm_quantile(tau)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(dist.quantile(1.0), input_error);
}

TEST_CASE("gaussian collapse matches the analytic normal to 1e-12") {
  const double beta = 42.0, theta = 3.5;
  for (const int L : {1, 4}) {
    const QuantileBasis basis(L);
    const std::vector<double> thetas(L, theta);
    const ConditionalDistribution dist(basis, beta, thetas, 1.0, 0.0, 1.0);
    for (double y = beta - 5.0 * theta; y <= beta + 5.0 * theta; y += 0.37) {
      const double z = (y - beta) / theta;
      CHECK(std::abs(dist.density(y) - norm_pdf(z) / theta) < 1e-12);
      CHECK(std::abs(dist.cdf(y) - norm_cdf(z)) < 1e-12);
    }
    for (double tau = 0.001; tau < 0.9995; tau += 0.001) {
      const double analytic = beta + theta * norm_quantile(tau);
      CHECK(std::abs(dist.quantile(tau) - analytic) <
            1e-12 * std::abs(analytic));
    }
  }
}

TEST_CASE("conditional density: split-normal pieces and the tail branch") {
  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const auto p = draw_params(rng, rep % 3);
    const QuantileBasis basis(p.L);
    const auto dist = make_dist(p, basis);
    const double mu = dist.lower_tail_bound();
    // Density at the tail bound is (1-T)/sigma exactly.
    CHECK(dist.density(mu) ==
          doctest::Approx((1.0 - p.threshold) / p.sigma).epsilon(1e-12));
    // log_density agrees with log(density) where positive.
    for (double y = mu - 20.0; y < mu + 10.0; y += 0.7) {
      const double d = dist.density(y);
      if (d > 0.0) {
        CHECK(dist.log_density(y) ==
              doctest::Approx(std::log(d)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("conditional density integrates to one") {
  Rng rng(31);
  int checked = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const auto p = draw_params(rng, rep % 3, rep % 5 != 4);
    const QuantileBasis basis(p.L);
    const auto dist = make_dist(p, basis);
    const double lo = dist.quantile(1e-9);
    const double hi = (p.xi < 0.0 && p.threshold < 1.0)
                          ? dist.tail().upper_endpoint()
                          : dist.quantile(1.0 - 1e-9);
    // Piecewise integration between density breakpoints.
    std::vector<double> cuts{lo};
    for (int l = 2; l <= p.L; ++l) {
      const double b = dist.quantile(basis.knot(l));
      if (b > lo && b < hi) cuts.push_back(b);
    }
    const double mu = dist.lower_tail_bound();
    if (p.threshold < 1.0 && mu > lo && mu < hi) cuts.push_back(mu);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      total += integrate([&](double y) { return dist.density(y); }, cuts[i],
                         cuts[i + 1], 1e-10);
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
    ++checked;
  }
  CHECK(checked == 30);
}

TEST_CASE("cdf round trips the quantile function") {
  Rng rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = draw_params(rng, rep % 3, rep % 4 != 3);
    const QuantileBasis basis(p.L);
    const auto dist = make_dist(p, basis);
    for (double tau = 0.01; tau < 0.9995; tau += 0.0100001) {
      CHECK(std::abs(dist.cdf(dist.quantile(tau)) - tau) < 1e-10);
    }
    // Median round trip: B_l(0.5) = 0 makes q(0.5) = beta.
    CHECK(dist.quantile(0.5) == doctest::Approx(p.beta).epsilon(1e-12));
    CHECK(dist.cdf(p.beta) == doctest::Approx(0.5).epsilon(1e-12));
    // Threshold round trip.
    if (p.threshold < 1.0) {
      CHECK(dist.cdf(dist.lower_tail_bound()) ==
            doctest::Approx(p.threshold).epsilon(1e-12));
    }
  }
}

TEST_CASE("quantile function is strictly increasing and continuous at knots") {
  Rng rng(51);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = draw_params(rng, rep % 3, rep % 4 != 3);
    const QuantileBasis basis(p.L);
    const auto dist = make_dist(p, basis);
    double prev = dist.quantile(0.001);
    for (double tau = 0.002; tau < 0.9995; tau += 0.001) {
      const double q = dist.quantile(tau);
      CHECK(q > prev);
      prev = q;
    }
    for (int l = 2; l <= p.L; ++l) {
      const double k = basis.knot(l);
      CHECK(std::abs(dist.quantile(k + 1e-13) - dist.quantile(k - 1e-13)) <
            1e-8);
    }
  }
}

TEST_CASE("degenerate parameters are flagged, not propagated") {
  const QuantileBasis basis(1);
  const ConditionalDistribution bad(basis, 10.0, std::vector<double>{-1.0},
                                    1.0, 0.0, 0.9);
  CHECK_FALSE(bad.finite_params());
  CHECK(bad.density(10.0) == 0.0);
  CHECK(bad.log_density(10.0) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(bad.quantile(0.5), numerical_error);
}

TEST_CASE("resolve applies the covariate links") {
  const QuantileBasis basis(1);
  evt::SiteCoeffs site;
  site.a_beta = {40.0, 10.0, 1.0};
  site.a_theta = {{std::log(2.0), 0.5, 0.0}};
  site.a_sigma = {std::log(3.0), 0.0, 0.0};
  evt::GlobalCoeffs global;
  global.a_xi = {0.1, 0.05, 0.0};
  global.a_d = {std::log(3.0), 0.0, 0.0};
  global.thr_lower = 0.8;
  global.thr_upper = 1.0;
  // C = 65 -> standardized covariate 1 -> X = (1, 1, 1).
  const auto dist = evt::resolve(site, global, basis, 65.0);
  CHECK(dist.beta() == doctest::Approx(51.0).epsilon(1e-14));
  CHECK(dist.theta(1) == doctest::Approx(2.0 * std::exp(0.5)).epsilon(1e-14));
  CHECK(dist.tail().sigma == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(dist.tail().xi == doctest::Approx(0.15).epsilon(1e-14));
  CHECK(dist.threshold() == doctest::Approx(0.85).epsilon(1e-14));

  // thr bounds pinned at 1 disable the tail regardless of a_d.
  evt::GlobalCoeffs pinned = global;
  pinned.thr_lower = pinned.thr_upper = 1.0;
  const auto no_tail = evt::resolve(site, pinned, basis, 65.0);
  CHECK(no_tail.threshold() == 1.0);
  CHECK(no_tail.lower_tail_bound() == evt::kInf);

  evt::SiteCoeffs wrong = site;
  wrong.a_theta.clear();
  CHECK_THROWS_AS(evt::resolve(wrong, global, basis, 65.0), input_error);
}
