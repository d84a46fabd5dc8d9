#include <cmath>

#include "doctest.h"
#include "ura/ka_estimation.hpp"
#include "ura/optimize.hpp"
#include "ura/specfun.hpp"

using namespace ura;
namespace ka = ura::ka_estimation;

TEST_CASE("energy estimator argmin and tie rule") {
  const double Pp = 0.4;
  CHECK(ka::estimate_active_count(1.0 + 3.0 * Pp, Pp, 10) == 3);
  CHECK(ka::estimate_active_count(0.0, Pp, 10) == 0);
  // halfway between 2 and 3: ties break toward the smaller count
  CHECK(ka::estimate_active_count(1.0 + 2.5 * Pp, Pp, 10) == 2);
  CHECK(ka::estimate_active_count(1e9, Pp, 7) == 7);  // clamped at K_max
}

TEST_CASE("power violation probability") {
  SystemConfig cfg{4, 4, 2, 2.0, 10};
  CHECK(ka::power_violation_prob({CodebookSpec::Ensemble::Spherical, 2.0},
                                 cfg, 5)
            .log_value == specfun::kNegInf);
  CHECK(ka::power_violation_prob({CodebookSpec::Ensemble::Gaussian, 1.0}, cfg,
                                 0)
            .log_value == specfun::kNegInf);

  // K_a = 1, n = 4, P/P' = 2: Q(4, 8) evaluated independently
  long double term = 1.0L, sum = 1.0L;
  for (int k = 1; k < 4; ++k) {
    term *= 8.0L / k;
    sum += term;
  }
  const double oracle = static_cast<double>(expl(-8.0L) * sum);
  const auto b =
      ka::power_violation_prob({CodebookSpec::Ensemble::Gaussian, 1.0}, cfg, 1);
  CHECK(std::exp(b.log_value) == doctest::Approx(oracle).epsilon(1e-10));
  CHECK(oracle == doctest::Approx(0.0423794).epsilon(1e-5));
}

TEST_CASE("noise-only pairwise bound equals the scalar minimization") {
  // K_a = 0 to K'_a = 1: closed form over rho, checked against a fine scan
  const int64_t n = 64, L = 8;
  const double Pp = 0.5;
  const auto bound = ka::pairwise_new_measure({}, n, L, 1, Pp);

  auto p1 = [&](double rho) {
    return rho * n * L * (1.0 + 1.5 * Pp) - L * n * std::log1p(rho);
  };
  auto p2 = [&](double rho) {
    return -rho * n * L * (1.0 + 0.5 * Pp) - L * n * std::log1p(-rho);
  };
  double scan = specfun::kPosInf;
  for (int i = 0; i <= 2000000; ++i) {
    const double r1 = i * 1e-5;
    scan = std::min(scan, p1(r1));
    const double r2 = i * (1.0 - 1e-9) / 2000000.0;
    scan = std::min(scan, p2(r2));
  }
  CHECK(bound.log_value == doctest::Approx(scan).epsilon(1e-6));
  CHECK(bound.std_err == 0.0);
}

TEST_CASE("pairwise bound is nonincreasing in L under common randomness") {
  ka::PairwiseErrorQuery q;
  q.cfg = SystemConfig{100, 30, 16, 0.05, 64};
  q.spec = {CodebookSpec::Ensemble::Spherical, 0.05};
  q.K_a = 20;
  q.K_a_prime = 22;
  q.plan = {3, 120};
  const auto at16 = ka::pairwise_error_bound(q);
  q.cfg.L = 32;
  const auto at32 = ka::pairwise_error_bound(q);
  CHECK(at32.bound.log_value <= at16.bound.log_value);
  CHECK(at16.chosen_P_prime == 0.05);  // spherical admits the power cap
}

TEST_CASE("concentration bound anchor and doubling identity") {
  const auto b = ka::concentration_bound(100, 10, 1, 1.0, 0.5);
  // direct evaluation of the two exponents
  const double quad = (100.0 * 0.5) * (100.0 * 0.5) /
                      (8.0 * (100.0 + (100.0 * 1.0) * (100.0 * 1.0)));
  const double lin = 100.0 * 0.5 / (4.0 * 101.0);
  const double direct = 2.0 * std::exp(-10.0 * std::min(quad, lin));
  CHECK(std::exp(b.log_value) == doctest::Approx(direct).epsilon(1e-12));
  // the five-decimal constant is the rounded print of the direct value
  CHECK(std::exp(b.log_value) == doctest::Approx(1.46777).epsilon(1e-5));

  // bound(2L) = bound(L)^2 / 2 and the delta -> infinity limit
  const auto d = ka::concentration_bound(100, 20, 1, 1.0, 0.5);
  CHECK(d.log_value ==
        doctest::Approx(2.0 * b.log_value - M_LN2).epsilon(1e-12));
  CHECK(ka::concentration_bound(100, 10, 1, 1.0, 1e9).log_value <
        -1e6);
  CHECK_THROWS(ka::concentration_bound(100, 10, 1, 1.0, 0.0));
}

TEST_CASE("blocklength-limit closed form") {
  auto make = [](int64_t K_a, int64_t K_ap, int64_t L) {
    ka::AsymptoticQuery q;
    q.mode = ka::AsymptoticMode::BlocklengthLimit;
    q.L = L;
    q.K_a = K_a;
    q.K_a_prime = K_ap;
    q.log2_M = specfun::kPosInf;  // drop the collision term
    return ka::asymptotic_pairwise_bound(q);
  };
  auto direct = [](double K_a, double two_kp, double L) {
    const double ratio = two_kp / (2.0 * K_a);
    return std::exp(K_a * L * (1.0 - ratio + std::log(ratio)));
  };
  CHECK(std::exp(make(2, 1, 1).log_value) ==
        doctest::Approx(direct(2, 3, 1)).epsilon(1e-12));
  CHECK(std::exp(make(2, 1, 1).log_value) ==
        doctest::Approx(0.92740).epsilon(1e-5));
  CHECK(std::exp(make(1, 2, 1).log_value) ==
        doctest::Approx(direct(1, 3, 1)).epsilon(1e-12));
  CHECK(std::exp(make(1, 2, 1).log_value) ==
        doctest::Approx(0.90980).epsilon(1e-5));
  CHECK(std::exp(make(1, 2, 100).log_value) ==
        doctest::Approx(direct(1, 3, 100)).epsilon(1e-12));
  CHECK(std::exp(make(1, 2, 100).log_value) ==
        doctest::Approx(7.84e-5).epsilon(1e-3));

  // finite codebook restores the collision term
  ka::AsymptoticQuery q;
  q.mode = ka::AsymptoticMode::BlocklengthLimit;
  q.L = 1;
  q.K_a = 2;
  q.K_a_prime = 1;
  q.log2_M = 10.0;
  CHECK(std::exp(ka::asymptotic_pairwise_bound(q).log_value) ==
        doctest::Approx(direct(2, 3, 1) + 1.0 / 1024.0).epsilon(1e-12));

  CHECK_THROWS(make(2, 2, 1));
}

TEST_CASE("power-limit floor sits below the finite-power bound") {
  // with common random numbers the finite-P bound converges down toward
  // the floor as P grows
  const int64_t n = 128, L = 8, K_a = 4, K_ap = 6;
  ka::AsymptoticQuery aq;
  aq.mode = ka::AsymptoticMode::PowerLimit;
  aq.n = n;
  aq.L = L;
  aq.K_a = K_a;
  aq.K_a_prime = K_ap;
  aq.log2_M = 40.0;
  aq.ensemble = CodebookSpec::Ensemble::Spherical;
  aq.plan = {9, 200};
  const auto floor = ka::asymptotic_pairwise_bound(aq);

  ka::PairwiseErrorQuery pq;
  pq.cfg = SystemConfig{n, 40, L, 64.0, 32};
  pq.spec = {CodebookSpec::Ensemble::Spherical, 64.0};
  pq.K_a = K_a;
  pq.K_a_prime = K_ap;
  pq.plan = {9, 200};
  const auto at_high_p = ka::pairwise_error_bound(pq);
  CHECK(std::fabs(at_high_p.bound.log_value - floor.log_value) < 0.2);
}

TEST_CASE("interval radius") {
  const auto base = ka::estimation_interval_radius(10, 10000, 1000000, 1.0,
                                                   1000, 33.0);
  const double lnK = std::log(1000.0);
  const double direct = std::sqrt(
      33.0 * lnK * (100.0 / 1e6 + 1.0 / (1e4 * 1e6 * 1.0)));
  CHECK(base.radius == doctest::Approx(direct).epsilon(1e-12));
  CHECK(base.exact_regime ==
        (10.0 <= std::sqrt(1e6 / (33.0 * lnK) - 1.0 / 1e4)));

  // monotone decreasing in L
  const auto more_antennas =
      ka::estimation_interval_radius(10, 10000, 4000000, 1.0, 1000, 33.0);
  CHECK(more_antennas.radius < base.radius);

  // large-P plateau
  const auto big_p =
      ka::estimation_interval_radius(10, 10000, 1000000, 1e9, 1000, 33.0);
  CHECK(big_p.radius ==
        doctest::Approx(std::sqrt(33.0 * lnK) * 10.0 / 1000.0).epsilon(1e-6));

  CHECK_THROWS(ka::estimation_interval_radius(10, 100, 100, 1.0, 100, 32.0));
}
