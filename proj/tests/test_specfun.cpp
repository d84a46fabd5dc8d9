#include <cmath>
#include <vector>

#include "doctest.h"
#include "ura/specfun.hpp"

using namespace ura::specfun;

namespace {

// Independent oracle: Q(a, x) for integer a as the finite Poisson sum
// e^{-x} sum_{k=0}^{a-1} x^k / k!, accumulated in extended precision.
long double upper_gamma_poisson(int a, long double x) {
  long double term = 1.0L;
  long double sum = 1.0L;
  for (int k = 1; k < a; ++k) {
    term *= x / k;
    sum += term;
  }
  return expl(-x) * sum;
}

// Independent oracle: chi-square(k) cdf by Simpson quadrature of the density.
double chi2_cdf_quadrature(int k, double x) {
  const int steps = 40000;
  const double h = x / steps;
  auto density = [k](double t) {
    if (t <= 0.0) return 0.0;
    const double a = 0.5 * k;
    return std::exp((a - 1.0) * std::log(t) - 0.5 * t - a * M_LN2 -
                    std::lgamma(a));
  };
  double acc = density(0.0) + density(x);
  for (int i = 1; i < steps; ++i)
    acc += density(i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("regularized incomplete gamma anchors") {
  CHECK(log_reg_gamma(GammaKind::Lower, 1.0, 1.0) ==
        doctest::Approx(std::log(1.0 - std::exp(-1.0))).epsilon(1e-12));
  CHECK(log_reg_gamma(GammaKind::Upper, 3.7, 0.0) == 0.0);
  CHECK(log_reg_gamma(GammaKind::Lower, 2.0, 0.0) == kNegInf);

  const double oracle = static_cast<double>(upper_gamma_poisson(4, 8.0L));
  CHECK(std::exp(log_reg_gamma(GammaKind::Upper, 4.0, 8.0)) ==
        doctest::Approx(oracle).epsilon(1e-12));
  CHECK(oracle == doctest::Approx(0.0423794).epsilon(1e-6));

  CHECK_THROWS(log_reg_gamma(GammaKind::Lower, 0.0, 1.0));
  CHECK_THROWS(log_reg_gamma(GammaKind::Lower, 1.0, -1.0));
}

TEST_CASE("lower and upper halves sum to one") {
  for (double a : {0.5, 1.0, 4.0, 100.0, 1000.0}) {
    for (double x : {0.0, a / 2.0, a, 2.0 * a}) {
      const double sum = std::exp(log_reg_gamma(GammaKind::Lower, a, x)) +
                         std::exp(log_reg_gamma(GammaKind::Upper, a, x));
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("chi-square tail anchors") {
  CHECK(std::exp(log_chi2_tail(2, 2.0 * M_LN2, Chi2Side::Cdf)) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(log_chi2_tail(5, 0.0, Chi2Side::Cdf) == kNegInf);

  const double oracle = chi2_cdf_quadrature(4, 1.0);
  CHECK(std::exp(log_chi2_tail(4, 1.0, Chi2Side::Cdf)) ==
        doctest::Approx(oracle).epsilon(1e-9));
  CHECK(oracle == doctest::Approx(0.090204).epsilon(1e-4));

  // monotone in x
  double prev = kNegInf;
  for (double x : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const double c = log_chi2_tail(4, x, Chi2Side::Cdf);
    CHECK(c >= prev);
    prev = c;
  }
  CHECK_THROWS(log_chi2_tail(0, 1.0, Chi2Side::Cdf));
}

TEST_CASE("chi-square quantile") {
  CHECK(chi2_quantile(2, 0.5).value ==
        doctest::Approx(2.0 * M_LN2).epsilon(1e-10));
  CHECK(chi2_quantile(10, 0.0).value == 0.0);
  CHECK(chi2_quantile(7, 1.0).infinite);

  const auto q = chi2_quantile(256, 0.001);
  CHECK(std::exp(log_chi2_tail(256, q.value, Chi2Side::Cdf)) ==
        doctest::Approx(0.001).epsilon(1e-8));

  // round trip in x-space
  for (int k : {2, 64, 256, 2048}) {
    for (double frac : {0.5, 1.0, 2.0}) {
      const double x = frac * k;
      const double p = std::exp(log_chi2_tail(k, x, Chi2Side::Cdf));
      if (p <= 0.0 || p >= 1.0) continue;
      const double back = chi2_quantile(k, p).value;
      CHECK(back == doctest::Approx(x).epsilon(1e-8));
    }
  }
}

TEST_CASE("chi-square survival lower bound") {
  // exponent vanishes at u = k
  const double direct = std::log((1.0 - std::exp(-2.0)) / 2.0 / std::sqrt(2.0) *
                                 (2.0 / (2.0 * std::sqrt(2.0))));
  CHECK(log_chi2_sf_lower_bound(2.0, 2.0) ==
        doctest::Approx(direct).epsilon(1e-12));
  CHECK_NOTHROW(log_chi2_sf_lower_bound(2.0, 1.0));  // u = k-1 admitted
  CHECK_THROWS(log_chi2_sf_lower_bound(2.0, 0.5));
  CHECK_THROWS(log_chi2_sf_lower_bound(1.5, 3.0));

  // dominated by the exact survival function on a grid
  for (int k : {2, 4, 16, 64, 256}) {
    for (int i = 0; i < 20; ++i) {
      const double u = (k - 1) + 0.35 * k * i;
      const double exact = log_chi2_tail(k, u, Chi2Side::Sf);
      CHECK(log_chi2_sf_lower_bound(k, u) <= exact + 1e-12);
    }
  }
}

TEST_CASE("log binomial") {
  CHECK(log_binomial(4.0, 2.0) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  CHECK(log_binomial(17.0, 0.0) == 0.0);
  CHECK(log_binomial(3.0, 5.0) == kNegInf);

  // huge first argument: exact product oracle in extended precision
  const double M = std::exp2(100.0);
  long double oracle = 0.0L;
  for (int i = 0; i < 300; ++i)
    oracle += logl(static_cast<long double>(M) - i);
  oracle -= lgammal(301.0L);
  CHECK(log_binomial(M, 300.0) ==
        doctest::Approx(static_cast<double>(oracle)).epsilon(1e-12));

  // symmetry for integer n
  for (int k = 0; k <= 30; ++k)
    CHECK(log_binomial(30.0, k) ==
          doctest::Approx(log_binomial(30.0, 30.0 - k)).epsilon(1e-9));

  // multiplicative identity C(n,k) C(n-k,j) = C(n,k+j) C(k+j,k)
  for (auto [n, k, j] : std::vector<std::array<double, 3>>{
           {40, 7, 5}, {123, 50, 31}, {9, 3, 3}}) {
    CHECK(log_binomial(n, k) + log_binomial(n - k, j) ==
          doctest::Approx(log_binomial(n, k + j) + log_binomial(k + j, k))
              .epsilon(1e-8));
  }
}

TEST_CASE("binary entropy") {
  CHECK(binary_entropy(0.5) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  const long double p = 0.25L;
  const long double direct = -(p * log2l(p) + (1 - p) * log2l(1 - p));
  CHECK(binary_entropy(0.25) ==
        doctest::Approx(static_cast<double>(direct)).epsilon(1e-12));
  CHECK(static_cast<double>(direct) == doctest::Approx(0.811278).epsilon(1e-6));
  CHECK_THROWS(binary_entropy(-0.1));
}

TEST_CASE("log sum exp") {
  const std::vector<double> two_zeros{0.0, 0.0};
  CHECK(log_sum_exp(two_zeros) == doctest::Approx(M_LN2).epsilon(1e-15));
  const std::vector<double> shifted{-1000.0, -1000.0};
  CHECK(log_sum_exp(shifted) == doctest::Approx(-1000.0 + M_LN2).epsilon(1e-15));
  const std::vector<double> probs{std::log(0.2), std::log(0.3), std::log(0.5)};
  CHECK(log_sum_exp(probs) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(log_sum_exp({}) == kNegInf);
  const std::vector<double> single{3.25};
  CHECK(log_sum_exp(single) == 3.25);
}
