#include <cmath>

#include "doctest.h"
#include "ura/specfun.hpp"
#include "ura/types.hpp"

using namespace ura;

TEST_CASE("binomial prior") {
  const auto prior = ActivityPrior::binomial(2, 0.5);
  CHECK(std::exp(prior.log_pmf(0)) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(std::exp(prior.log_pmf(1)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::exp(prior.log_pmf(2)) == doctest::Approx(0.25).epsilon(1e-12));

  const auto big = ActivityPrior::binomial(200, 0.5);
  CHECK(big.mean() == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(big.log_mass_in(0, 200) == doctest::Approx(0.0).epsilon(1e-10));

  CHECK_THROWS_AS(ActivityPrior::binomial(200, 1.5), ValidationError);
  CHECK_THROWS_AS(ActivityPrior::binomial(0, 0.5), ValidationError);
}

TEST_CASE("table prior") {
  const auto point = ActivityPrior::table({{3, 1.0}}, 10);
  CHECK(std::exp(point.log_pmf(3)) == doctest::Approx(1.0));
  CHECK(point.log_pmf(2) == specfun::kNegInf);

  CHECK_THROWS_AS(ActivityPrior::table({}, 10), ValidationError);
  CHECK_THROWS_AS(ActivityPrior::table({{3, -1.0}}, 10), ValidationError);
  CHECK_THROWS_AS(ActivityPrior::table({{12, 1.0}}, 10), ValidationError);
}

TEST_CASE("prior window and sampling") {
  const auto prior = ActivityPrior::binomial(8, 0.25);
  auto [lo, hi] = prior.support_window(1e-6);
  CHECK(lo == 0);
  CHECK(hi == 8);  // pmf(8) = 0.25^8 > 5e-7 keeps the top point
  CHECK(prior.sample(1e-12) == 0);
  CHECK(prior.sample(1.0 - 1e-12) == 8);

  const auto narrow = ActivityPrior::binomial(200, 0.5);
  auto [nlo, nhi] = narrow.support_window(1e-6);
  CHECK(nlo > 50);
  CHECK(nhi < 150);
  CHECK(std::exp(narrow.log_mass_out(nlo, nhi)) <= 1e-6);
}

TEST_CASE("system config validation") {
  SystemConfig good{1000, 100, 128, 0.01, 600};
  CHECK_NOTHROW(validate_system_config(good));
  CHECK(good.log2_M() == 100.0);
  CHECK(good.nP() == doctest::Approx(10.0));

  SystemConfig bad_n = good;
  bad_n.n = 0;
  CHECK_THROWS_WITH_AS(validate_system_config(bad_n),
                       doctest::Contains("n >= 1"), ValidationError);

  SystemConfig bad_p = good;
  bad_p.P = -1.0;
  CHECK_THROWS_WITH_AS(validate_system_config(bad_p),
                       doctest::Contains("P > 0"), ValidationError);

  SystemConfig awful{0, 0, 0, -1.0, 0};
  try {
    validate_system_config(awful);
    CHECK(false);
  } catch (const ValidationError& e) {
    CHECK(e.items().size() == 5);  // every violation itemized
  }
}

TEST_CASE("codebook spec validation") {
  CHECK_NOTHROW(validate_codebook_spec(
      {CodebookSpec::Ensemble::Spherical, 0.5}, 0.5));
  CHECK_THROWS_AS(validate_codebook_spec(
                      {CodebookSpec::Ensemble::Gaussian, 0.6}, 0.5),
                  ValidationError);
  CHECK_THROWS_AS(validate_codebook_spec(
                      {CodebookSpec::Ensemble::Gaussian, 0.0}, 0.5),
                  ValidationError);
}

TEST_CASE("bound value") {
  BoundValue b = BoundValue::exact(0.5);  // a bound above one
  CHECK(b.clip_to_probability() == 1.0);
  CHECK(BoundValue::exact(std::log(0.25)).clip_to_probability() ==
        doctest::Approx(0.25));
  CHECK(BoundValue::exact(specfun::kNegInf).clip_to_probability() == 0.0);

  const BoundValue s = bound_sum(BoundValue::exact(std::log(0.25)),
                                 BoundValue::exact(std::log(0.5)));
  CHECK(std::exp(s.log_value) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("log-mean accumulator matches a linear-domain computation") {
  LogMeanAccumulator acc;
  const std::vector<double> vals{0.1, 0.4, 0.2, 0.9, 0.3};
  for (double v : vals) acc.add(std::log(v));
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= vals.size();
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= vals.size();  // population variance, then / (T-1) for the mean
  const double se = std::sqrt(var / (vals.size() - 1));
  CHECK(std::exp(acc.log_mean()) == doctest::Approx(mean).epsilon(1e-12));
  CHECK(acc.std_err() == doctest::Approx(se).epsilon(1e-9));
}
