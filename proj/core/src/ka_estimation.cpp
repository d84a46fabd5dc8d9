#include "ura/ka_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ura/optimize.hpp"
#include "ura/specfun.hpp"

namespace ura::ka_estimation {

using specfun::kNegInf;

namespace {

constexpr uint32_t kPairwisePoolTag = 1;

// Chernoff exponent of P[ ||Y||_F^2 <= nL threshold ] given the Gram
// spectrum: min_{rho>=0} rho nL thr - L sum ln(1 + rho (1+lambda_i)).
double chernoff_below(const randmat::GramSpectrum& spec, int64_t n, int64_t L,
                      double threshold) {
  const double nn = static_cast<double>(n);
  const double LL = static_cast<double>(L);
  const auto m = static_cast<Eigen::Index>(spec.eigenvalues.size());
  auto objective = [&](double rho) {
    double acc = (nn - static_cast<double>(m)) * std::log1p(rho);
    for (double lam : spec.eigenvalues) acc += std::log1p(rho * (1.0 + lam));
    return rho * nn * LL * threshold - LL * acc;
  };
  return optimize::golden_min_ray(objective).second;
}

// Chernoff exponent of P[ ||Y||_F^2 >= nL threshold ]:
// min_{0<=rho<1/(1+lambda_1)} -rho nL thr - L sum ln(1 - rho (1+lambda_i)).
double chernoff_above(const randmat::GramSpectrum& spec, int64_t n, int64_t L,
                      double threshold) {
  const double nn = static_cast<double>(n);
  const double LL = static_cast<double>(L);
  const auto m = static_cast<Eigen::Index>(spec.eigenvalues.size());
  const double lam1 = spec.eigenvalues.empty() ? 0.0 : spec.eigenvalues.front();
  const double hi = (1.0 - 1e-9) / (1.0 + lam1);
  auto objective = [&](double rho) {
    double acc = (nn - static_cast<double>(m)) * std::log1p(-rho);
    for (double lam : spec.eigenvalues) acc += std::log1p(-rho * (1.0 + lam));
    return -rho * nn * LL * threshold - LL * acc;
  };
  return optimize::golden_min(objective, 0.0, hi).second;
}

double collision_log_term(int64_t K_a, double log2_M) {
  if (K_a < 2 || log2_M == specfun::kPosInf) return kNegInf;
  return specfun::log_binomial(static_cast<double>(K_a), 2.0) -
         log2_M * M_LN2;
}

}  // namespace

int64_t estimate_active_count(double mean_energy, double P_prime,
                              int64_t K_max) {
  if (K_max < 0) throw ValidationError({"K_max >= 0"});
  if (!(P_prime > 0.0)) throw ValidationError({"P' > 0"});
  const double x = (mean_energy - 1.0) / P_prime;  // unconstrained argmin
  const auto lo = static_cast<int64_t>(std::floor(x));
  int64_t best = std::clamp<int64_t>(lo, 0, K_max);
  const int64_t next = std::clamp<int64_t>(lo + 1, 0, K_max);
  auto metric = [&](int64_t k) {
    return std::fabs(mean_energy - (1.0 + static_cast<double>(k) * P_prime));
  };
  if (metric(next) < metric(best)) best = next;  // strict: ties stay smaller
  return best;
}

int64_t estimate_active_count(const randmat::CMatrix& Y, double P_prime,
                              int64_t K_max) {
  const double nl = static_cast<double>(Y.rows()) * Y.cols();
  return estimate_active_count(Y.squaredNorm() / nl, P_prime, K_max);
}

BoundValue power_violation_prob(const CodebookSpec& spec,
                                const SystemConfig& cfg, int64_t K_a) {
  if (K_a < 0) throw ValidationError({"K_a >= 0"});
  if (K_a == 0 || spec.ensemble == CodebookSpec::Ensemble::Spherical)
    return BoundValue::exact(kNegInf);
  const double log_q = specfun::log_reg_gamma(
      specfun::GammaKind::Upper, static_cast<double>(cfg.n),
      static_cast<double>(cfg.n) * cfg.P / spec.P_prime);
  return BoundValue::exact(std::log(static_cast<double>(K_a)) + log_q);
}

std::vector<randmat::GramSpectrum> sample_unit_gram_pool(
    int64_t n, int64_t K_a, CodebookSpec::Ensemble ensemble,
    const MonteCarloPlan& plan) {
  validate_plan(plan);
  if (K_a == 0) return {};
  const uint64_t stream =
      rng::pack_stream(kPairwisePoolTag, static_cast<uint64_t>(K_a));
  const CodebookSpec unit{ensemble, 1.0};
  std::vector<randmat::GramSpectrum> pool(
      static_cast<std::size_t>(plan.trials));
  rng::parallel_for(pool.size(), plan.threads, [&](std::size_t t) {
    rng::Substream sub(plan.seed, stream, t);
    pool[t] =
        randmat::gram_spectrum(randmat::sample_codebook(unit, n, K_a, sub));
  });
  return pool;
}

BoundValue pairwise_new_measure(const std::vector<randmat::GramSpectrum>& pool,
                                int64_t n, int64_t L, int64_t K_a_prime,
                                double P_prime) {
  const double thr_below =
      1.0 + (static_cast<double>(K_a_prime) + 0.5) * P_prime;
  const double thr_above =
      1.0 + (static_cast<double>(K_a_prime) - 0.5) * P_prime;

  if (pool.empty()) {  // K_a = 0: F = I_n, no expectation needed
    randmat::GramSpectrum empty;
    const double p1 = chernoff_below(empty, n, L, thr_below);
    const double p2 = chernoff_above(empty, n, L, thr_above);
    return BoundValue::exact(std::min(p1, p2));
  }

  LogMeanAccumulator below, above;
  for (const auto& unit : pool) {
    randmat::GramSpectrum scaled = unit;
    for (double& lam : scaled.eigenvalues) lam *= P_prime;
    below.add(chernoff_below(scaled, n, L, thr_below));
    above.add(chernoff_above(scaled, n, L, thr_above));
  }
  return bound_min(below.to_bound(), above.to_bound());
}

PairwiseBound pairwise_error_bound(const PairwiseErrorQuery& q) {
  validate_system_config(q.cfg);
  if (q.K_a < 0 || q.K_a > q.cfg.K || q.K_a_prime < 0 || q.K_a_prime > q.cfg.K)
    throw ValidationError({"K_a, K_a' in [0, K]"});
  if (q.K_a_prime == q.K_a) throw ValidationError({"K_a' != K_a"});

  std::vector<double> grid;
  if (q.spec.ensemble == CodebookSpec::Ensemble::Spherical) {
    grid.push_back(q.spec.P_prime);
  } else {
    const int points = std::max(1, q.pprime_grid);
    const double hi = q.spec.P_prime;
    const double lo = hi / 100.0;
    for (int i = 0; i < points; ++i) {
      const double f = points == 1
                           ? 1.0
                           : static_cast<double>(i) / (points - 1);
      grid.push_back(lo * std::pow(hi / lo, f));
    }
  }

  const auto pool =
      sample_unit_gram_pool(q.cfg.n, q.K_a, q.spec.ensemble, q.plan);
  const double coll = collision_log_term(q.K_a, q.cfg.log2_M());

  PairwiseBound best;
  best.bound.log_value = specfun::kPosInf;
  for (double pp : grid) {
    const BoundValue pm =
        pairwise_new_measure(pool, q.cfg.n, q.cfg.L, q.K_a_prime, pp);
    const BoundValue p0 =
        power_violation_prob({q.spec.ensemble, pp}, q.cfg, q.K_a);
    BoundValue total = bound_sum(bound_sum(pm, p0),
                                 BoundValue::exact(coll));
    total.samples = static_cast<int64_t>(pool.size());
    if (total.log_value < best.bound.log_value) {
      best.bound = total;
      best.chosen_P_prime = pp;
      best.new_measure_term = pm;
    }
  }
  return best;
}

BoundValue concentration_bound(int64_t n, int64_t L, int64_t K_a, double P,
                               double delta) {
  if (!(delta > 0.0)) throw std::domain_error("concentration_bound: delta > 0");
  const double nn = static_cast<double>(n);
  const double nKaP = nn * static_cast<double>(K_a) * P;
  const double quad = (nn * delta) * (nn * delta) / (8.0 * (nn + nKaP * nKaP));
  const double lin = nn * delta / (4.0 * (1.0 + nKaP));
  return BoundValue::exact(M_LN2 -
                           static_cast<double>(L) * std::min(quad, lin));
}

BoundValue asymptotic_pairwise_bound(const AsymptoticQuery& q) {
  if (q.K_a_prime == q.K_a)
    throw ValidationError({"K_a' != K_a"});
  if (q.K_a < 1) throw ValidationError({"K_a >= 1"});
  const double coll = collision_log_term(q.K_a, q.log2_M);

  if (q.mode == AsymptoticMode::BlocklengthLimit) {
    const double Ka = static_cast<double>(q.K_a);
    const double two_kp = q.K_a_prime < q.K_a
                              ? 2.0 * q.K_a_prime + 1.0
                              : 2.0 * q.K_a_prime - 1.0;
    const double ratio = two_kp / (2.0 * Ka);
    const double expo =
        Ka * static_cast<double>(q.L) * (1.0 - ratio + std::log(ratio));
    return BoundValue::exact(specfun::log_add_exp(expo, coll));
  }

  // PowerLimit: Monte-Carlo over the unit-power Gram with the rescaled
  // Chernoff variable.
  if (q.n < 1) throw ValidationError({"n >= 1"});
  const auto pool = sample_unit_gram_pool(q.n, q.K_a, q.ensemble, q.plan);
  const double nn = static_cast<double>(q.n);
  const double LL = static_cast<double>(q.L);
  const double c_below = static_cast<double>(q.K_a_prime) + 0.5;
  const double c_above = static_cast<double>(q.K_a_prime) - 0.5;

  LogMeanAccumulator below, above;
  for (const auto& unit : pool) {
    auto f_below = [&](double rho) {
      double acc = 0.0;
      for (double lam : unit.eigenvalues) acc += std::log1p(rho * lam);
      return rho * nn * LL * c_below - LL * acc;
    };
    below.add(optimize::golden_min_ray(f_below).second);

    const double lam1 = unit.eigenvalues.empty() ? 1.0
                                                 : unit.eigenvalues.front();
    auto f_above = [&](double rho) {
      double acc = 0.0;
      for (double lam : unit.eigenvalues) acc += std::log1p(-rho * lam);
      return -rho * nn * LL * c_above - LL * acc;
    };
    above.add(
        optimize::golden_min(f_above, 0.0, (1.0 - 1e-9) / lam1).second);
  }
  BoundValue floor = bound_min(below.to_bound(), above.to_bound());
  return bound_sum(floor, BoundValue::exact(coll));
}

IntervalRadius estimation_interval_radius(int64_t K_a, int64_t n, int64_t L,
                                          double P, int64_t K, double alpha) {
  if (!(alpha > 32.0))
    throw std::domain_error("estimation_interval_radius: alpha > 32 required");
  if (K_a < 0 || n < 1 || L < 1 || K < 1 || !(P > 0.0))
    throw ValidationError({"positive parameters required"});
  const double Ka = static_cast<double>(K_a);
  const double lnK = std::log(static_cast<double>(K));
  const double LL = static_cast<double>(L);
  const double nn = static_cast<double>(n);
  IntervalRadius out;
  out.radius =
      std::sqrt(alpha * lnK * (Ka * Ka / LL + 1.0 / (nn * LL * P * P)));
  const double arg = LL / (alpha * lnK) - 1.0 / (nn * P * P);
  out.exact_regime = arg >= 0.0 && Ka <= std::sqrt(arg);
  return out;
}

}  // namespace ura::ka_estimation
