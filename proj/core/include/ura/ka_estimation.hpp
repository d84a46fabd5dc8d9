#pragma once

#include <vector>

#include "ura/randmat.hpp"
#include "ura/types.hpp"

// The energy-based active-user-count estimator and every bound on its
// error: the non-asymptotic pairwise error bound (with both ensemble
// variants), the spherical concentration bound, the large-P and large-n
// error floors, and the interval radius of the estimation-gap scaling law.

namespace ura::ka_estimation {

// argmin over K in [0:K_max] of | energy - (1 + K P') |, ties toward the
// smaller count. `mean_energy` is ||Y||_F^2 / (nL).
int64_t estimate_active_count(double mean_energy, double P_prime,
                              int64_t K_max);
int64_t estimate_active_count(const randmat::CMatrix& Y, double P_prime,
                              int64_t K_max);

// P[ ||c||^2 > nP ] scaled by K_a: K_a * Q(n, nP/P') for the gaussian
// ensemble, exactly zero for the spherical one.
BoundValue power_violation_prob(const CodebookSpec& spec,
                                const SystemConfig& cfg, int64_t K_a);

// Unit-power Gram spectra (one per trial) for the K_a transmitted
// codewords; shared across K'_a / rho / P' / L candidates so orderings
// under common random numbers are meaningful.
std::vector<randmat::GramSpectrum> sample_unit_gram_pool(
    int64_t n, int64_t K_a, CodebookSpec::Ensemble ensemble,
    const MonteCarloPlan& plan);

// min{p1, p2} of the pairwise estimation-error bound under the
// collision-free unconstrained-power measure, at a fixed design power.
// Expectations are over the pool; K_a = 0 (empty pool) is closed form.
BoundValue pairwise_new_measure(const std::vector<randmat::GramSpectrum>& pool,
                                int64_t n, int64_t L, int64_t K_a_prime,
                                double P_prime);

struct PairwiseErrorQuery {
  SystemConfig cfg;
  CodebookSpec spec;  // P_prime is the grid upper end (normally = P)
  int64_t K_a = 0;
  int64_t K_a_prime = 0;
  MonteCarloPlan plan;
  int pprime_grid = 16;  // geometric grid size for the gaussian ensemble
};

struct PairwiseBound {
  BoundValue bound;
  double chosen_P_prime = 0.0;
  BoundValue new_measure_term;  // min{p1,p2} at the chosen design power
};

// Full pairwise bound: min over the design-power grid of
// min{p1,p2} + p_{0,K_a} + C(K_a,2)/M.
PairwiseBound pairwise_error_bound(const PairwiseErrorQuery& q);

// Two-sided tail bound for the spherical ensemble; may exceed 1 and is
// reported raw.
BoundValue concentration_bound(int64_t n, int64_t L, int64_t K_a, double P,
                               double delta);

enum class AsymptoticMode { PowerLimit, BlocklengthLimit };

struct AsymptoticQuery {
  AsymptoticMode mode = AsymptoticMode::BlocklengthLimit;
  int64_t n = 0;  // PowerLimit only
  int64_t L = 0;
  int64_t K_a = 0;
  int64_t K_a_prime = 0;
  double log2_M = 0.0;  // collision term; +inf drops it
  CodebookSpec::Ensemble ensemble = CodebookSpec::Ensemble::Spherical;
  MonteCarloPlan plan;  // PowerLimit only
};

// Error floors: the closed-form large-n limit or the Monte-Carlo large-P
// limit evaluated on the unit-power Gram.
BoundValue asymptotic_pairwise_bound(const AsymptoticQuery& q);

struct IntervalRadius {
  double radius = 0.0;
  // true when K_a <= sqrt(L/(alpha ln K) - 1/(n P^2)), the regime where the
  // estimate is exact with overwhelming probability
  bool exact_regime = false;
};

IntervalRadius estimation_interval_radius(int64_t K_a, int64_t n, int64_t L,
                                          double P, int64_t K, double alpha);

}  // namespace ura::ka_estimation
