#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ura/ka_estimation.hpp"
#include "ura/randmat.hpp"
#include "ura/types.hpp"

// Achievability machinery for data detection: the MAP decoding metric,
// the misdetection/false-alarm bounds of the two-stage scheme with their
// nested Chernoff optimizations, the minimum energy-per-bit search, and
// the joint-error achievability bound for a known user count.

namespace ura::detection {

struct DecoderWindow {
  int64_t K_l = 0;
  int64_t K_u = 0;
  int64_t r_prime = 0;

  // List-size interval around an estimated count.
  int64_t list_lower(int64_t K_a_prime) const {
    return std::max(K_l, K_a_prime - r_prime);
  }
  int64_t list_upper(int64_t K_a_prime) const {
    return std::min(K_u, K_a_prime + r_prime);
  }
};

// MAP decoding metric
//   g = L ln|I + C C^H| + tr(Y^H (I + C C^H)^{-1} Y)
//       - ln P_Ka(|C|) + ln C(M, |C|),
// evaluated through a Hermitian solve on the small Gram side. A candidate
// count with zero prior mass yields +inf (excluded). The mismatched-prior
// variant is the same call with the assumed prior passed in.
double map_metric(const randmat::CMatrix& Y, const randmat::CMatrix& candidates,
                  const ActivityPrior& prior, const SystemConfig& cfg);

struct CellDiagnostic {
  int64_t K_a = 0, K_a_prime = 0, t = 0, t_prime = 0;
  double omega = 0.0, nu = 0.0;        // chosen optimizer point
  double log_pre_clip = 0.0;           // min-term before the min{1, ...} clip
  double std_err = 0.0;
};

struct DetectionQuery {
  SystemConfig cfg;
  ActivityPrior prior;
  CodebookSpec spec;
  DecoderWindow window;
  MonteCarloPlan plan;
  // Decoder-side prior for the mismatched case; empty means matched.
  ActivityPrior decoder_prior;
  bool collect_diagnostics = false;
};

struct DetectionBounds {
  BoundValue p_md;
  BoundValue p_fa;
  double log_p0 = 0.0;  // change-of-measure + prior-tail mass, shared
  std::vector<CellDiagnostic> cells;
};

DetectionBounds detection_error_bounds(const DetectionQuery& q);

struct SearchConfig {
  double P_lo = 1e-6;
  double P_hi = 1.0;
  double tol_db = 0.01;
  std::vector<int64_t> r_prime_candidates;  // empty: {1..30}
  double window_tail_mass = 1e-6;
  int pprime_grid = 16;  // gaussian design-power grid size
};

struct EbN0Result {
  bool feasible = false;
  double ebn0_db = 0.0;
  double P = 0.0;
  double P_prime = 0.0;
  int64_t r_prime = 0;
  int64_t K_l = 0;
  int64_t K_u = 0;
  std::string note;  // binding information or the infeasibility reason
};

// Bisection on P (log scale) for the smallest power whose detection bounds
// meet the targets; reports the achieving (P', r', K_l, K_u) witness.
EbN0Result min_ebn0_achievability(const SystemConfig& cfg_template,
                                  const ActivityPrior& prior,
                                  CodebookSpec::Ensemble ensemble,
                                  double eps_md, double eps_fa,
                                  const SearchConfig& search,
                                  const MonteCarloPlan& plan);

// Joint-error achievability for a fixed, known K_a: the list size equals
// K_a and every trial with a wrong set counts, so the t-sum carries unit
// weights and no prior terms appear in the exponents.
struct JointBound {
  BoundValue bound;
  double chosen_P_prime = 0.0;
  double log_p0 = 0.0;            // collision + power-violation mass
  std::vector<double> log_p_t;    // per-t error terms at the chosen power
};

JointBound joint_error_achievability(const SystemConfig& cfg, int64_t K_a,
                                     CodebookSpec::Ensemble ensemble,
                                     const MonteCarloPlan& plan,
                                     int pprime_grid = 16);

}  // namespace ura::detection
