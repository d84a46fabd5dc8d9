#pragma once

#include <string>

#include "ura/types.hpp"

// Converse bounds on the minimum energy-per-bit: the single-user bound with
// known activity, the binomial single-user bound with unknown activity, the
// Fano-type ensemble converse, its joint-error variant, and the combined
// bisection search. Each feasibility check reports its witness so a result
// can be audited.

namespace ura::converse {

struct Targets {
  double eps_md = 0.0;
  double eps_fa = 0.0;
};

struct AllocationPolicy {
  // S is the smallest prior window holding all but this much mass.
  double window_tail_mass = 1e-6;
  // multiplicative grid for the per-count list sizes
  double khat_growth = 1.02;
  // evaluate chi-square tails through the analytic lower bound instead of
  // the exact survival function (cross-checking alternative)
  bool use_tail_lower_bound = false;
};

struct SingleUserFeasibility {
  bool feasible = false;
  bool vacuous = false;  // the misdetection budget saturated at 1
  std::string binding;   // first violated constraint when infeasible
  int64_t S_lo = 0, S_hi = 0;
  int khat_level = 0;    // chosen multiplicative list-size level
  double lambda = 0.0;   // misdetection water-fill multiplier
};

SingleUserFeasibility single_user_converse_feasible(
    const SystemConfig& cfg, const ActivityPrior& prior, Targets targets,
    double P, const AllocationPolicy& policy = {});

struct BinomialFeasibility {
  bool feasible = false;
  bool vacuous = false;  // eps_MD >= p_a forces r to +inf
};

BinomialFeasibility binomial_single_user_converse(
    const SystemConfig& cfg, double p_a, Targets targets, double P,
    bool use_tail_lower_bound = false);

struct FanoFeasibility {
  bool feasible = false;
  std::string binding;
  double lhs_bits = 0.0;
  double rhs_bits = 0.0;
};

// Ensemble converse; assumes a codebook with i.i.d. entries of variance P
// (recorded by the caller in result metadata). The Monte-Carlo expected
// log-det is shifted down by three standard errors so sampling noise can
// only weaken the converse.
FanoFeasibility fano_converse_feasible(const SystemConfig& cfg,
                                       const ActivityPrior& prior,
                                       Targets targets, double P,
                                       const MonteCarloPlan& plan,
                                       const AllocationPolicy& policy = {});

struct JointFanoFeasibility {
  bool feasible = false;
  double lhs_bits = 0.0;
  double rhs_bits = 0.0;
};

JointFanoFeasibility joint_fano_converse(const SystemConfig& cfg, int64_t K_a,
                                         double eps_J, double P,
                                         const MonteCarloPlan& plan);

enum class ConverseKind { SingleUser, BinomialSingleUser, Fano };

struct ConverseSearch {
  double P_lo = 1e-9;
  double P_hi = 10.0;
  double tol_db = 0.01;
  AllocationPolicy policy;
};

struct PerBoundEbN0 {
  bool applicable = false;
  bool bracketed = true;  // false: still infeasible at P_hi
  double ebn0_db = 0.0;
};

struct ConverseResult {
  double ebn0_db = 0.0;
  ConverseKind dominant = ConverseKind::SingleUser;
  PerBoundEbN0 single_user, binomial, fano;
};

// Bisects each applicable converse to its feasibility boundary and returns
// the maximum with per-bound attribution.
ConverseResult min_ebn0_converse(const SystemConfig& cfg_template,
                                 const ActivityPrior& prior, Targets targets,
                                 const ConverseSearch& search,
                                 const MonteCarloPlan& plan);

}  // namespace ura::converse
