#pragma once

#include <string>
#include <vector>

#include "ura/detection.hpp"
#include "ura/randmat.hpp"
#include "ura/types.hpp"

// Desk-scale Monte-Carlo ground truth: channel simulation, the energy
// estimator, an exhaustive MAP list decoder at tiny codebook sizes, and
// trend reports standing in for the asymptotic claims at finite size.

namespace ura::simulator {

struct KaHistogram {
  std::vector<int64_t> counts;  // index: estimated count in [0, K_max]
  int64_t trials = 0;

  double prob(int64_t k) const;
  double std_err(int64_t k) const;  // binomial
};

// Per trial: sample codewords, i.i.d. fading and noise, run the energy
// estimator over [0, K]; histogram the estimates.
KaHistogram simulate_ka_estimation(const SystemConfig& cfg,
                                   const CodebookSpec& spec, int64_t K_a,
                                   const MonteCarloPlan& plan);

// Exact MAP list decoding by subset enumeration over all list sizes in
// [size_lo, size_hi]; ties resolve to the earliest subset in size-then-
// lexicographic order. Guarded to M <= 20 and <= 1e6 enumerated subsets.
std::vector<int> brute_force_map_decode(const randmat::CMatrix& Y,
                                        const randmat::CMatrix& codebook,
                                        const ActivityPrior& prior,
                                        int64_t size_lo, int64_t size_hi,
                                        const SystemConfig& cfg);

struct TrialOutcome {
  int64_t true_count = 0;
  int64_t estimated_count = 0;
  std::vector<int> sent;     // per-user messages (collisions possible)
  std::vector<int> decoded;  // decoded list, sorted
  int64_t misdetections = 0;
  int64_t false_alarms = 0;
  bool joint_error = false;
};

struct TwoStageStats {
  double p_md = 0.0, p_md_se = 0.0;
  double p_fa = 0.0, p_fa_se = 0.0;
  double p_joint = 0.0, p_joint_se = 0.0;
  int64_t trials = 0;
};

// Full two-stage runs under the true measure (collisions allowed): draw
// the active count from the prior, estimate it, then brute-force MAP
// decode with the list-size window around the estimate.
TwoStageStats simulate_two_stage(const SystemConfig& cfg,
                                 const ActivityPrior& prior,
                                 const CodebookSpec& spec,
                                 const detection::DecoderWindow& window,
                                 const MonteCarloPlan& plan,
                                 std::vector<TrialOutcome>* records = nullptr);

enum class TrendQuantity { KaBound, PmdBound, EmpiricalKa };
enum class SweepParam { L, P, N };

struct TrendQuery {
  TrendQuantity quantity = TrendQuantity::KaBound;
  SweepParam param = SweepParam::L;
  std::vector<double> grid;  // strictly increasing, length >= 4
  SystemConfig base_cfg;
  CodebookSpec spec;
  int64_t K_a = 0;
  int64_t K_a_prime = 0;
  ActivityPrior prior;             // PmdBound only
  detection::DecoderWindow window;  // PmdBound only
  MonteCarloPlan plan;
};

struct TrendReport {
  std::string param_name;
  std::vector<double> grid;
  std::vector<double> log_values;
  std::vector<double> std_errs;  // linear-domain errors where stochastic
  double slope = 0.0;            // least-squares slope of ln(value) vs param
  double r_squared = 0.0;
  bool plateau = false;    // top half of the grid varies < 5 percent
  double floor_log = 0.0;  // asymptotic floor overlay; NaN when n/a
};

TrendReport trend_report(const TrendQuery& q);

}  // namespace ura::simulator
