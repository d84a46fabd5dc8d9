#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Shared domain model. Everything here is immutable after construction and
// safe to share across workers. Probabilities and bounds live in natural-log
// domain end to end; linear values appear only at reporting time.

namespace ura {

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::vector<std::string>& items);
  const std::vector<std::string>& items() const { return items_; }

 private:
  std::vector<std::string> items_;
};

// System parameters: n channel uses, J payload bits (codebook size M = 2^J
// held only as log2; M is never materialized), L receive antennas, max
// power P per channel use, K potential users.
struct SystemConfig {
  int64_t n = 0;
  int64_t J = 0;
  int64_t L = 0;
  double P = 0.0;
  int64_t K = 0;

  double log2_M() const { return static_cast<double>(J); }
  double ln_M() const { return static_cast<double>(J) * M_LN2; }
  // M as a double; exact for J <= 1023 up to float rounding, only ever used
  // inside log-binomials and ratios.
  double M_as_double() const { return std::exp2(static_cast<double>(J)); }
  double nP() const { return static_cast<double>(n) * P; }
};

// Checks all invariants and returns the config unchanged; throws a
// ValidationError listing every violated invariant.
SystemConfig validate_system_config(const SystemConfig& cfg);

// Distribution of the random active-user count K_a on support [0, K],
// stored as a normalized log-pmf.
class ActivityPrior {
 public:
  enum class Kind { Binomial, Table };

  // An empty prior; every consumer validates via valid() before use.
  ActivityPrior() = default;
  bool valid() const { return !log_pmf_.empty(); }

  static ActivityPrior binomial(int64_t K, double p_a);
  // weights[k] is an unnormalized nonnegative mass for K_a = k.
  static ActivityPrior table(const std::map<int64_t, double>& weights,
                             int64_t K);
  // Point mass at a fixed, known count.
  static ActivityPrior point_mass(int64_t K_a, int64_t K);

  Kind kind() const { return kind_; }
  int64_t K() const { return K_; }
  double p_a() const { return p_a_; }  // meaningful for Kind::Binomial only
  double log_pmf(int64_t k) const;
  double mean() const;
  // ln P[K_a in [lo, hi]] and ln P[K_a outside [lo, hi]].
  double log_mass_in(int64_t lo, int64_t hi) const;
  double log_mass_out(int64_t lo, int64_t hi) const;
  // Largest K_l / smallest K_u with P[K_a outside [K_l:K_u]] <= tail_mass;
  // the budget is split evenly between the two tails.
  std::pair<int64_t, int64_t> support_window(double tail_mass) const;
  // Draws a count by inverse-cdf over the log-pmf given a uniform in (0,1).
  int64_t sample(double uniform) const;

 private:
  Kind kind_ = Kind::Table;
  int64_t K_ = 0;
  double p_a_ = 0.0;
  std::vector<double> log_pmf_;  // index k in [0, K]
};

// Random-codebook ensemble: per-entry variance P' (gaussian) or uniform on
// the sphere of radius sqrt(nP').
struct CodebookSpec {
  enum class Ensemble { Gaussian, Spherical };
  Ensemble ensemble = Ensemble::Spherical;
  double P_prime = 0.0;
};

CodebookSpec validate_codebook_spec(const CodebookSpec& spec, double P);

// Seeded Monte-Carlo execution plan. Trials map to counter-based
// substreams, so results do not depend on worker count.
struct MonteCarloPlan {
  uint64_t seed = 0;
  int64_t trials = 1000;
  unsigned threads = 0;  // 0: library default
};

MonteCarloPlan validate_plan(const MonteCarloPlan& plan);

// A probability-like bound in log domain together with its Monte-Carlo
// standard error (linear domain, 0 for closed forms) and sample count.
struct BoundValue {
  double log_value = -std::numeric_limits<double>::infinity();
  double std_err = 0.0;
  int64_t samples = 0;

  static BoundValue exact(double log_value) { return {log_value, 0.0, 0}; }
  double value() const { return std::exp(log_value); }
  double clip_to_probability() const { return std::min(1.0, value()); }
};

// a + b for bound values (linear-domain sum done in log domain); standard
// errors combine in quadrature.
BoundValue bound_sum(const BoundValue& a, const BoundValue& b);
// min(a, b); keeps the std err of whichever branch wins.
BoundValue bound_min(const BoundValue& a, const BoundValue& b);

// Accumulates positive Monte-Carlo samples given as logs and yields the
// log-mean and the linear-domain standard error of the mean.
class LogMeanAccumulator {
 public:
  void add(double log_sample);
  int64_t count() const { return count_; }
  double log_mean() const;
  double std_err() const;
  BoundValue to_bound() const { return {log_mean(), std_err(), count_}; }

 private:
  std::vector<double> log_samples_;
  int64_t count_ = 0;
};

}  // namespace ura
