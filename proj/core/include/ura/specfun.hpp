#pragma once

#include <limits>
#include <span>
#include <vector>

// Scalar kernels used by every bound: regularized incomplete gamma
// functions, chi-square cdf/sf/quantile, a chi-square tail lower bound,
// log-binomials for counts as large as 2^100, binary entropy and
// log-sum-exp. All probability-like values are carried as natural logs.

namespace ura::specfun {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

enum class GammaKind { Lower, Upper };

// ln( gamma(a,x)/Gamma(a) ) or ln( Gamma(a,x)/Gamma(a) ).
// Series for x < a+1, Lentz continued fraction otherwise; 1e-15 term
// tolerance, 1e6 iteration cap. a > 0, x >= 0 required.
double log_reg_gamma(GammaKind kind, double a, double x);

enum class Chi2Side { Cdf, Sf };

// ln P[chi2(k) <= x] (Cdf) or ln P[chi2(k) >= x] (Sf), k >= 1 dof.
double log_chi2_tail(int k, double x, Chi2Side side);

struct Chi2Quantile {
  double value = 0.0;
  bool infinite = false;  // p == 1 maps to the +inf sentinel, not an error
};

// Smallest x with P[chi2(k) <= x] = p, bracketing bisection to 1e-10
// absolute tolerance in probability. p in [0,1).
Chi2Quantile chi2_quantile(int k, double p);

// ln of the Proposition-3.1-style lower bound on P[chi2(k) >= u],
// valid for k >= 2 and u >= k-1.
double log_chi2_sf_lower_bound(double k, double u);

// ln C(n,k). n may be fractional/huge (e.g. 2^100); k a nonnegative
// integer count. k > n yields -inf (empty count), not an error.
double log_binomial(double n, double k);

// Binary entropy in bits, 0*log0 := 0.
double binary_entropy(double p);

// ln sum exp(v_i); empty input yields -inf.
double log_sum_exp(std::span<const double> values);

// ln(exp(a) + exp(b)) without materializing either exponential.
double log_add_exp(double a, double b);

// ln(exp(a) - exp(b)) for a >= b; returns -inf when they coincide.
double log_sub_exp(double a, double b);

// ln(1 - exp(x)) for x <= 0.
double log1m_exp(double x);

}  // namespace ura::specfun
