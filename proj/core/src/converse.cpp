#include "ura/converse.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "ura/randmat.hpp"
#include "ura/specfun.hpp"

namespace ura::converse {

using specfun::kNegInf;
using specfun::kPosInf;

namespace {

// ln P[chi2(2L) >= x], optionally through the analytic lower bound. The
// lower bound makes the tail smaller and therefore the converse weaker,
// which is the safe direction.
double log_tail_2L(int64_t L, double x, bool lower_bound) {
  const int k = static_cast<int>(2 * L);
  if (lower_bound && L >= 1 && x >= static_cast<double>(k - 1))
    return specfun::log_chi2_sf_lower_bound(static_cast<double>(k), x);
  return specfun::log_chi2_tail(k, x, specfun::Chi2Side::Sf);
}

// epsilon allocation proportional to prior mass, capped at 1, scaled to
// exhaust the misdetection budget.
std::vector<double> fill_eps(const ActivityPrior& prior, int64_t lo,
                             int64_t hi, double eps_md, double* lambda_out,
                             bool* vacuous) {
  std::vector<double> mass;
  for (int64_t k = lo; k <= hi; ++k) mass.push_back(std::exp(prior.log_pmf(k)));
  const double total = [&] {
    double s = 0.0;
    for (double m : mass) s += m;
    return s;
  }();
  std::vector<double> eps(mass.size(), 1.0);
  if (total <= eps_md) {  // the budget is slack even at eps = 1
    *lambda_out = kPosInf;
    *vacuous = true;
    return eps;
  }
  *vacuous = false;
  auto spend = [&](double lambda) {
    double s = 0.0;
    for (double m : mass) s += m * std::min(1.0, lambda * m);
    return s;
  };
  double lo_l = 0.0, hi_l = 1.0;
  while (spend(hi_l) < eps_md) hi_l *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo_l + hi_l);
    if (spend(mid) <= eps_md)
      lo_l = mid;
    else
      hi_l = mid;
  }
  for (std::size_t i = 0; i < mass.size(); ++i)
    eps[i] = std::min(1.0, lo_l * mass[i]);
  *lambda_out = lo_l;
  return eps;
}

// largest multiplicative list-size level meeting the false-alarm budget
int khat_level_for(const ActivityPrior& prior, int64_t lo, int64_t hi,
                   int64_t K, double growth, double eps_fa) {
  const int j_max =
      static_cast<int>(std::ceil(std::log(static_cast<double>(K)) /
                                 std::log(growth))) +
      1;
  auto fa_spend = [&](int j) {
    double s = 0.0;
    for (int64_t k = lo; k <= hi; ++k) {
      const double khat = std::min<double>(
          static_cast<double>(K),
          std::ceil(static_cast<double>(std::max<int64_t>(k, 1)) *
                    std::pow(growth, j)));
      const double excess = std::max(khat - static_cast<double>(k), 0.0) / khat;
      s += std::exp(prior.log_pmf(k)) * excess;
    }
    return s;
  };
  int best = 0;
  for (int j = 0; j <= j_max; ++j) {
    if (fa_spend(j) <= eps_fa)
      best = j;
    else
      break;
  }
  return best;
}

int64_t khat_at(int64_t K_a, int64_t K, double growth, int level) {
  const double v = std::ceil(static_cast<double>(std::max<int64_t>(K_a, 1)) *
                             std::pow(growth, level));
  return std::min<int64_t>(K, static_cast<int64_t>(v));
}

// cached expected log-det values per K_a (bits, with standard error)
struct LogdetCache {
  const SystemConfig* cfg;
  const MonteCarloPlan* plan;
  std::map<int64_t, BoundValue> values;
  double conservative_bits(int64_t K_a, double P, double sign) {
    if (!values.count(K_a))
      values[K_a] = randmat::expected_logdet(
          cfg->n, K_a, P, CodebookSpec::Ensemble::Gaussian, *plan);
    const BoundValue& b = values.at(K_a);
    return b.value() + sign * 3.0 * b.std_err;
  }
};

}  // namespace

SingleUserFeasibility single_user_converse_feasible(
    const SystemConfig& cfg, const ActivityPrior& prior, Targets targets,
    double P, const AllocationPolicy& policy) {
  validate_system_config(cfg);
  if (!(P > 0.0)) throw ValidationError({"P > 0"});
  SingleUserFeasibility out;
  auto [w_lo, w_hi] = prior.support_window(policy.window_tail_mass);
  w_lo = std::max<int64_t>(w_lo, 1);  // a misdetected user exists only there
  if (w_lo > w_hi) {  // prior mass is entirely on zero active users
    out.feasible = true;
    out.vacuous = true;
    out.S_lo = out.S_hi = 0;
    return out;
  }
  out.S_lo = w_lo;
  out.S_hi = w_hi;

  const auto eps =
      fill_eps(prior, w_lo, w_hi, targets.eps_md, &out.lambda, &out.vacuous);
  out.khat_level = khat_level_for(prior, w_lo, w_hi, cfg.K,
                                  policy.khat_growth, targets.eps_fa);

  const double scale = 1.0 + (static_cast<double>(cfg.n) + 1.0) * P;
  for (int64_t k = w_lo; k <= w_hi; ++k) {
    if (prior.log_pmf(k) == kNegInf) continue;
    const double e = eps[static_cast<std::size_t>(k - w_lo)];
    const auto r = specfun::chi2_quantile(static_cast<int>(2 * cfg.L), e);
    if (r.infinite) continue;  // the rate constraint is vacuous at eps = 1
    const double log_tail =
        log_tail_2L(cfg.L, scale * r.value, policy.use_tail_lower_bound);
    const double rhs_bits = -log_tail / M_LN2;
    const double lhs_bits =
        static_cast<double>(cfg.J) -
        std::log2(static_cast<double>(
            khat_at(k, cfg.K, policy.khat_growth, out.khat_level)));
    if (lhs_bits > rhs_bits + 1e-12) {
      out.feasible = false;
      out.binding = "rate constraint at K_a=" + std::to_string(k);
      return out;
    }
  }
  out.feasible = true;
  return out;
}

BinomialFeasibility binomial_single_user_converse(const SystemConfig& cfg,
                                                  double p_a, Targets targets,
                                                  double P,
                                                  bool use_tail_lower_bound) {
  validate_system_config(cfg);
  if (!(p_a > 0.0) || !(p_a < 1.0))
    throw std::domain_error("binomial converse: p_a must lie in (0,1)");
  BinomialFeasibility out;
  const double eps1 = std::min(1.0, targets.eps_fa / (1.0 - p_a));
  const double eps2 = std::min(1.0, targets.eps_md / p_a);
  const auto r = specfun::chi2_quantile(static_cast<int>(2 * cfg.L), eps2);
  if (r.infinite) {
    out.feasible = true;
    out.vacuous = true;
    return out;
  }
  const double scale = 1.0 + (static_cast<double>(cfg.n) + 1.0) * P;
  const double log_tail =
      log_tail_2L(cfg.L, scale * r.value, use_tail_lower_bound);
  // feasible iff M/K <= eps1 / tail
  const double lhs = cfg.ln_M() - std::log(static_cast<double>(cfg.K));
  const double rhs = std::log(eps1) - log_tail;
  out.feasible = lhs <= rhs;
  return out;
}

FanoFeasibility fano_converse_feasible(const SystemConfig& cfg,
                                       const ActivityPrior& prior,
                                       Targets targets, double P,
                                       const MonteCarloPlan& plan,
                                       const AllocationPolicy& policy) {
  validate_system_config(cfg);
  // eps_MD <= M/(1+M), checked in log domain
  if (std::log(targets.eps_md) > -std::log1p(std::exp(-cfg.ln_M())))
    throw ValidationError({"eps_MD <= M/(1+M) required"});

  FanoFeasibility out;
  auto [w_lo, w_hi] = prior.support_window(policy.window_tail_mass);
  w_lo = std::max<int64_t>(w_lo, 1);
  if (w_lo > w_hi) {
    out.feasible = true;
    out.binding = "prior mass concentrated on zero active users";
    return out;
  }
  const int level = khat_level_for(prior, w_lo, w_hi, cfg.K,
                                   policy.khat_growth, targets.eps_fa);

  const double p_S = std::exp(prior.log_mass_in(w_lo, w_hi));
  double lhs = (p_S - targets.eps_md) * static_cast<double>(cfg.J) -
               specfun::binary_entropy(targets.eps_md);
  double rhs = 0.0;
  LogdetCache cache{&cfg, &plan, {}};
  for (int64_t k = w_lo; k <= w_hi; ++k) {
    const double pk = std::exp(prior.log_pmf(k));
    if (pk == 0.0) continue;
    lhs -= pk * std::log2(static_cast<double>(
                    khat_at(k, cfg.K, policy.khat_growth, level)));
    const double kk = static_cast<double>(k);
    const double coll_factor =
        1.0 - std::exp(specfun::log_binomial(kk, 2.0) - cfg.ln_M());
    // the sampling-noise shift must enlarge the right side
    const double e_bits = cache.conservative_bits(
        k, P, coll_factor >= 0.0 ? -1.0 : +1.0);
    rhs += pk *
           (static_cast<double>(cfg.n * cfg.L) * std::log2(1.0 + kk * P) -
            static_cast<double>(cfg.L) * coll_factor * e_bits) /
           kk;
  }
  out.lhs_bits = lhs;
  out.rhs_bits = rhs;
  out.feasible = lhs <= rhs;
  if (!out.feasible) out.binding = "mutual-information constraint";
  return out;
}

JointFanoFeasibility joint_fano_converse(const SystemConfig& cfg, int64_t K_a,
                                         double eps_J, double P,
                                         const MonteCarloPlan& plan) {
  validate_system_config(cfg);
  if (K_a < 1 || (cfg.J < 62 && K_a > (int64_t(1) << cfg.J)))
    throw ValidationError({"K_a in [1, M] required"});
  const double M = cfg.M_as_double();
  // ln( M! / (M^{K_a} (M-K_a)!) ) = sum ln(1 - i/M)
  double ln_ratio = 0.0;
  for (int64_t i = 0; i < K_a; ++i)
    ln_ratio += std::log1p(-static_cast<double>(i) / M);
  const double log2_choose =
      specfun::log_binomial(M, static_cast<double>(K_a)) / M_LN2;
  // precondition: eps_J <= C/(1+C) * ratio with C = binom(M, K_a)
  const double ln_pre = log2_choose * M_LN2 -
                        specfun::log_add_exp(0.0, log2_choose * M_LN2) +
                        ln_ratio;
  if (std::log(eps_J) > ln_pre)
    throw ValidationError({"eps_J exceeds the Fano precondition"});

  const double eps_bar = eps_J * std::exp(-ln_ratio);
  JointFanoFeasibility out;
  out.lhs_bits = (1.0 - eps_bar) * log2_choose -
                 specfun::binary_entropy(std::min(eps_bar, 1.0));
  const BoundValue e = randmat::expected_logdet(
      cfg.n, K_a, P, CodebookSpec::Ensemble::Gaussian, plan);
  const double e_bits = e.value() - 3.0 * e.std_err;
  out.rhs_bits = static_cast<double>(cfg.n * cfg.L) *
                     std::log2(1.0 + static_cast<double>(K_a) * P) -
                 static_cast<double>(cfg.L) * e_bits;
  out.feasible = out.lhs_bits <= out.rhs_bits;
  return out;
}

ConverseResult min_ebn0_converse(const SystemConfig& cfg_template,
                                 const ActivityPrior& prior, Targets targets,
                                 const ConverseSearch& search,
                                 const MonteCarloPlan& plan) {
  auto ebn0_of = [&](double P) {
    return 10.0 * std::log10(static_cast<double>(cfg_template.n) * P /
                             static_cast<double>(cfg_template.J));
  };

  auto bisect = [&](auto&& feasible_at) {
    PerBoundEbN0 r;
    r.applicable = true;
    double lo = search.P_lo, hi = search.P_hi;
    if (!feasible_at(hi)) {
      r.bracketed = false;
      r.ebn0_db = ebn0_of(hi);  // the boundary lies above the bracket
      return r;
    }
    if (feasible_at(lo)) {
      r.ebn0_db = ebn0_of(lo);
      return r;
    }
    while (10.0 * std::log10(hi / lo) > search.tol_db) {
      const double mid = std::sqrt(hi * lo);
      if (feasible_at(mid))
        hi = mid;
      else
        lo = mid;
    }
    r.ebn0_db = ebn0_of(hi);
    return r;
  };

  ConverseResult out;
  SystemConfig cfg = cfg_template;

  out.single_user = bisect([&](double P) {
    cfg.P = P;
    return single_user_converse_feasible(cfg, prior, targets, P,
                                         search.policy)
        .feasible;
  });

  if (prior.kind() == ActivityPrior::Kind::Binomial && prior.p_a() > 0.0 &&
      prior.p_a() < 1.0) {
    out.binomial = bisect([&](double P) {
      cfg.P = P;
      return binomial_single_user_converse(cfg, prior.p_a(), targets, P,
                                           search.policy.use_tail_lower_bound)
          .feasible;
    });
  }

  const double log_md_cap = -std::log1p(std::exp(-cfg_template.ln_M()));
  if (std::log(targets.eps_md) <= log_md_cap) {
    out.fano = bisect([&](double P) {
      cfg.P = P;
      return fano_converse_feasible(cfg, prior, targets, P, plan,
                                    search.policy)
          .feasible;
    });
  }

  out.ebn0_db = -std::numeric_limits<double>::infinity();
  auto consider = [&](const PerBoundEbN0& b, ConverseKind kind) {
    if (b.applicable && b.ebn0_db > out.ebn0_db) {
      out.ebn0_db = b.ebn0_db;
      out.dominant = kind;
    }
  };
  consider(out.single_user, ConverseKind::SingleUser);
  consider(out.binomial, ConverseKind::BinomialSingleUser);
  consider(out.fano, ConverseKind::Fano);
  return out;
}

}  // namespace ura::converse
