#include "ura/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ura/specfun.hpp"

namespace ura {

using specfun::kNegInf;

namespace {

std::string join(const std::vector<std::string>& items) {
  std::ostringstream os;
  os << "validation failed:";
  for (const auto& s : items) os << "\n  - " << s;
  return os.str();
}

}  // namespace

ValidationError::ValidationError(const std::vector<std::string>& items)
    : std::runtime_error(join(items)), items_(items) {}

SystemConfig validate_system_config(const SystemConfig& cfg) {
  std::vector<std::string> bad;
  if (cfg.n < 1) bad.push_back("n >= 1");
  if (cfg.J < 1) bad.push_back("J >= 1");
  if (cfg.L < 1) bad.push_back("L >= 1");
  if (!(cfg.P > 0.0) || !std::isfinite(cfg.P)) bad.push_back("P > 0");
  if (cfg.K < 1) bad.push_back("K >= 1");
  if (!bad.empty()) throw ValidationError(bad);
  return cfg;
}

CodebookSpec validate_codebook_spec(const CodebookSpec& spec, double P) {
  std::vector<std::string> bad;
  if (!(spec.P_prime > 0.0) || !std::isfinite(spec.P_prime))
    bad.push_back("P' > 0");
  if (spec.P_prime > P) bad.push_back("P' <= P");
  if (!bad.empty()) throw ValidationError(bad);
  return spec;
}

MonteCarloPlan validate_plan(const MonteCarloPlan& plan) {
  if (plan.trials < 1) throw ValidationError({"trials >= 1"});
  return plan;
}

ActivityPrior ActivityPrior::binomial(int64_t K, double p_a) {
  std::vector<std::string> bad;
  if (K < 1) bad.push_back("K >= 1");
  if (!(p_a >= 0.0) || !(p_a <= 1.0)) bad.push_back("p_a in [0,1]");
  if (!bad.empty()) throw ValidationError(bad);

  ActivityPrior prior;
  prior.kind_ = Kind::Binomial;
  prior.K_ = K;
  prior.p_a_ = p_a;
  prior.log_pmf_.assign(static_cast<std::size_t>(K) + 1, kNegInf);
  const double n = static_cast<double>(K);
  if (p_a == 0.0) {
    prior.log_pmf_[0] = 0.0;
  } else if (p_a == 1.0) {
    prior.log_pmf_.back() = 0.0;
  } else {
    const double lp = std::log(p_a);
    const double lq = std::log1p(-p_a);
    for (int64_t k = 0; k <= K; ++k) {
      prior.log_pmf_[static_cast<std::size_t>(k)] =
          specfun::log_binomial(n, static_cast<double>(k)) +
          static_cast<double>(k) * lp + static_cast<double>(K - k) * lq;
    }
  }
  return prior;
}

ActivityPrior ActivityPrior::table(const std::map<int64_t, double>& weights,
                                   int64_t K) {
  std::vector<std::string> bad;
  if (K < 1) bad.push_back("K >= 1");
  if (weights.empty()) bad.push_back("table must be nonempty");
  double total = 0.0;
  for (const auto& [k, w] : weights) {
    if (k < 0 || k > K) bad.push_back("table support in [0,K]");
    if (!(w >= 0.0)) bad.push_back("table weights nonnegative");
    total += std::max(w, 0.0);
  }
  if (!(total > 0.0)) bad.push_back("table must carry positive mass");
  if (!bad.empty()) throw ValidationError(bad);

  ActivityPrior prior;
  prior.kind_ = Kind::Table;
  prior.K_ = K;
  prior.log_pmf_.assign(static_cast<std::size_t>(K) + 1, kNegInf);
  for (const auto& [k, w] : weights) {
    if (w > 0.0)
      prior.log_pmf_[static_cast<std::size_t>(k)] = std::log(w / total);
  }
  return prior;
}

ActivityPrior ActivityPrior::point_mass(int64_t K_a, int64_t K) {
  return table({{K_a, 1.0}}, K);
}

double ActivityPrior::log_pmf(int64_t k) const {
  if (k < 0 || k > K_) return kNegInf;
  return log_pmf_[static_cast<std::size_t>(k)];
}

double ActivityPrior::mean() const {
  double m = 0.0;
  for (int64_t k = 1; k <= K_; ++k)
    m += static_cast<double>(k) * std::exp(log_pmf(k));
  return m;
}

double ActivityPrior::log_mass_in(int64_t lo, int64_t hi) const {
  lo = std::max<int64_t>(lo, 0);
  hi = std::min(hi, K_);
  if (lo > hi) return kNegInf;
  std::vector<double> vals(log_pmf_.begin() + lo, log_pmf_.begin() + hi + 1);
  return specfun::log_sum_exp(vals);
}

double ActivityPrior::log_mass_out(int64_t lo, int64_t hi) const {
  std::vector<double> vals;
  for (int64_t k = 0; k <= K_; ++k)
    if (k < lo || k > hi) vals.push_back(log_pmf(k));
  return specfun::log_sum_exp(vals);
}

std::pair<int64_t, int64_t> ActivityPrior::support_window(
    double tail_mass) const {
  const double half = 0.5 * tail_mass;
  int64_t K_l = 0;
  while (K_l < K_ && std::exp(log_mass_in(0, K_l)) <= half) ++K_l;
  int64_t K_u = K_;
  while (K_u > 0 && std::exp(log_mass_in(K_u, K_)) <= half) --K_u;
  if (K_l > K_u) K_l = K_u;
  return {K_l, K_u};
}

int64_t ActivityPrior::sample(double uniform) const {
  double acc = 0.0;
  for (int64_t k = 0; k <= K_; ++k) {
    acc += std::exp(log_pmf(k));
    if (uniform <= acc) return k;
  }
  return K_;
}

BoundValue bound_sum(const BoundValue& a, const BoundValue& b) {
  BoundValue out;
  out.log_value = specfun::log_add_exp(a.log_value, b.log_value);
  out.std_err = std::hypot(a.std_err, b.std_err);
  out.samples = std::max(a.samples, b.samples);
  return out;
}

BoundValue bound_min(const BoundValue& a, const BoundValue& b) {
  return a.log_value <= b.log_value ? a : b;
}

void LogMeanAccumulator::add(double log_sample) {
  log_samples_.push_back(log_sample);
  ++count_;
}

double LogMeanAccumulator::log_mean() const {
  if (count_ == 0) return kNegInf;
  return specfun::log_sum_exp(log_samples_) -
         std::log(static_cast<double>(count_));
}

double LogMeanAccumulator::std_err() const {
  if (count_ < 2) return 0.0;
  const double lm = log_mean();
  if (lm == kNegInf) return 0.0;
  std::vector<double> sq(log_samples_.size());
  for (std::size_t i = 0; i < log_samples_.size(); ++i)
    sq[i] = 2.0 * log_samples_[i];
  const double log_mean_sq =
      specfun::log_sum_exp(sq) - std::log(static_cast<double>(count_));
  // var = E[x^2] - (E[x])^2, guarded against tiny negative round-off.
  double log_var;
  if (log_mean_sq <= 2.0 * lm)
    return 0.0;
  else
    log_var = specfun::log_sub_exp(log_mean_sq, 2.0 * lm);
  const double log_se =
      0.5 * (log_var - std::log(static_cast<double>(count_ - 1)));
  return std::exp(log_se);
}

}  // namespace ura
