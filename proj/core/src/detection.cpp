#include "ura/detection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "ura/optimize.hpp"
#include "ura/specfun.hpp"

namespace ura::detection {

using randmat::CMatrix;
using specfun::kNegInf;
using specfun::kPosInf;

namespace {

constexpr uint32_t kMapPoolTag = 2;
constexpr uint32_t kMlPoolTag = 4;
constexpr int64_t kPilotTrials = 48;
constexpr int kOuterRefineIters = 12;
constexpr int kInnerRefineIters = 20;
constexpr int kDeltaIters = 60;
constexpr double kFeasMargin = 1e-10;

std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i)
    g[i] = lo * std::pow(hi / lo, points == 1
                                      ? 0.0
                                      : static_cast<double>(i) / (points - 1));
  return g;
}

const std::vector<double>& omega_grid() {
  static const std::vector<double> g = [] {
    std::vector<double> v(9);
    for (int i = 0; i < 9; ++i) v[i] = i / 8.0;
    return v;
  }();
  return g;
}

const std::vector<double>& nu_grid() {
  static const std::vector<double> g = log_grid(1e-3, 10.0, 9);
  return g;
}

const std::vector<double>& ur_grid() {
  static const std::vector<double> g = [] {
    std::vector<double> v{0.0};
    for (double x : log_grid(1e-2, 10.0, 8)) v.push_back(x);
    return v;
  }();
  return g;
}

// coefficient * value with the convention 0 * (+-inf) = 0
double cmul(double c, double v) {
  if (c == 0.0) return 0.0;
  return c * v;
}

int64_t pos(int64_t x) { return x > 0 ? x : 0; }

// W = [K_a] transmitted; W1 = first `mis` columns of W misdetected, of
// which the first w11 are forced by a short list; W2 = `fa` extra columns
// false-alarmed, of which the first w21 are forced by a long list.
struct ShapeSpec {
  int64_t K_a = 0;
  int64_t mis = 0;
  int64_t fa = 0;
  int64_t w11 = 0;
  int64_t w21 = 0;
  bool map_prior = true;

  auto key() const { return std::tie(K_a, mis, fa, w11, w21, map_prior); }
  bool operator<(const ShapeSpec& o) const { return key() < o.key(); }

  int64_t K_hat() const { return K_a - mis + fa; }
  int64_t K_ref() const { return map_prior ? K_a - w11 + w21 : K_a; }
};

struct ShapeResult {
  double log_p = kPosInf;  // min over (omega, nu) of q1 + q2 branch
  double std_err = 0.0;
  double omega = 0.0;
  double nu = 0.0;
};

// Per-trial quantities reduced to the span of the sampled codewords
// (dimension p = min(n, K_a + fa)).
struct TrialData {
  Eigen::Index p = 0;
  CMatrix P1;  // H (M' - M'') H
  CMatrix P2;  // H M1 H
  double ld_F = 0.0, ld_F1 = 0.0, ld_Fp = 0.0, ld_Fpp = 0.0;
  double lam_geo = 1.0;  // geometric mean, nonzero eigs of F1^{-1} C1 C1^H
};

double lndet_spd(const CMatrix& A, bool* ok) {
  Eigen::LLT<CMatrix> llt(A);
  if (llt.info() != Eigen::Success) {
    *ok = false;
    return 0.0;
  }
  *ok = true;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    acc += std::log(std::real(llt.matrixLLT()(i, i)));
  return 2.0 * acc;
}

// ln|I + A A^H|, evaluated on the smaller side.
double lndet_i_plus_outer(const CMatrix& A) {
  if (A.cols() == 0 || A.rows() == 0) return 0.0;
  bool ok = false;
  double v;
  if (A.cols() <= A.rows()) {
    CMatrix G = CMatrix::Identity(A.cols(), A.cols());
    G.noalias() += A.adjoint() * A;
    v = lndet_spd(G, &ok);
  } else {
    CMatrix G = CMatrix::Identity(A.rows(), A.rows());
    G.noalias() += A * A.adjoint();
    v = lndet_spd(G, &ok);
  }
  if (!ok) throw std::runtime_error("detection: Gram factorization failed");
  return v;
}

CMatrix inv_i_plus_outer(const CMatrix& A, Eigen::Index p) {
  CMatrix G = CMatrix::Identity(p, p);
  if (A.cols() > 0) G.noalias() += A * A.adjoint();
  return Eigen::LLT<CMatrix>(G).solve(CMatrix::Identity(p, p));
}

struct PriorTerms {
  double b = 0.0, b1 = 0.0, bp = 0.0, bpp = 0.0;
};

class ShapeEvaluator {
 public:
  ShapeEvaluator(const SystemConfig& cfg, const CodebookSpec& spec,
                 const ActivityPrior* decoder_prior, const MonteCarloPlan& plan)
      : cfg_(cfg), spec_(spec), prior_(decoder_prior), plan_(plan) {}

  ShapeResult evaluate(const ShapeSpec& sh) const;

 private:
  PriorTerms prior_terms(const ShapeSpec& sh) const {
    PriorTerms t;
    if (!sh.map_prior) return t;
    const double M = cfg_.M_as_double();
    auto term = [&](int64_t k) {
      return prior_->log_pmf(k) -
             specfun::log_binomial(M, static_cast<double>(k));
    };
    t.b = term(sh.K_a);
    t.b1 = term(sh.K_a - sh.mis);
    t.bp = term(sh.K_hat());
    t.bpp = term(sh.K_ref());
    return t;
  }

  uint64_t stream_of(const ShapeSpec& sh) const {
    return rng::pack_stream(sh.map_prior ? kMapPoolTag : kMlPoolTag,
                            static_cast<uint64_t>(sh.K_a),
                            static_cast<uint64_t>(sh.mis),
                            static_cast<uint64_t>(sh.fa),
                            static_cast<uint64_t>(sh.w11),
                            static_cast<uint64_t>(sh.w21));
  }

  TrialData make_trial(const ShapeSpec& sh, uint64_t trial) const;

  double q1_objective(const TrialData& td, const PriorTerms& pt, double u,
                      double r, double omega, double nlnu) const;
  double q1_trial_min(const TrialData& td, const PriorTerms& pt, double omega,
                      double nlnu, bool refine) const;
  // ln of the regularized lower-gamma mass inside the q2 expectation.
  double q2_gamma_term(const TrialData& td, const PriorTerms& pt, int64_t mis,
                       double omega, double nlnu, double delta) const;
  double q20_term(const TrialData& td, const PriorTerms& pt, double omega,
                  double nlnu) const;
  // q2 branch at fixed (omega, nu): the delta minimization over the trial
  // set, with its Monte-Carlo standard error.
  std::pair<double, double> q2_value(const std::vector<TrialData>& trials,
                                     const PriorTerms& pt, const ShapeSpec& sh,
                                     double omega, double nlnu,
                                     int delta_iters = kDeltaIters) const;

  const SystemConfig& cfg_;
  const CodebookSpec& spec_;
  const ActivityPrior* prior_;
  const MonteCarloPlan& plan_;
};

TrialData ShapeEvaluator::make_trial(const ShapeSpec& sh,
                                     uint64_t trial) const {
  const int64_t s = sh.K_a + sh.fa;
  const Eigen::Index n = cfg_.n;
  rng::Substream sub(plan_.seed, stream_of(sh), trial);
  CMatrix block(n, s);
  for (Eigen::Index j = 0; j < s; ++j)
    for (Eigen::Index i = 0; i < n; ++i) block(i, j) = sub.next_cgauss();
  if (spec_.ensemble == CodebookSpec::Ensemble::Gaussian) {
    block *= std::sqrt(spec_.P_prime);
  } else {
    for (Eigen::Index j = 0; j < s; ++j)
      block.col(j) *= std::sqrt(static_cast<double>(n) * spec_.P_prime) /
                      block.col(j).norm();
  }

  TrialData td;
  const Eigen::Index p = std::min<Eigen::Index>(n, s);
  td.p = p;
  if (p == 0) return td;

  Eigen::HouseholderQR<CMatrix> qr(block);
  CMatrix R = qr.matrixQR().topRows(p).template triangularView<Eigen::Upper>();

  const CMatrix RW = R.leftCols(sh.K_a);
  CMatrix g = CMatrix::Zero(p, p);
  if (sh.K_a > 0) g.noalias() = RW * RW.adjoint();

  Eigen::SelfAdjointEigenSolver<CMatrix> ges(g);
  if (ges.info() != Eigen::Success)
    throw std::runtime_error("detection: span eigensolver failed");
  Eigen::VectorXd sq =
      ges.eigenvalues().cwiseMax(0.0).unaryExpr(
          [](double v) { return std::sqrt(1.0 + v); });
  const CMatrix H =
      ges.eigenvectors() * sq.asDiagonal() * ges.eigenvectors().adjoint();

  auto cols_of = [&](int64_t a0, int64_t a1, int64_t b0, int64_t b1) {
    CMatrix out(p, (a1 - a0) + (b1 - b0));
    Eigen::Index c = 0;
    for (int64_t j = a0; j < a1; ++j) out.col(c++) = R.col(j);
    for (int64_t j = b0; j < b1; ++j) out.col(c++) = R.col(j);
    return out;
  };

  const CMatrix A_F1 = cols_of(sh.mis, sh.K_a, 0, 0);
  const CMatrix A_Fp = cols_of(sh.mis, sh.K_a, sh.K_a, sh.K_a + sh.fa);
  const CMatrix A_Fpp = sh.map_prior
                            ? cols_of(sh.w11, sh.K_a, sh.K_a, sh.K_a + sh.w21)
                            : cols_of(0, sh.K_a, 0, 0);

  const CMatrix M1 = inv_i_plus_outer(A_F1, p);
  const CMatrix Mp = inv_i_plus_outer(A_Fp, p);
  const CMatrix Mpp = inv_i_plus_outer(A_Fpp, p);

  td.ld_F = lndet_i_plus_outer(RW);
  td.ld_F1 = lndet_i_plus_outer(A_F1);
  td.ld_Fp = lndet_i_plus_outer(A_Fp);
  td.ld_Fpp = lndet_i_plus_outer(A_Fpp);

  td.P1.noalias() = H * (Mp - Mpp) * H;
  td.P2.noalias() = H * M1 * H;

  if (sh.mis > 0) {
    const CMatrix R1 = R.leftCols(sh.mis);
    const CMatrix E1 = R1.adjoint() * M1 * R1;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(E1, Eigen::EigenvaluesOnly);
    const int64_t m = std::min<int64_t>(cfg_.n, sh.mis);
    double acc = 0.0;
    for (int64_t i = 0; i < m; ++i) {
      const double lam =
          std::max(es.eigenvalues()(es.eigenvalues().size() - 1 - i), 1e-300);
      acc += std::log(lam);
    }
    td.lam_geo = std::exp(acc / static_cast<double>(m));
  }
  return td;
}

double ShapeEvaluator::q1_objective(const TrialData& td, const PriorTerms& pt,
                                    double u, double r, double omega,
                                    double nlnu) const {
  const double rho = r * omega;
  const double scal = 1.0 + r - rho;  // >= 1 for omega in [0,1]
  double lndet_block = 0.0;
  if (td.p > 0) {
    CMatrix A = (1.0 + r) * CMatrix::Identity(td.p, td.p);
    if (u != 0.0) A.noalias() += u * td.P1;
    if (rho != 0.0) A.noalias() -= rho * td.P2;
    bool ok = false;
    lndet_spd((A - kFeasMargin * CMatrix::Identity(td.p, td.p)).eval(), &ok);
    if (!ok) return kPosInf;  // lambda_min(B) <= margin: infeasible
    lndet_block = lndet_spd(A, &ok);
    if (!ok) return kPosInf;
  }
  const double nn = static_cast<double>(cfg_.n);
  const double LL = static_cast<double>(cfg_.L);
  const double lndetB =
      (nn - static_cast<double>(td.p)) * std::log(scal) + lndet_block;

  const double b_ur = -cmul(u, pt.bpp) + cmul(r, pt.b) + cmul(u, pt.bp) -
                      cmul(rho, pt.b1);
  const double det_terms = cmul(u, td.ld_Fpp) - cmul(r, td.ld_F) -
                           cmul(u, td.ld_Fp) + cmul(rho, td.ld_F1);
  const double obj = cmul(r, nlnu) + b_ur + LL * (det_terms - lndetB);
  if (std::isnan(obj)) return kPosInf;
  return obj;
}

double ShapeEvaluator::q1_trial_min(const TrialData& td, const PriorTerms& pt,
                                    double omega, double nlnu,
                                    bool refine) const {
  const auto& urg = ur_grid();
  double best = kPosInf;
  double bu = 0.0, br = 0.0;
  for (double u : urg) {
    for (double r : urg) {
      const double v = q1_objective(td, pt, u, r, omega, nlnu);
      if (v < best) {
        best = v;
        bu = u;
        br = r;
      }
    }
  }
  if (!refine || !std::isfinite(best)) return best;

  const double ratio = std::pow(10.0 / 1e-2, 1.0 / 7.0);
  auto bracket = [&](double x) -> std::pair<double, double> {
    if (x == 0.0) return {0.0, urg[1]};
    return {x / ratio, x * ratio};
  };
  {
    auto [lo, hi] = bracket(bu);
    auto [x, v] = optimize::golden_min(
        [&](double u) { return q1_objective(td, pt, u, br, omega, nlnu); }, lo,
        hi, kInnerRefineIters);
    if (v < best) {
      best = v;
      bu = x;
    }
  }
  {
    auto [lo, hi] = bracket(br);
    auto [x, v] = optimize::golden_min(
        [&](double r) { return q1_objective(td, pt, bu, r, omega, nlnu); }, lo,
        hi, kInnerRefineIters);
    if (v < best) best = v;
  }
  return best;
}

double ShapeEvaluator::q2_gamma_term(const TrialData& td, const PriorTerms& pt,
                                     int64_t mis, double omega, double nlnu,
                                     double delta) const {
  const double nn = static_cast<double>(cfg_.n);
  const double LL = static_cast<double>(cfg_.L);
  const double numer = nn * LL * (1.0 + delta) * (1.0 - omega) -
                       cmul(omega, LL * td.ld_F1 - pt.b1) + LL * td.ld_F -
                       pt.b - nlnu;
  if (std::isnan(numer)) return 0.0;  // ill-defined region: keep full mass
  if (omega <= 0.0) return numer > 0.0 ? 0.0 : kNegInf;
  const double x = numer / (omega * td.lam_geo);
  if (!(x > 0.0)) return kNegInf;
  const double a = LL * static_cast<double>(std::min<int64_t>(cfg_.n, mis));
  return specfun::log_reg_gamma(specfun::GammaKind::Lower, a, x);
}

double ShapeEvaluator::q20_term(const TrialData& td, const PriorTerms& pt,
                                double omega, double nlnu) const {
  if (omega >= 1.0) return kNegInf;  // the region then covers everything
  const double LL = static_cast<double>(cfg_.L);
  const double x = nlnu / (1.0 - omega) - LL * td.ld_F + pt.b;
  if (std::isnan(x)) return 0.0;
  if (!(x > 0.0)) return 0.0;
  return specfun::log_reg_gamma(specfun::GammaKind::Upper,
                                static_cast<double>(cfg_.n) * LL, x);
}

std::pair<double, double> ShapeEvaluator::q2_value(
    const std::vector<TrialData>& trials, const PriorTerms& pt,
    const ShapeSpec& sh, double omega, double nlnu, int delta_iters) const {
  const double nn = static_cast<double>(cfg_.n);
  const double LL = static_cast<double>(cfg_.L);

  if (sh.mis == 0) {
    LogMeanAccumulator acc;
    for (const auto& td : trials) acc.add(q20_term(td, pt, omega, nlnu));
    return {acc.log_mean(), acc.std_err()};
  }

  const double log_binom = specfun::log_binomial(
      static_cast<double>(sh.K_a), static_cast<double>(sh.mis));
  auto objective = [&](double delta) {
    const double log_tail = specfun::log_reg_gamma(
        specfun::GammaKind::Upper, nn * LL, nn * LL * (1.0 + delta));
    LogMeanAccumulator acc;
    for (const auto& td : trials)
      acc.add(q2_gamma_term(td, pt, sh.mis, omega, nlnu, delta));
    return specfun::log_add_exp(log_tail, acc.log_mean());
  };
  auto [delta_star, log_min] =
      optimize::golden_min_ray(objective, 0.125, delta_iters);
  // reconstruct the std err at the chosen delta
  LogMeanAccumulator acc;
  for (const auto& td : trials)
    acc.add(q2_gamma_term(td, pt, sh.mis, omega, nlnu, delta_star));
  return {log_binom + log_min, std::exp(log_binom) * acc.std_err()};
}

ShapeResult ShapeEvaluator::evaluate(const ShapeSpec& sh) const {
  const PriorTerms pt = prior_terms(sh);
  const double nn = static_cast<double>(cfg_.n);
  const double LL = static_cast<double>(cfg_.L);
  const int64_t trials = plan_.trials;
  const int64_t pilot = std::min<int64_t>(kPilotTrials, trials);

  const double log_C =
      specfun::log_binomial(static_cast<double>(sh.K_a),
                            static_cast<double>(sh.mis)) +
      specfun::log_binomial(cfg_.M_as_double() - static_cast<double>(sh.K_a),
                            static_cast<double>(sh.fa));

  const auto& og = omega_grid();
  const auto& ng = nu_grid();

  // ---- pilot pass: coarse (omega, nu) grid ----
  std::vector<TrialData> pilot_data(static_cast<std::size_t>(pilot));
  for (int64_t t = 0; t < pilot; ++t)
    pilot_data[static_cast<std::size_t>(t)] =
        make_trial(sh, static_cast<uint64_t>(t));

  auto pilot_q1_mean = [&](double omega, double nu) {
    LogMeanAccumulator acc;
    for (const auto& td : pilot_data)
      acc.add(q1_trial_min(td, pt, omega, nn * LL * nu, false));
    return log_C + acc.log_mean();
  };
  auto pilot_total = [&](double omega, double nu) {
    const double q1 = pilot_q1_mean(omega, nu);
    const auto [q2, se] =
        q2_value(pilot_data, pt, sh, omega, nn * LL * nu, 25);
    (void)se;
    return specfun::log_add_exp(q1, q2);
  };

  double best_total = kPosInf;
  double best_omega = og.front(), best_nu = ng.front();
  for (double omega : og) {
    // the (u, r) grid sweep is shared across the nu axis
    std::vector<std::vector<std::pair<double, double>>> base(
        pilot_data.size());  // (r, objective without the r n L nu term)
    for (std::size_t t = 0; t < pilot_data.size(); ++t) {
      for (double u : ur_grid()) {
        for (double r : ur_grid()) {
          const double v = q1_objective(pilot_data[t], pt, u, r, omega, 0.0);
          if (std::isfinite(v)) base[t].push_back({r, v});
        }
      }
    }
    for (double nu : ng) {
      const double nlnu = nn * LL * nu;
      LogMeanAccumulator acc;
      for (auto& cands : base) {
        double m = kPosInf;
        for (auto [r, v] : cands) m = std::min(m, v + r * nlnu);
        acc.add(m);
      }
      const double q1 = log_C + acc.log_mean();
      const auto [q2, se] = q2_value(pilot_data, pt, sh, omega, nlnu, 25);
      (void)se;
      const double total = specfun::log_add_exp(q1, q2);
      if (total < best_total) {
        best_total = total;
        best_omega = omega;
        best_nu = nu;
      }
    }
  }

  // ---- one coordinate-wise golden pass on (omega, nu), pilot objective ----
  {
    const double h = 0.125;
    auto [w, v] = optimize::golden_min(
        [&](double omega) { return pilot_total(omega, best_nu); },
        std::max(0.0, best_omega - h), std::min(1.0, best_omega + h),
        kOuterRefineIters);
    if (v < best_total) {
      best_total = v;
      best_omega = w;
    }
  }
  {
    const double ratio = std::pow(10.0 / 1e-3, 1.0 / 8.0);
    auto [x, v] = optimize::golden_min(
        [&](double nu) { return pilot_total(best_omega, nu); },
        best_nu / ratio, best_nu * ratio, kOuterRefineIters);
    if (v < best_total) {
      best_total = v;
      best_nu = x;
    }
  }

  // ---- final pass: all trials at the chosen (omega, nu) ----
  const double nlnu = nn * LL * best_nu;
  std::vector<double> q1_vals(static_cast<std::size_t>(trials));
  std::vector<TrialData> all_data(static_cast<std::size_t>(trials));
  rng::parallel_for(static_cast<std::size_t>(trials), plan_.threads,
                    [&](std::size_t t) {
                      all_data[t] = make_trial(sh, static_cast<uint64_t>(t));
                      q1_vals[t] = q1_trial_min(all_data[t], pt, best_omega,
                                                nlnu, true);
                    });
  LogMeanAccumulator q1_acc;
  for (double v : q1_vals) q1_acc.add(v);
  const double q1 = log_C + q1_acc.log_mean();
  const double q1_se = std::exp(log_C) * q1_acc.std_err();
  const auto [q2, q2_se] = q2_value(all_data, pt, sh, best_omega, nlnu);

  ShapeResult out;
  out.log_p = specfun::log_add_exp(q1, q2);
  out.std_err = std::hypot(q1_se, q2_se);
  out.omega = best_omega;
  out.nu = best_nu;
  return out;
}

// ---------------------------------------------------------------------------
// Assembly of the misdetection / false-alarm sums.
// ---------------------------------------------------------------------------

struct CellRanges {
  int64_t K_al = 0, K_au = 0;  // list-size interval for this K_a'
  int64_t w11 = 0, w21 = 0;
  int64_t t_hi = -1;  // T_{K'_a} = [0 : t_hi]
};

CellRanges cell_ranges(const SystemConfig& cfg, const DecoderWindow& win,
                       int64_t K_a, int64_t K_a_prime) {
  CellRanges r;
  r.K_al = win.list_lower(K_a_prime);
  r.K_au = win.list_upper(K_a_prime);
  r.w11 = pos(K_a - r.K_au);
  r.w21 = pos(r.K_al - K_a);
  int64_t hi = std::min(K_a, r.K_au);
  if (cfg.J < 62) {
    const int64_t M = int64_t(1) << cfg.J;
    hi = std::min(hi, M - r.K_al - r.w11);
  }
  r.t_hi = hi;
  return r;
}

int64_t t_upper(const SystemConfig& cfg, const CellRanges& r, int64_t K_a,
                int64_t t) {
  int64_t hi = pos(r.K_au - K_a) - r.w21 + t;
  if (cfg.J < 62) {
    const int64_t M = int64_t(1) << cfg.J;
    hi = std::min(hi, M - std::max(K_a, r.K_al));
  }
  return hi;
}

int64_t tbar_lower(const CellRanges& r, int64_t K_a, int64_t t) {
  return pos(r.w11 - pos(K_a - r.K_al) + t);
}

int64_t t_lower(const CellRanges& r, int64_t K_a, int64_t t) {
  return pos(r.w11 - r.w21 + std::max<int64_t>(r.K_al, 1) - K_a + t);
}

// ln p0: change-of-measure mass (power violations, prior tail, collisions).
double log_p0_total(const SystemConfig& cfg, const ActivityPrior& prior,
                    const CodebookSpec& spec, int64_t K_l, int64_t K_u) {
  std::vector<double> terms;
  terms.push_back(prior.log_mass_out(K_l, K_u));
  if (spec.ensemble == CodebookSpec::Ensemble::Gaussian) {
    const double log_q = specfun::log_reg_gamma(
        specfun::GammaKind::Upper, static_cast<double>(cfg.n),
        static_cast<double>(cfg.n) * cfg.P / spec.P_prime);
    for (int64_t k = 1; k <= cfg.K; ++k)
      terms.push_back(prior.log_pmf(k) + std::log(static_cast<double>(k)) +
                      log_q);
  }
  for (int64_t k = 2; k <= cfg.K; ++k)
    terms.push_back(prior.log_pmf(k) +
                    specfun::log_binomial(static_cast<double>(k), 2.0) -
                    cfg.ln_M());
  return specfun::log_sum_exp(terms);
}

struct PairKey {
  int64_t K_a, K_a_prime;
  bool operator<(const PairKey& o) const {
    return std::tie(K_a, K_a_prime) < std::tie(o.K_a, o.K_a_prime);
  }
};

}  // namespace

double map_metric(const CMatrix& Y, const CMatrix& candidates,
                  const ActivityPrior& prior, const SystemConfig& cfg) {
  const auto count = candidates.cols();
  const double log_prior = prior.log_pmf(count);
  if (log_prior == kNegInf) return kPosInf;

  const double LL = static_cast<double>(cfg.L);
  double lndet = 0.0;
  double quad = Y.squaredNorm();
  if (count > 0) {
    CMatrix G = CMatrix::Identity(count, count);
    G.noalias() += candidates.adjoint() * candidates;
    Eigen::LLT<CMatrix> llt(G);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("map_metric: Gram factorization failed");
    for (Eigen::Index i = 0; i < count; ++i)
      lndet += 2.0 * std::log(std::real(llt.matrixLLT()(i, i)));
    const CMatrix W = candidates.adjoint() * Y;
    quad -= (W.adjoint() * llt.solve(W)).real().trace();
  }
  const double log_choose =
      specfun::log_binomial(cfg.M_as_double(), static_cast<double>(count));
  return LL * lndet + quad - log_prior + log_choose;
}

DetectionBounds detection_error_bounds(const DetectionQuery& q) {
  validate_system_config(q.cfg);
  if (!q.prior.valid()) throw ValidationError({"prior required"});
  const DecoderWindow& win = q.window;
  if (win.K_l < 0 || win.K_l > win.K_u || win.K_u > q.cfg.K ||
      win.r_prime < 0)
    throw ValidationError({"window requires 0 <= K_l <= K_u <= K, r' >= 0"});
  if (q.prior.log_mass_in(win.K_l, win.K_u) == kNegInf)
    throw ValidationError({"empty truncated prior"});

  const ActivityPrior& dec_prior =
      q.decoder_prior.valid() ? q.decoder_prior : q.prior;
  // shapes are evaluated in parallel below, so each evaluation runs serial
  MonteCarloPlan serial_plan = q.plan;
  serial_plan.threads = 1;
  ShapeEvaluator eval(q.cfg, q.spec, &dec_prior, serial_plan);

  // enumerate the distinct shapes and pairwise queries first
  std::set<ShapeSpec> shape_set;
  std::set<PairKey> pair_set;
  for (int64_t K_a = win.K_l; K_a <= win.K_u; ++K_a) {
    if (q.prior.log_pmf(K_a) == kNegInf) continue;
    for (int64_t K_ap = win.K_l; K_ap <= win.K_u; ++K_ap) {
      const CellRanges r = cell_ranges(q.cfg, win, K_a, K_ap);
      if (r.t_hi < 0) continue;
      pair_set.insert({K_a, K_ap});
      for (int64_t t = 0; t <= r.t_hi; ++t) {
        const int64_t mis = t + r.w11;
        const int64_t tu = t_upper(q.cfg, r, K_a, t);
        if (K_a >= 1 && mis > 0) {  // misdetection cells
          for (int64_t tp = tbar_lower(r, K_a, t); tp <= tu; ++tp)
            shape_set.insert({K_a, mis, tp + r.w21, r.w11, r.w21, true});
        }
        for (int64_t tp = t_lower(r, K_a, t); tp <= tu; ++tp) {
          if (tp + r.w21 > 0)  // false-alarm cells
            shape_set.insert({K_a, mis, tp + r.w21, r.w11, r.w21, true});
        }
      }
    }
  }

  std::vector<ShapeSpec> shapes(shape_set.begin(), shape_set.end());
  std::vector<ShapeResult> shape_vals(shapes.size());
  rng::parallel_for(shapes.size(), q.plan.threads, [&](std::size_t i) {
    shape_vals[i] = eval.evaluate(shapes[i]);
  });
  std::map<ShapeSpec, ShapeResult> shape_map;
  for (std::size_t i = 0; i < shapes.size(); ++i)
    shape_map[shapes[i]] = shape_vals[i];

  // pairwise estimation terms share one spectra pool per K_a
  std::map<int64_t, std::vector<randmat::GramSpectrum>> pools;
  for (const auto& pk : pair_set) {
    if (!pools.count(pk.K_a))
      pools[pk.K_a] = ka_estimation::sample_unit_gram_pool(
          q.cfg.n, pk.K_a, q.spec.ensemble, q.plan);
  }
  std::vector<PairKey> pairs(pair_set.begin(), pair_set.end());
  std::vector<BoundValue> pair_vals(pairs.size());
  rng::parallel_for(pairs.size(), q.plan.threads, [&](std::size_t i) {
    pair_vals[i] = ka_estimation::pairwise_new_measure(
        pools.at(pairs[i].K_a), q.cfg.n, q.cfg.L, pairs[i].K_a_prime,
        q.spec.P_prime);
  });
  std::map<PairKey, BoundValue> pair_map;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    pair_map[pairs[i]] = pair_vals[i];

  // assemble the two sums
  const double log_p0 = log_p0_total(q.cfg, q.prior, q.spec, win.K_l, win.K_u);
  std::vector<double> md_terms{log_p0}, fa_terms{log_p0};
  double md_var = 0.0, fa_var = 0.0;
  DetectionBounds out;
  out.log_p0 = log_p0;

  for (int64_t K_a = win.K_l; K_a <= win.K_u; ++K_a) {
    const double lp = q.prior.log_pmf(K_a);
    if (lp == kNegInf) continue;
    for (int64_t K_ap = win.K_l; K_ap <= win.K_u; ++K_ap) {
      const CellRanges r = cell_ranges(q.cfg, win, K_a, K_ap);
      if (r.t_hi < 0) continue;
      const BoundValue& pair = pair_map.at({K_a, K_ap});
      for (int64_t t = 0; t <= r.t_hi; ++t) {
        const int64_t mis = t + r.w11;
        const int64_t tu = t_upper(q.cfg, r, K_a, t);

        if (K_a >= 1 && mis > 0) {
          // misdetection: the t' sum sits inside the min
          std::vector<double> tp_terms;
          double tp_var = 0.0;
          for (int64_t tp = tbar_lower(r, K_a, t); tp <= tu; ++tp) {
            const auto& sv =
                shape_map.at({K_a, mis, tp + r.w21, r.w11, r.w21, true});
            tp_terms.push_back(sv.log_p);
            tp_var += sv.std_err * sv.std_err;
          }
          const double log_sum = specfun::log_sum_exp(tp_terms);
          double inner = std::min(0.0, std::min(log_sum, pair.log_value));
          double inner_se = 0.0;
          if (inner == log_sum)
            inner_se = std::sqrt(tp_var);
          else if (inner == pair.log_value)
            inner_se = pair.std_err;
          const double lw =
              lp + std::log(static_cast<double>(mis) /
                            static_cast<double>(K_a));
          md_terms.push_back(lw + inner);
          md_var += std::exp(2.0 * lw) * inner_se * inner_se;
          if (q.collect_diagnostics) {
            CellDiagnostic d;
            d.K_a = K_a;
            d.K_a_prime = K_ap;
            d.t = t;
            d.t_prime = -1;
            d.log_pre_clip = std::min(log_sum, pair.log_value);
            d.std_err = inner_se;
            out.cells.push_back(d);
          }
        }

        // false alarms: the t' sum sits outside the min
        for (int64_t tp = t_lower(r, K_a, t); tp <= tu; ++tp) {
          const int64_t fa = tp + r.w21;
          if (fa == 0) continue;
          const int64_t K_hat = K_a - mis + fa;
          const auto& sv = shape_map.at({K_a, mis, fa, r.w11, r.w21, true});
          double inner = std::min(0.0, std::min(sv.log_p, pair.log_value));
          double inner_se = 0.0;
          if (inner == sv.log_p)
            inner_se = sv.std_err;
          else if (inner == pair.log_value)
            inner_se = pair.std_err;
          const double lw =
              lp + std::log(static_cast<double>(fa) /
                            static_cast<double>(K_hat));
          fa_terms.push_back(lw + inner);
          fa_var += std::exp(2.0 * lw) * inner_se * inner_se;
          if (q.collect_diagnostics) {
            CellDiagnostic d;
            d.K_a = K_a;
            d.K_a_prime = K_ap;
            d.t = t;
            d.t_prime = tp;
            d.omega = sv.omega;
            d.nu = sv.nu;
            d.log_pre_clip = std::min(sv.log_p, pair.log_value);
            d.std_err = inner_se;
            out.cells.push_back(d);
          }
        }
      }
    }
  }

  out.p_md = {specfun::log_sum_exp(md_terms), std::sqrt(md_var),
              q.plan.trials};
  out.p_fa = {specfun::log_sum_exp(fa_terms), std::sqrt(fa_var),
              q.plan.trials};
  return out;
}

EbN0Result min_ebn0_achievability(const SystemConfig& cfg_template,
                                  const ActivityPrior& prior,
                                  CodebookSpec::Ensemble ensemble,
                                  double eps_md, double eps_fa,
                                  const SearchConfig& search,
                                  const MonteCarloPlan& plan) {
  if (!(eps_md > 0.0 && eps_md < 1.0 && eps_fa > 0.0 && eps_fa < 1.0))
    throw ValidationError({"targets in (0,1)"});
  std::vector<int64_t> rset = search.r_prime_candidates;
  if (rset.empty())
    for (int64_t r = 1; r <= 30; ++r) rset.push_back(r);

  const auto [K_l, K_u] = prior.support_window(search.window_tail_mass);

  int64_t preferred_r = -1;
  auto feasible = [&](double P, EbN0Result* witness) {
    SystemConfig cfg = cfg_template;
    cfg.P = P;
    std::vector<double> pgrid;
    if (ensemble == CodebookSpec::Ensemble::Spherical)
      pgrid.push_back(P);
    else
      pgrid = log_grid(P / 100.0, P, std::max(1, search.pprime_grid));

    std::vector<int64_t> order = rset;
    if (preferred_r >= 0) {
      auto it = std::find(order.begin(), order.end(), preferred_r);
      if (it != order.end()) {
        order.erase(it);
        order.insert(order.begin(), preferred_r);
      }
    }
    for (int64_t rp : order) {
      for (double pp : pgrid) {
        DetectionQuery dq;
        dq.cfg = cfg;
        dq.prior = prior;
        dq.spec = {ensemble, pp};
        dq.window = {K_l, K_u, rp};
        dq.plan = plan;
        const DetectionBounds b = detection_error_bounds(dq);
        if (b.p_md.value() <= eps_md && b.p_fa.value() <= eps_fa) {
          if (witness) {
            witness->P = P;
            witness->P_prime = pp;
            witness->r_prime = rp;
            witness->K_l = K_l;
            witness->K_u = K_u;
          }
          preferred_r = rp;
          return true;
        }
      }
    }
    return false;
  };

  EbN0Result res;
  res.K_l = K_l;
  res.K_u = K_u;
  if (!feasible(search.P_hi, &res)) {
    res.feasible = false;
    res.note = "infeasible at the upper power bracket";
    return res;
  }
  double lo = search.P_lo, hi = search.P_hi;
  EbN0Result hi_witness = res;
  if (feasible(lo, &hi_witness)) {
    hi = lo;  // already feasible at the bracket bottom
    res.note = "feasible at the lower power bracket";
  } else {
    while (10.0 * std::log10(hi / lo) > search.tol_db) {
      const double mid = std::sqrt(hi * lo);
      EbN0Result w = res;
      if (feasible(mid, &w)) {
        hi = mid;
        hi_witness = w;
      } else {
        lo = mid;
      }
    }
  }
  res = hi_witness;
  res.feasible = true;
  res.P = hi;
  res.ebn0_db = 10.0 * std::log10(static_cast<double>(cfg_template.n) * hi /
                                  static_cast<double>(cfg_template.J));
  res.K_l = K_l;
  res.K_u = K_u;
  return res;
}

JointBound joint_error_achievability(const SystemConfig& cfg, int64_t K_a,
                                     CodebookSpec::Ensemble ensemble,
                                     const MonteCarloPlan& plan,
                                     int pprime_grid) {
  validate_system_config(cfg);
  if (K_a < 0) throw ValidationError({"K_a >= 0"});
  if (cfg.J < 62 && K_a > (int64_t(1) << cfg.J))
    throw ValidationError({"K_a <= M required for a collision-free measure"});
  if (K_a == 0) return {BoundValue::exact(kNegInf), cfg.P};

  std::vector<double> pgrid;
  if (ensemble == CodebookSpec::Ensemble::Spherical)
    pgrid.push_back(cfg.P);
  else
    pgrid = log_grid(cfg.P / 100.0, cfg.P, std::max(1, pprime_grid));

  MonteCarloPlan serial_plan = plan;
  serial_plan.threads = 1;
  JointBound best;
  best.bound.log_value = kPosInf;
  for (double pp : pgrid) {
    const CodebookSpec spec{ensemble, pp};
    ShapeEvaluator eval(cfg, spec, nullptr, serial_plan);
    std::vector<ShapeSpec> shapes;
    for (int64_t t = 1; t <= K_a; ++t)
      shapes.push_back({K_a, t, t, 0, 0, false});
    std::vector<ShapeResult> vals(shapes.size());
    rng::parallel_for(shapes.size(), plan.threads, [&](std::size_t i) {
      vals[i] = eval.evaluate(shapes[i]);
    });

    std::vector<double> terms;
    double var = 0.0;
    const double coll =
        K_a >= 2 ? specfun::log_binomial(static_cast<double>(K_a), 2.0) -
                       cfg.ln_M()
                 : kNegInf;
    const double log_p0 = specfun::log_add_exp(
        coll, ka_estimation::power_violation_prob(spec, cfg, K_a).log_value);
    terms.push_back(log_p0);
    std::vector<double> log_p_t;
    for (const auto& v : vals) {
      terms.push_back(v.log_p);
      log_p_t.push_back(v.log_p);
      var += v.std_err * v.std_err;
    }
    BoundValue total{specfun::log_sum_exp(terms), std::sqrt(var),
                     plan.trials};
    if (total.log_value < best.bound.log_value) {
      best.bound = total;
      best.chosen_P_prime = pp;
      best.log_p0 = log_p0;
      best.log_p_t = std::move(log_p_t);
    }
  }
  return best;
}

}  // namespace ura::detection
