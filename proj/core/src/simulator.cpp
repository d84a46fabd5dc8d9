#include "ura/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ura/ka_estimation.hpp"
#include "ura/specfun.hpp"

namespace ura::simulator {

using randmat::CMatrix;
using specfun::kNegInf;

namespace {

constexpr uint32_t kKaSimTag = 5;
constexpr uint32_t kTwoStageTag = 6;
constexpr int64_t kMaxCodebook = 20;
constexpr double kMaxSubsets = 1e6;

int uniform_int(rng::Substream& sub, int m) {
  const double u = sub.next_uniform();
  int v = static_cast<int>(u * m);
  return std::min(v, m - 1);
}

}  // namespace

double KaHistogram::prob(int64_t k) const {
  if (k < 0 || k >= static_cast<int64_t>(counts.size()) || trials == 0)
    return 0.0;
  return static_cast<double>(counts[static_cast<std::size_t>(k)]) /
         static_cast<double>(trials);
}

double KaHistogram::std_err(int64_t k) const {
  if (trials == 0) return 0.0;
  const double p = prob(k);
  return std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

KaHistogram simulate_ka_estimation(const SystemConfig& cfg,
                                   const CodebookSpec& spec, int64_t K_a,
                                   const MonteCarloPlan& plan) {
  validate_system_config(cfg);
  if (K_a < 0 || K_a > cfg.K) throw ValidationError({"K_a in [0, K]"});
  validate_plan(plan);

  std::vector<int64_t> estimates(static_cast<std::size_t>(plan.trials));
  const uint64_t stream =
      rng::pack_stream(kKaSimTag, static_cast<uint64_t>(K_a));
  rng::parallel_for(
      static_cast<std::size_t>(plan.trials), plan.threads,
      [&](std::size_t t) {
        rng::Substream sub(plan.seed, stream, t);
        const CMatrix C =
            randmat::sample_codebook(spec, cfg.n, K_a, sub).entries;
        CMatrix H(K_a, cfg.L);
        for (Eigen::Index j = 0; j < cfg.L; ++j)
          for (Eigen::Index i = 0; i < K_a; ++i) H(i, j) = sub.next_cgauss();
        CMatrix Y(cfg.n, cfg.L);
        for (Eigen::Index j = 0; j < cfg.L; ++j)
          for (Eigen::Index i = 0; i < cfg.n; ++i) Y(i, j) = sub.next_cgauss();
        if (K_a > 0) Y.noalias() += C * H;
        estimates[t] =
            ka_estimation::estimate_active_count(Y, spec.P_prime, cfg.K);
      });

  KaHistogram hist;
  hist.counts.assign(static_cast<std::size_t>(cfg.K) + 1, 0);
  hist.trials = plan.trials;
  for (int64_t e : estimates) ++hist.counts[static_cast<std::size_t>(e)];
  return hist;
}

std::vector<int> brute_force_map_decode(const CMatrix& Y,
                                        const CMatrix& codebook,
                                        const ActivityPrior& prior,
                                        int64_t size_lo, int64_t size_hi,
                                        const SystemConfig& cfg) {
  const int64_t M = codebook.cols();
  if (M > kMaxCodebook)
    throw ValidationError({"brute-force decoder requires M <= 20"});
  size_lo = std::max<int64_t>(size_lo, 0);
  size_hi = std::min<int64_t>(size_hi, M);
  double subsets = 0.0;
  for (int64_t k = size_lo; k <= size_hi; ++k)
    subsets += std::exp(specfun::log_binomial(static_cast<double>(M),
                                              static_cast<double>(k)));
  if (subsets > kMaxSubsets)
    throw ValidationError({"brute-force decoder subset budget exceeded"});

  // shared pieces of the metric across subsets
  const CMatrix G = codebook.adjoint() * codebook;  // M x M
  const CMatrix W = codebook.adjoint() * Y;         // M x L
  const double y_norm = Y.squaredNorm();
  const double LL = static_cast<double>(cfg.L);
  const double M_d = cfg.M_as_double();

  double best = specfun::kPosInf;
  std::vector<int> best_set;

  std::vector<int> idx;
  for (int64_t k = size_lo; k <= size_hi; ++k) {
    const double log_prior = prior.log_pmf(k);
    const double size_terms =
        -log_prior +
        specfun::log_binomial(M_d, static_cast<double>(k));
    if (log_prior == kNegInf) continue;  // zero-mass sizes are excluded
    if (k == 0) {
      const double metric = y_norm + size_terms;
      if (metric < best) {
        best = metric;
        best_set.clear();
      }
      continue;
    }
    idx.assign(static_cast<std::size_t>(k), 0);
    std::iota(idx.begin(), idx.end(), 0);
    for (;;) {
      CMatrix Gs = CMatrix::Identity(k, k);
      CMatrix Ws(k, cfg.L);
      for (int64_t a = 0; a < k; ++a) {
        Ws.row(a) = W.row(idx[static_cast<std::size_t>(a)]);
        for (int64_t b = 0; b < k; ++b)
          Gs(a, b) += G(idx[static_cast<std::size_t>(a)],
                        idx[static_cast<std::size_t>(b)]);
      }
      Eigen::LLT<CMatrix> llt(Gs);
      double lndet = 0.0;
      for (Eigen::Index i = 0; i < k; ++i)
        lndet += 2.0 * std::log(std::real(llt.matrixLLT()(i, i)));
      const double quad = y_norm - (Ws.adjoint() * llt.solve(Ws)).real().trace();
      const double metric = LL * lndet + quad + size_terms;
      if (metric < best) {  // strict: earlier subsets win ties
        best = metric;
        best_set = idx;
      }
      // next k-combination of [0, M)
      int64_t i = k - 1;
      while (i >= 0 &&
             idx[static_cast<std::size_t>(i)] == M - k + i)
        --i;
      if (i < 0) break;
      ++idx[static_cast<std::size_t>(i)];
      for (int64_t j = i + 1; j < k; ++j)
        idx[static_cast<std::size_t>(j)] =
            idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return best_set;
}

TwoStageStats simulate_two_stage(const SystemConfig& cfg,
                                 const ActivityPrior& prior,
                                 const CodebookSpec& spec,
                                 const detection::DecoderWindow& window,
                                 const MonteCarloPlan& plan,
                                 std::vector<TrialOutcome>* records) {
  validate_system_config(cfg);
  if (!prior.valid()) throw ValidationError({"prior required"});
  validate_plan(plan);
  if ((int64_t(1) << std::min<int64_t>(cfg.J, 20)) > kMaxCodebook)
    throw ValidationError({"two-stage simulation requires M <= 20"});
  const int M = 1 << cfg.J;

  struct Cell {
    double md = 0.0, fa = 0.0, joint = 0.0;
    TrialOutcome rec;
  };
  std::vector<Cell> cells(static_cast<std::size_t>(plan.trials));

  rng::parallel_for(
      static_cast<std::size_t>(plan.trials), plan.threads,
      [&](std::size_t t) {
        rng::Substream sub(plan.seed, rng::pack_stream(kTwoStageTag), t);
        Cell& cell = cells[t];

        const int64_t K_a = prior.sample(sub.next_uniform());
        const CMatrix C =
            randmat::sample_codebook(spec, cfg.n, M, sub).entries;
        std::vector<int> sent(static_cast<std::size_t>(K_a));
        for (auto& w : sent) w = uniform_int(sub, M);

        CMatrix Y(cfg.n, cfg.L);
        for (Eigen::Index j = 0; j < cfg.L; ++j)
          for (Eigen::Index i = 0; i < cfg.n; ++i)
            Y(i, j) = sub.next_cgauss();
        if (K_a > 0) {
          CMatrix X(cfg.n, K_a);
          for (int64_t k = 0; k < K_a; ++k)
            X.col(k) = C.col(sent[static_cast<std::size_t>(k)]);
          CMatrix H(K_a, cfg.L);
          for (Eigen::Index j = 0; j < cfg.L; ++j)
            for (Eigen::Index i = 0; i < K_a; ++i)
              H(i, j) = sub.next_cgauss();
          Y.noalias() += X * H;
        }

        int64_t est =
            ka_estimation::estimate_active_count(Y, spec.P_prime, cfg.K);
        est = std::clamp(est, window.K_l, window.K_u);
        const auto decoded =
            brute_force_map_decode(Y, C, prior, window.list_lower(est),
                                   window.list_upper(est), cfg);

        const std::set<int> sent_set(sent.begin(), sent.end());
        const std::set<int> dec_set(decoded.begin(), decoded.end());
        int64_t missed_users = 0;
        for (int w : sent) missed_users += dec_set.count(w) ? 0 : 1;
        int64_t false_alarms = 0;
        for (int w : decoded) false_alarms += sent_set.count(w) ? 0 : 1;

        cell.md = K_a >= 1 ? static_cast<double>(missed_users) /
                                 static_cast<double>(K_a)
                           : 0.0;
        cell.fa = !decoded.empty() ? static_cast<double>(false_alarms) /
                                         static_cast<double>(decoded.size())
                                   : 0.0;
        cell.joint = sent_set != dec_set ? 1.0 : 0.0;
        if (records) {
          cell.rec.true_count = K_a;
          cell.rec.estimated_count = est;
          cell.rec.sent = sent;
          cell.rec.decoded = decoded;
          int64_t missed_msgs = 0;
          for (int w : sent_set) missed_msgs += dec_set.count(w) ? 0 : 1;
          cell.rec.misdetections = missed_msgs;
          cell.rec.false_alarms = false_alarms;
          cell.rec.joint_error = cell.joint > 0.0;
        }
      });

  TwoStageStats out;
  out.trials = plan.trials;
  double s_md = 0.0, s2_md = 0.0, s_fa = 0.0, s2_fa = 0.0, s_j = 0.0,
         s2_j = 0.0;
  for (auto& c : cells) {
    s_md += c.md;
    s2_md += c.md * c.md;
    s_fa += c.fa;
    s2_fa += c.fa * c.fa;
    s_j += c.joint;
    s2_j += c.joint * c.joint;
    if (records) records->push_back(std::move(c.rec));
  }
  const double T = static_cast<double>(plan.trials);
  auto mean_se = [T](double s, double s2, double* se) {
    const double m = s / T;
    const double var = std::max(0.0, s2 / T - m * m);
    *se = std::sqrt(var / std::max(1.0, T - 1.0));
    return m;
  };
  out.p_md = mean_se(s_md, s2_md, &out.p_md_se);
  out.p_fa = mean_se(s_fa, s2_fa, &out.p_fa_se);
  out.p_joint = mean_se(s_j, s2_j, &out.p_joint_se);
  return out;
}

TrendReport trend_report(const TrendQuery& q) {
  if (q.grid.size() < 4)
    throw ValidationError({"trend grid needs at least 4 points"});
  for (std::size_t i = 1; i < q.grid.size(); ++i)
    if (!(q.grid[i] > q.grid[i - 1]))
      throw ValidationError({"trend grid must be strictly increasing"});

  TrendReport rep;
  rep.grid = q.grid;
  rep.param_name = q.param == SweepParam::L ? "L"
                   : q.param == SweepParam::P ? "P"
                                              : "n";

  for (double g : q.grid) {
    SystemConfig cfg = q.base_cfg;
    CodebookSpec spec = q.spec;
    switch (q.param) {
      case SweepParam::L:
        cfg.L = static_cast<int64_t>(g);
        break;
      case SweepParam::P:
        cfg.P = g;
        spec.P_prime = g;  // the sweep keeps the design power at the cap
        break;
      case SweepParam::N:
        cfg.n = static_cast<int64_t>(g);
        break;
    }
    switch (q.quantity) {
      case TrendQuantity::KaBound: {
        ka_estimation::PairwiseErrorQuery pq;
        pq.cfg = cfg;
        pq.spec = spec;
        pq.K_a = q.K_a;
        pq.K_a_prime = q.K_a_prime;
        pq.plan = q.plan;
        const auto b = ka_estimation::pairwise_error_bound(pq);
        rep.log_values.push_back(b.bound.log_value);
        rep.std_errs.push_back(b.bound.std_err);
        break;
      }
      case TrendQuantity::PmdBound: {
        detection::DetectionQuery dq;
        dq.cfg = cfg;
        dq.prior = q.prior;
        dq.spec = spec;
        dq.window = q.window;
        dq.plan = q.plan;
        const auto b = detection::detection_error_bounds(dq);
        rep.log_values.push_back(b.p_md.log_value);
        rep.std_errs.push_back(b.p_md.std_err);
        break;
      }
      case TrendQuantity::EmpiricalKa: {
        const auto h = simulate_ka_estimation(cfg, spec, q.K_a, q.plan);
        const double p = h.prob(q.K_a_prime);
        rep.log_values.push_back(p > 0.0 ? std::log(p) : kNegInf);
        rep.std_errs.push_back(h.std_err(q.K_a_prime));
        break;
      }
    }
  }

  // least-squares fit of ln(value) against the swept parameter
  {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
    const double N = static_cast<double>(q.grid.size());
    for (std::size_t i = 0; i < q.grid.size(); ++i) {
      sx += q.grid[i];
      sy += rep.log_values[i];
      sxx += q.grid[i] * q.grid[i];
      sxy += q.grid[i] * rep.log_values[i];
      syy += rep.log_values[i] * rep.log_values[i];
    }
    const double sxx_c = sxx - sx * sx / N;
    const double sxy_c = sxy - sx * sy / N;
    const double syy_c = syy - sy * sy / N;
    rep.slope = sxx_c > 0.0 ? sxy_c / sxx_c : 0.0;
    rep.r_squared =
        (sxx_c > 0.0 && syy_c > 0.0) ? (sxy_c * sxy_c) / (sxx_c * syy_c) : 1.0;
  }

  // plateau: top half of the grid moves by less than 5 percent
  {
    const std::size_t half = q.grid.size() / 2;
    bool flat = true;
    const double ref = rep.log_values.back();
    for (std::size_t i = half; i < q.grid.size(); ++i)
      if (std::fabs(rep.log_values[i] - ref) > std::log(1.05)) flat = false;
    rep.plateau = flat;
  }

  rep.floor_log = std::numeric_limits<double>::quiet_NaN();
  if (q.quantity != TrendQuantity::PmdBound && q.K_a >= 1 &&
      q.K_a_prime != q.K_a) {
    ka_estimation::AsymptoticQuery aq;
    aq.L = q.base_cfg.L;
    aq.K_a = q.K_a;
    aq.K_a_prime = q.K_a_prime;
    aq.log2_M = q.base_cfg.log2_M();
    aq.ensemble = q.spec.ensemble;
    if (q.param == SweepParam::P) {
      aq.mode = ka_estimation::AsymptoticMode::PowerLimit;
      aq.n = q.base_cfg.n;
      aq.plan = q.plan;
      rep.floor_log = ka_estimation::asymptotic_pairwise_bound(aq).log_value;
    } else if (q.param == SweepParam::N) {
      aq.mode = ka_estimation::AsymptoticMode::BlocklengthLimit;
      rep.floor_log = ka_estimation::asymptotic_pairwise_bound(aq).log_value;
    }
  }
  return rep;
}

}  // namespace ura::simulator
