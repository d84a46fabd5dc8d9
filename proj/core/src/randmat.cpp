#include "ura/randmat.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ura/specfun.hpp"

namespace ura::randmat {

double GramSpectrum::sum() const {
  double s = 0.0;
  for (double v : eigenvalues) s += v;
  return s;
}

CodewordBlock sample_codebook(const CodebookSpec& spec, int64_t n,
                              int64_t count, rng::Substream& stream) {
  if (n < 1) throw ValidationError({"n >= 1"});
  if (count < 0) throw ValidationError({"count >= 0"});
  CodewordBlock block;
  block.ensemble = spec.ensemble;
  block.P_prime = spec.P_prime;
  block.entries.resize(n, count);
  const double sd = std::sqrt(spec.P_prime);
  for (Eigen::Index j = 0; j < count; ++j) {
    for (Eigen::Index i = 0; i < n; ++i)
      block.entries(i, j) = stream.next_cgauss();
    if (spec.ensemble == CodebookSpec::Ensemble::Gaussian) {
      block.entries.col(j) *= sd;
    } else {
      const double norm = block.entries.col(j).norm();
      block.entries.col(j) *=
          std::sqrt(static_cast<double>(n) * spec.P_prime) / norm;
    }
  }
  return block;
}

GramSpectrum gram_spectrum(const CMatrix& columns) {
  GramSpectrum out;
  const Eigen::Index n = columns.rows();
  const Eigen::Index s = columns.cols();
  if (s == 0) return out;
  if (!columns.allFinite())
    throw std::runtime_error("gram_spectrum: non-finite entries");

  CMatrix gram;
  if (s <= n)
    gram = columns.adjoint() * columns;  // same nonzero spectrum as C C^H
  else
    gram = columns * columns.adjoint();
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(gram,
                                                Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("gram_spectrum: eigensolver failed");

  const auto& ev = solver.eigenvalues();
  const double scale = std::max(1.0, gram.real().trace());
  out.eigenvalues.resize(static_cast<std::size_t>(ev.size()));
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    double v = ev(ev.size() - 1 - i);  // nonincreasing
    if (v < 0.0) {
      if (v < -1e-12 * scale)
        throw std::runtime_error("gram_spectrum: negative eigenvalue");
      v = 0.0;
    }
    out.eigenvalues[static_cast<std::size_t>(i)] = v;
  }
  return out;
}

GramSpectrum gram_spectrum(const CodewordBlock& block) {
  return gram_spectrum(block.entries);
}

double logdet_from_spectrum(const GramSpectrum& spectrum, double scale) {
  if (scale < 0.0) throw ValidationError({"scale >= 0"});
  double acc = 0.0;
  for (double lambda : spectrum.eigenvalues) acc += std::log1p(scale * lambda);
  return acc;
}

double logdet_i_plus_gram(const CodewordBlock& block, double scale) {
  return logdet_from_spectrum(gram_spectrum(block), scale);
}

BoundValue expected_logdet(int64_t n, int64_t K_a, double P,
                           CodebookSpec::Ensemble ensemble,
                           const MonteCarloPlan& plan) {
  if (K_a < 0) throw ValidationError({"K_a >= 0"});
  if (K_a == 0 || P == 0.0) return BoundValue{specfun::kNegInf, 0.0, 0};
  validate_plan(plan);

  const uint64_t stream =
      rng::pack_stream(3, static_cast<uint64_t>(K_a));
  const CodebookSpec spec{ensemble, P};
  std::vector<double> log_vals(static_cast<std::size_t>(plan.trials));
  rng::parallel_for(
      static_cast<std::size_t>(plan.trials), plan.threads,
      [&](std::size_t t) {
        rng::Substream sub(plan.seed, stream, t);
        const CodewordBlock X = sample_codebook(spec, n, K_a, sub);
        const double bits = logdet_i_plus_gram(X) / M_LN2;
        log_vals[t] = std::log(std::max(bits, 1e-300));
      });

  LogMeanAccumulator acc;
  for (double v : log_vals) acc.add(v);
  return acc.to_bound();
}

}  // namespace ura::randmat
