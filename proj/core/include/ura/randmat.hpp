#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ura/rng.hpp"
#include "ura/types.hpp"

// Random-matrix primitives: codebook sampling for both ensembles, spectra
// and log-determinants of Gram matrices, and the Monte-Carlo expected
// log-det feeding the Fano converses. Eigendecompositions always run on
// the min(n, S)-sized Gram side.

namespace ura::randmat {

using CMatrix = Eigen::MatrixXcd;

struct CodewordBlock {
  CMatrix entries;  // n x S
  CodebookSpec::Ensemble ensemble = CodebookSpec::Ensemble::Spherical;
  double P_prime = 0.0;

  Eigen::Index n() const { return entries.rows(); }
  Eigen::Index count() const { return entries.cols(); }
};

// Nonzero-side eigenvalues of C C^H, nonincreasing, tiny negatives clamped.
struct GramSpectrum {
  std::vector<double> eigenvalues;
  double sum() const;
};

CodewordBlock sample_codebook(const CodebookSpec& spec, int64_t n,
                              int64_t count, rng::Substream& stream);

GramSpectrum gram_spectrum(const CodewordBlock& block);
GramSpectrum gram_spectrum(const CMatrix& columns);

// ln |I_n + scale * C C^H| = sum ln(1 + scale * lambda_i).
double logdet_i_plus_gram(const CodewordBlock& block, double scale = 1.0);
double logdet_from_spectrum(const GramSpectrum& spectrum, double scale = 1.0);

// Monte-Carlo E[ log2 |I_n + X X^H| ] for X with i.i.d. entries of mean 0
// and variance P (gaussian) or spherical columns of squared norm nP.
// The BoundValue holds ln of the (bits-valued) mean; K_a = 0 gives exact 0.
BoundValue expected_logdet(int64_t n, int64_t K_a, double P,
                           CodebookSpec::Ensemble ensemble,
                           const MonteCarloPlan& plan);

}  // namespace ura::randmat
