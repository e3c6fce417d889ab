#pragma once

// Exact solutions of dv/ds = L v with L = Laplace-Beltrami + 2 on S^n(sqrt n),
// and the three-interval growth/decay lemmas evaluated on them.

#include <cstdint>
#include <optional>
#include <random>
#include <utility>

#include "mcflab/spectral_sphere.hpp"

namespace mcflab {

/// v(s) = sum a_k e^{lambda_k s} Y_k.
struct ModalSolution {
  ZonalSpectrumd initial;

  int dimension() const { return initial.n; }
  ZonalSpectrumd at(double s) const;
  double norm(double s) const;
};

ZonalSpectrumd evolve_linear(const ZonalSpectrumd& initial, double s);

/// up = degrees 0 and 1 (positive eigenvalues), down = degrees >= 2. L has no kernel.
std::pair<ZonalSpectrumd, ZonalSpectrumd> split_modes(const ZonalSpectrumd& spec);

/// sup of ||v(s)|| over [a, b]. ||v||^2 is a positive sum of exponentials, hence
/// convex, so the sup sits at an endpoint.
double interval_sup_norm(const ModalSolution& sol, double a, double b);

/// Smallest |lambda_k| over all degrees: min(1, 2/n).
double spectral_gap(int n);

struct LemmaAlpha {
  bool growth_ok = true;
  bool decay_ok = true;
  double alpha = 1;
  /// sup ratios [K,2K] / [0,K]; 0 when the part is empty.
  double growth_ratio = 0, decay_ratio = 0;
};

/// alpha = e^{gap * K}.
LemmaAlpha check_lemma_alpha(const ModalSolution& sol, double K);

struct LemmaBeta {
  /// nullopt when the premise does not hold (vacuous implication).
  std::optional<bool> impl_forward;
  std::optional<bool> impl_backward;
  /// growth conclusion on [2K,3K] vs [K,2K], decay conclusion on [K,2K] vs [0,K]
  bool growth_conclusion = false;
  bool decay_conclusion = false;
  bool at_least_one = false;
};

LemmaBeta check_lemma_beta(const ModalSolution& sol, double K, double beta);

/// Largest beta for which the disjunction holds on the worst two-mode solution
/// (slowest growing and slowest decaying degree), shrunk by `safety` in log scale.
double mixed_beta(int n, double K, double safety = 0.9);

/// Random zonal data up to `max_degree`: each mode present with probability 0.4,
/// random sign, magnitude 10^{-4u}.
ModalSolution random_modal_solution(std::mt19937_64& rng, int n, int max_degree = 10);

struct SweepResult {
  int cases = 0;
  int alpha_failures = 0;
  /// at_least_one of lemma beta with mixed_beta(n, K).
  int beta_failures = 0;
  /// Decay conclusion with beta = e^{2K/n} on the decaying part alone.
  int pure_decay_failures = 0;
};

/// n cycles through 1, 2, 3; K uniform in [0.1, 3].
SweepResult lemma_sweep(std::uint64_t seed, int cases);

}  // namespace mcflab
