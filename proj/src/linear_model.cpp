#include "mcflab/linear_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mcflab {

namespace {

// comparisons between sup norms allow for rounding in the exponentials
constexpr double kRel = 1e-12;

bool is_zero(const ZonalSpectrumd& s) { return s.size() == 0 || s.coeffs.cwiseAbs().maxCoeff() == 0; }

}  // namespace

ZonalSpectrumd evolve_linear(const ZonalSpectrumd& initial, double s) {
  ZonalSpectrumd out = initial;
  for (int i = 0; i < out.size(); ++i) out.coeffs[i] *= std::exp(operator_eigenvalue(out.n, mode_degree(out.n, i)) * s);
  return out;
}

ZonalSpectrumd ModalSolution::at(double s) const { return evolve_linear(initial, s); }

double ModalSolution::norm(double s) const { return at(s).norm(); }

std::pair<ZonalSpectrumd, ZonalSpectrumd> split_modes(const ZonalSpectrumd& spec) {
  ZonalSpectrumd up = spec, down = spec;
  for (int i = 0; i < spec.size(); ++i) {
    if (operator_eigenvalue(spec.n, mode_degree(spec.n, i)) > 0)
      down.coeffs[i] = 0;
    else
      up.coeffs[i] = 0;
  }
  return {up, down};
}

double interval_sup_norm(const ModalSolution& sol, double a, double b) {
  if (!(a < b)) throw Error(ErrorKind::InvalidArgument, "interval_sup_norm needs a < b");
  return std::max(sol.norm(a), sol.norm(b));
}

double spectral_gap(int n) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "spectral_gap needs n >= 1");
  return std::min(1.0, 2.0 / n);
}

LemmaAlpha check_lemma_alpha(const ModalSolution& sol, double K) {
  if (!(K > 0)) throw Error(ErrorKind::InvalidArgument, "check_lemma_alpha needs K > 0");
  LemmaAlpha out;
  out.alpha = std::exp(spectral_gap(sol.dimension()) * K);
  const auto [up, down] = split_modes(sol.initial);
  if (!is_zero(up)) {
    const ModalSolution u{up};
    out.growth_ratio = interval_sup_norm(u, K, 2 * K) / interval_sup_norm(u, 0, K);
    out.growth_ok = out.growth_ratio >= out.alpha * (1 - kRel);
  }
  if (!is_zero(down)) {
    const ModalSolution d{down};
    out.decay_ratio = interval_sup_norm(d, K, 2 * K) / interval_sup_norm(d, 0, K);
    out.decay_ok = out.decay_ratio <= (1 + kRel) / out.alpha;
  }
  return out;
}

LemmaBeta check_lemma_beta(const ModalSolution& sol, double K, double beta) {
  if (!(K > 0)) throw Error(ErrorKind::InvalidArgument, "check_lemma_beta needs K > 0");
  if (!(beta > 1)) throw Error(ErrorKind::InvalidArgument, "check_lemma_beta needs beta > 1");
  const double s1 = interval_sup_norm(sol, 0, K);
  const double s2 = interval_sup_norm(sol, K, 2 * K);
  const double s3 = interval_sup_norm(sol, 2 * K, 3 * K);
  LemmaBeta out;
  out.growth_conclusion = s3 >= beta * s2 * (1 - kRel);
  out.decay_conclusion = s2 <= s1 / beta * (1 + kRel);
  if (s2 >= beta * s1 * (1 - kRel)) out.impl_forward = out.growth_conclusion;
  if (s3 <= s2 / beta * (1 + kRel)) out.impl_backward = out.decay_conclusion;
  out.at_least_one = out.growth_conclusion || out.decay_conclusion;
  return out;
}

double mixed_beta(int n, double K, double safety) {
  if (!(K > 0)) throw Error(ErrorKind::InvalidArgument, "mixed_beta needs K > 0");
  // ln ||v|| for rates +u and -d with its minimum at m
  const double u = 1, d = 2.0 / n;
  const auto g = [&](double s, double m) {
    const double x = s - m;
    return 0.5 * std::log(d * std::exp(2 * u * x) + u * std::exp(-2 * d * x));
  };
  double worst = std::numeric_limits<double>::infinity();
  const int samples = 4000;
  for (int i = 0; i <= samples; ++i) {
    const double m = -2 * K + 7 * K * i / samples;
    const double l1 = std::max(g(0, m), g(K, m));
    const double l2 = std::max(g(K, m), g(2 * K, m));
    const double l3 = std::max(g(2 * K, m), g(3 * K, m));
    worst = std::min(worst, std::max(l3 - l2, l1 - l2));
  }
  return std::exp(safety * worst);
}

ModalSolution random_modal_solution(std::mt19937_64& rng, int n, int max_degree) {
  std::uniform_real_distribution<double> u(0, 1);
  ZonalSpectrumd s{n, Eigen::VectorXd::Zero(modes_for_degree(n, max_degree))};
  for (int i = 0; i < s.size(); ++i)
    if (u(rng) < 0.4) s.coeffs[i] = (u(rng) < 0.5 ? -1 : 1) * std::pow(10.0, -4 * u(rng));
  if (s.coeffs.cwiseAbs().maxCoeff() == 0) s.coeffs[mode_index(n, 2)] = 1;
  return {s};
}

SweepResult lemma_sweep(std::uint64_t seed, int cases) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uk(0.1, 3.0);
  SweepResult r;
  r.cases = cases;
  for (int trial = 0; trial < cases; ++trial) {
    const int n = 1 + trial % 3;
    const double K = uk(rng);
    const auto sol = random_modal_solution(rng, n);
    const auto a = check_lemma_alpha(sol, K);
    if (!a.growth_ok || !a.decay_ok) ++r.alpha_failures;
    if (!check_lemma_beta(sol, K, mixed_beta(n, K)).at_least_one) ++r.beta_failures;
    const auto down = split_modes(sol.initial).second;
    if (down.norm() > 0 && !check_lemma_beta({down}, K, std::exp(2 * K / n)).decay_conclusion) ++r.pure_decay_failures;
  }
  return r;
}

}  // namespace mcflab
