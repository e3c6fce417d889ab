// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "mcflab/experiment.hpp"
#include "mcflab/spectral_sphere.hpp"

using namespace mcflab;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  std::string failed;

  void need(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failed += " [failed: " + what + "]";
    }
  }
};

RunControl quiet() {
  RunControl c;
  c.write_files = false;
  return c;
}

ExperimentConfig with(ExperimentConfig c, const std::vector<std::string>& overrides) {
  auto j = to_json(c);
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

// Cached runs keyed by a label; every criterion reads from the same flows.
std::map<std::string, RunReport> cache;

const RunReport& run(const std::string& key, const ExperimentConfig& cfg) {
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, run_experiment(cfg, quiet())).first;
  return it->second;
}

const char* rate_name(int n) { return n == 1 ? "rate-2n-n1" : n == 2 ? "rate-2n" : "rate-2n-n3"; }

// Degree-2 run with every rescaled probe on; arrival only where the Hessian is judged.
const RunReport& y2(int n, double amp, double h_fraction = 0) {
  std::ostringstream key;
  key << "y2/" << n << "/" << amp << "/" << h_fraction;
  std::vector<std::string> o{"probes.huisken=true", "probes.z=true", "probes.alpha=true",
                             "initial.amplitude=" + std::to_string(amp), "assertions=[]"};
  if (n >= 2) {
    o.insert(o.end(), {"probes.arrival=true", "probes.c3=true", "probes.hessian_h_fraction=" + std::to_string(h_fraction)});
  }
  return run(key.str(), with(preset(rate_name(n)), o));
}

double metric(const RunReport& r, const std::string& name) {
  auto it = r.metrics.find(name);
  return it == r.metrics.end() ? std::nan("") : it->second.value;
}

double r2(const RunReport& r, const std::string& name) {
  auto it = r.metrics.find(name);
  return it == r.metrics.end() ? std::nan("") : it->second.r_squared;
}

bool within(double v, double target, double rel) { return std::abs(v - target) <= rel * std::abs(target); }

Verdict c1_spectrum() {
  Verdict v;
  double worst = 0;
  for (int n : {1, 2, 3, 5, 10}) {
    v.need(operator_eigenvalue(n, 0) == 2.0 && operator_eigenvalue(n, 1) == 1.0, "lambda_0, lambda_1");
    v.need(operator_eigenvalue(n, 2) == -2.0 / n, "lambda_2 = -2/n");
    const auto g = build_grid<double>(n, 32);
    const double R = std::sqrt(double(n));
    for (int k = 0; k <= g.k_max() / 2; ++k) {
      for (Parity p : {Parity::Cosine, Parity::Sine}) {
        if ((n != 1 || k == 0) && p == Parity::Sine) continue;
        Eigen::VectorXd y(g.size());
        for (int j = 0; j < g.size(); ++j) y[j] = zonal_harmonic(n, k, g.nodes()[j], p);
        const double lambda = -double(k) * (k + n - 1) / n;
        worst = std::max(worst, (laplace_beltrami(g, y, R) - lambda * y).cwiseAbs().maxCoeff());
      }
    }
  }
  v.need(worst < 1e-8, "eigencheck 1e-8");
  v.detail << " lambda_{0,1,2} = 2, 1, -2/n for n in {1,2,3,5,10}; eigencheck max residual " << worst;
  return v;
}

Verdict c2_sphere() {
  Verdict v;
  for (int n : {1, 2, 3}) {
    const auto& r = run("sphere/" + std::to_string(n), with(preset("sphere-exact"), {"n=" + std::to_string(n)}));
    v.need(r.pass, "sphere-exact n=" + std::to_string(n));
    v.detail << " n=" << n << ": T rel " << metric(r, "T_rel_error") << ", r(t) rel " << metric(r, "sphere_law_max_rel")
             << ", r^2(t) rel " << metric(r, "sphere_law_r2_max_rel")
             << ", u err " << metric(r, "arrival_sphere_max_err") << ";";
  }
  return v;
}

Verdict c3_rates() {
  Verdict v;
  for (int n : {1, 2, 3}) {
    const auto& r = y2(n, 0.01);
    const double b = -2.0 / n, a2 = metric(r, "slope_a2"), w = metric(r, "slope_w_norm");
    v.need(within(a2, b, 0.05) && within(w, b, 0.05), "n=" + std::to_string(n));
    v.detail << " n=" << n << ": a_2 " << a2 << ", ||w|| " << w << " (target " << b << ");";
  }
  return v;
}

Verdict c4_higher() {
  Verdict v;
  for (int n : {2, 3}) {
    const auto& r = run("y3/" + std::to_string(n), preset(n == 2 ? "rate-higher" : "rate-higher-n3"));
    const double b = -(1 + 6.0 / n), a3 = metric(r, "slope_a3");
    v.need(within(a3, b, 0.05), "n=" + std::to_string(n));
    v.detail << " n=" << n << ": a_3 " << a3 << " (target " << b << ");";
  }
  return v;
}

Verdict c5_monitors() {
  Verdict v;
  for (int n : {1, 2, 3}) {
    const auto& r = y2(n, 0.01);
    const double bound = -2.0 / n * 0.95;
    v.detail << " n=" << n << ":";
    for (const char* m : {"slope_osc_H", "slope_pinching", "slope_grad_H"}) {
      // a curve has one principal curvature; pinching is identically zero
      if (n == 1 && std::string(m) == "slope_pinching") continue;
      const double s = metric(r, m), q = r2(r, m);
      v.need(s <= bound && q > 0.99, std::string(m) + " n=" + std::to_string(n));
      v.detail << " " << (m + 6) << " " << s << " (r2 " << q << ")";
    }
    v.detail << ";";
  }
  return v;
}

Verdict c6_hessian() {
  Verdict v;
  for (int n : {2, 3}) {
    const auto& r = y2(n, 0.01);
    const double dev = metric(r, "hessian_max_rel_dev");
    v.need(dev < 0.02, "-1/n within 2% n=" + std::to_string(n));
    const double h = 0.005;
    const double s1 = metric(y2(n, 0.01, h), "hessian_spread_raw"), s2 = metric(y2(n, 0.005, h), "hessian_spread_raw");
    v.need(within(s1 / s2, 2, 0.05), "spread halves n=" + std::to_string(n));
    v.detail << " n=" << n << ": max rel dev " << dev << ", spread ratio " << s1 / s2 << ";";
  }
  return v;
}

Verdict c7_non_c3() {
  Verdict v;
  for (int n : {2, 3}) {
    const auto& r = y2(n, 0.01);
    const double p = metric(r, "p_median"), snr = metric(r, "c3_min_snr"), corr = metric(r, "profile_corr_abs");
    const int rays = r.regularity ? int(r.regularity->entries.size()) : 0;
    v.need(r.regularity && r.regularity->p_count == rays, "every ray fitted n=" + std::to_string(n));
    v.need(within(p, 2 + 2.0 / n, 0.05) && snr > 10 && corr > 0.99, "n=" + std::to_string(n));
    v.detail << " n=" << n << ": p " << p << " (target " << 2 + 2.0 / n << "), min SNR " << snr << ", |corr| " << corr << ";";
  }
  return v;
}

Verdict c8_corollary() {
  Verdict v;
  const auto& r = run("corollary", preset("corollary-c3"));
  v.need(r.corollary.has_value(), "corollary report");
  if (!r.corollary) return v;
  const auto& c = *r.corollary;
  v.need(c.c3_compatible && !c.low_order_detected, "no rho^3 term");
  v.need(c.noise_floor || within(c.p, 6, 0.05), "p ~ 6 or noise floor");
  v.detail << " " << (c.noise_floor ? "NoiseFloor" : "p " + std::to_string(c.p)) << ", rho^3 SNR " << c.c3_max_snr
           << ", tuned psi " << metric(r, "cancel_psi") << ": " << c.verdict;
  return v;
}

Verdict c9_lemmas() {
  Verdict v;
  const auto& r = run("lemma", preset("lemma-sweep"));
  v.need(r.pass, "sweep");
  v.detail << " cases " << metric(r, "lemma_cases") << ", alpha failures " << metric(r, "lemma_alpha_failures")
           << ", beta failures " << metric(r, "lemma_beta_failures");
  return v;
}

Verdict c10_linearization() {
  Verdict v;
  const auto& r = run("lin", preset("linearization"));
  const double order = metric(r, "linearization_order");
  v.need(order >= 0.9, "order >= 0.9");
  v.detail << " observed order " << order;
  return v;
}

Verdict c11_z() {
  Verdict v;
  const double sphere = metric(run("sphere/2", with(preset("sphere-exact"), {"n=2"})), "max_Z_dev");
  v.need(sphere < 1e-9, "sphere Z");
  v.detail << " sphere max|Z+1/n| " << sphere << ";";
  for (int n : {1, 2, 3}) {
    const auto &a = y2(n, 0.01), &b = y2(n, 0.005);
    const double slope = metric(a, "slope_Z"), ratio = metric(a, "Z_dev_prefactor") / metric(b, "Z_dev_prefactor");
    v.need(slope < 0, "Z slope n=" + std::to_string(n));
    v.need(within(ratio, 2, 0.05), "Z linear in amplitude n=" + std::to_string(n));
    v.detail << " n=" << n << ": slope " << slope << ", amplitude ratio " << ratio << ";";
  }
  return v;
}

Verdict c12_alpha() {
  Verdict v;
  double worst = 0;
  for (int n : {1, 2, 3})
    for (double amp : {0.02, 0.01, 0.005}) {
      const double ratio = metric(y2(n, amp), "alpha_ratio");
      v.need(std::isfinite(ratio) && ratio != 0 && within(ratio, 1, 0.1), "n=" + std::to_string(n));
      worst = std::max(worst, std::abs(ratio - 1));
    }
  v.detail << " alpha / initial amplitude within " << worst << " of 1 over n in {1,2,3}, amplitude in {0.02,0.01,0.005} sqrt(n)";
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"1 spectrum", c1_spectrum},
      {"2 exact shrinking sphere", c2_sphere},
      {"3 rate 2/n and optimality", c3_rates},
      {"4 higher-mode rates", c4_higher},
      {"5 curvature monitors", c5_monitors},
      {"6 Hessian of arrival time", c6_hessian},
      {"7 arrival time not C3", c7_non_c3},
      {"8 C3 when the slow mode is absent", c8_corollary},
      {"9 linear-model lemmas", c9_lemmas},
      {"10 linearization validity", c10_linearization},
      {"11 Z identity", c11_z},
      {"12 alpha nonzero", c12_alpha},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " error: " << e.what();
    }
    failures += !v.pass;
    std::printf("%s  criterion %s:%s\n", v.pass ? "PASS" : "FAIL", name, (v.detail.str() + v.failed).c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria pass\n", int(criteria.size()) - failures, criteria.size());
  return failures;
}
