#include "mcflab/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

#include "mcflab/diagnostics.hpp"
#include "mcflab/linear_model.hpp"
#include "mcflab/snapshot.hpp"

namespace mcflab {

using nlohmann::json;
using Eigen::VectorXd;

namespace {

Error config_error(const std::string& path, const std::string& what) { return Error(ErrorKind::Config, path + ": " + what); }

// Reads the keys of one JSON object, remembering which were used.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw config_error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  void get(const std::string& key, bool& out) {
    if (auto* v = find(key)) {
      if (!v->is_boolean()) throw config_error(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, int& out) {
    if (auto* v = find(key)) {
      if (!v->is_number_integer()) throw config_error(at(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, long& out) {
    if (auto* v = find(key)) {
      if (!v->is_number_integer()) throw config_error(at(key), "expected an integer");
      out = v->get<long>();
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (auto* v = find(key)) {
      if (!v->is_number_unsigned()) throw config_error(at(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, double& out) {
    if (auto* v = find(key)) {
      if (!v->is_number()) throw config_error(at(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, std::optional<double>& out) {
    if (auto* v = find(key)) {
      if (!v->is_number()) throw config_error(at(key), "expected a number or null");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (auto* v = find(key)) {
      if (!v->is_string()) throw config_error(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  template <typename T>
  void get(const std::string& key, std::vector<T>& out) {
    if (auto* v = find(key)) {
      if (!v->is_array()) throw config_error(at(key), "expected an array");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const auto& e = (*v)[i];
        if constexpr (std::is_integral_v<T>) {
          if (!e.is_number_integer()) throw config_error(at(key) + "[" + std::to_string(i) + "]", "expected an integer");
        } else {
          if (!e.is_number()) throw config_error(at(key) + "[" + std::to_string(i) + "]", "expected a number");
        }
        out.push_back(e.get<T>());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw config_error(at(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json integrator_json(const IntegratorConfig& c) {
  return {{"dt_safety", c.dt_safety},
          {"tol", c.tol},
          {"max_steps", c.max_steps},
          {"dealias", c.dealias},
          {"snapshot_interval", c.snapshot_interval},
          {"gauge_interval", c.gauge_interval},
          {"gauges", c.gauges},
          {"floor_fraction", c.floor_fraction},
          {"snapshot_every", c.snapshot_every},
          {"record_steps", c.record_steps}};
}

// ---------------------------------------------------------------- output

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : cols_(header.size()) { row_strings(header); }
  void row(const std::vector<double>& values) {
    std::vector<std::string> s;
    s.reserve(values.size());
    for (double v : values) s.push_back(std::isfinite(v) ? fmt(v) : std::string());
    row_strings(s);
  }
  const std::string& str() const { return out_; }

 private:
  void row_strings(const std::vector<std::string>& cells) {
    if (cells.size() != cols_) throw Error(ErrorKind::InvalidArgument, "csv: row width differs from header");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ += ',';
      out_ += cells[i];
    }
    out_ += "\r\n";
  }
  std::size_t cols_;
  std::string out_;
};

json metric_json(const Metric& m) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"value", num(m.value)}, {"s0", num(m.s0)}, {"s1", num(m.s1)}, {"r_squared", num(m.r_squared)},
          {"n_points", m.n_points}};
}

Metric fit_metric(const RateFit& f) {
  Metric m;
  m.value = f.slope;
  m.s0 = f.s0;
  m.s1 = f.s1;
  m.r_squared = f.r_squared;
  m.n_points = f.n_points;
  return m;
}

Metric plain(double v) {
  Metric m;
  m.value = v;
  return m;
}

// ---------------------------------------------------------------- runs

RadialGraphd rescaled_initial(const ExperimentConfig& cfg, GridPtr<double> grid) {
  const int n = cfg.n;
  const double rn = std::sqrt(double(n));
  ZonalSpectrumd sp{n, VectorXd::Zero(modes_for_degree(n, cfg.initial.degree))};
  if (cfg.initial.kind == "perturbed") sp.coeffs[mode_index(n, cfg.initial.degree)] = cfg.initial.amplitude * rn;
  return perturbed_sphere(grid, rn, sp);
}

struct Context {
  const ExperimentConfig& cfg;
  RunReport& rep;
  std::string dir;

  void metric(const std::string& name, const Metric& m) { rep.metrics[name] = m; }
  void warn(const std::string& what) { rep.warnings.push_back(what); }
  void emit(const std::string& file, const std::string& bytes, bool write) {
    if (!write) return;
    const std::string path = (std::filesystem::path(dir) / file).string();
    write_file_atomic(path, bytes);
    rep.files.push_back(path);
  }
};

// Runs a fit and files it, or records why it could not be made.
template <typename F>
void try_fit(Context& ctx, const std::string& name, F&& fit) {
  try {
    ctx.metric(name, fit_metric(fit()));
  } catch (const Error& e) {
    ctx.warn(name + ": " + e.what());
  }
}

FitWindow window_for(const ExperimentConfig& cfg, const ModalTrace& mt) {
  FitWindow w = (cfg.probes.window_s0 && cfg.probes.window_s1) ? FitWindow{0, 0} : default_window(mt);
  if (cfg.probes.window_s0) w.s0 = *cfg.probes.window_s0;
  if (cfg.probes.window_s1) w.s1 = *cfg.probes.window_s1;
  return w;
}

void analyse_rescaled(Context& ctx, const FlowTrace& tr, const RunControl& ctl) {
  const auto& cfg = ctx.cfg;
  const auto& p = cfg.probes;
  const int n = cfg.n;
  const ModalTrace mt = modal_trace(tr);
  ctx.rep.T = tr.final_gauge.T;
  ctx.rep.x_star = tr.final_gauge.x_star;
  ctx.metric("T_rescaled", plain(tr.final_gauge.T));

  std::optional<FitWindow> window;
  try {
    window = window_for(cfg, mt);
  } catch (const Error& e) {
    ctx.warn(std::string("fit window: ") + e.what());
  }

  double w_final = mt.w_max.back();
  ctx.metric("w_max_final", plain(w_final));

  std::vector<std::string> header{"s_or_t", "w_norm", "w_max"};
  const int kcols = std::min(6, tr.snapshots.front().graph.grid->k_max());
  for (int k = 0; k <= kcols; ++k) header.push_back("a_" + std::to_string(k));

  if (p.rates && window) {
    for (int d : p.rate_degrees) try_fit(ctx, "slope_a" + std::to_string(d), [&] { return fit_decay_rate(mt.s, mt.series(d), window->s0, window->s1); });
    try_fit(ctx, "slope_w_norm", [&] { return fit_decay_rate(mt.s, mt.w_norm, window->s0, window->s1); });
    // gauge modes sit at round-off after recentering; a log fit of them is meaningless
    ctx.metric("gauge_modes_final", plain(std::abs(mt.series(0).back()) + mt.degree_norm_series(1).back()));
  }

  if (p.alpha && window) {
    const int d = cfg.initial.degree;
    try {
      const auto a = extract_alpha(mt, n, d, *window);
      Metric m = fit_metric(a.fit);
      m.value = a.alpha;
      ctx.metric("alpha_a" + std::to_string(d), m);
      const double amp = cfg.initial.amplitude * std::sqrt(double(n));
      if (amp != 0) {
        m.value = a.alpha / amp;
        ctx.metric("alpha_ratio", m);
      }
    } catch (const Error& e) {
      ctx.warn(std::string("alpha: ") + e.what());
    }
  }

  std::optional<HuiskenMonitors> mon;
  if (p.huisken || p.z) {
    mon = huisken_monitors(tr);
    header.insert(header.end(), {"osc_H", "pinching_max", "grad_H_max", "grad_A_max", "Z_dev"});
    auto mx = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
    if (p.huisken) {
      ctx.metric("max_osc_H", plain(mx(mon->oscillation_H)));
      ctx.metric("max_pinching", plain(mx(mon->pinching_max)));
      ctx.metric("max_grad_H", plain(mx(mon->grad_H_max)));
      if (window && mx(mon->oscillation_H) > 1e-12) {
        try_fit(ctx, "slope_osc_H", [&] { return fit_decay_rate(mon->s, mon->oscillation_H, window->s0, window->s1); });
        try_fit(ctx, "slope_grad_H", [&] { return fit_decay_rate(mon->s, mon->grad_H_max, window->s0, window->s1); });
        // curves have no pinching
        if (n >= 2) try_fit(ctx, "slope_pinching", [&] { return fit_decay_rate(mon->s, mon->pinching_max, window->s0, window->s1); });
      }
    }
    if (p.z) {
      ctx.metric("max_Z_dev", plain(mx(mon->Z_deviation)));
      ctx.metric("Z_dev_initial", plain(mon->Z_deviation.front()));
      if (window && mx(mon->Z_deviation) > 1e-12) {
        try {
          const auto f = fit_decay_rate(mon->s, mon->Z_deviation, window->s0, window->s1);
          ctx.metric("slope_Z", fit_metric(f));
          // prefactor of the exponential tail; linear in the amplitude once the quadratic part has died
          Metric m = fit_metric(f);
          m.value = std::exp(f.intercept);
          ctx.metric("Z_dev_prefactor", m);
        } catch (const Error& e) {
          ctx.warn(std::string("slope_Z: ") + e.what());
        }
      }
    }
  }

  Csv series(header);
  for (std::size_t i = 0; i < mt.s.size(); ++i) {
    std::vector<double> row{mt.s[i], mt.w_norm[i], mt.w_max[i]};
    for (int k = 0; k <= kcols; ++k) row.push_back(mt.spectra[i].amplitude(k));
    if (mon) {
      row.insert(row.end(), {mon->oscillation_H[i], mon->pinching_max[i], mon->grad_H_max[i], mon->grad_A_max[i],
                             mon->Z_deviation[i]});
    }
    series.row(row);
  }
  ctx.emit("series.csv", series.str(), ctl.write_files);
}

void analyse_arrival(Context& ctx, const FlowTrace& tr, double T, const VectorXd& x_star, const RunControl& ctl) {
  const auto& cfg = ctx.cfg;
  const auto& p = cfg.probes;
  const int n = cfg.n;
  ArrivalOptions opts;
  opts.directions = p.directions;
  const ArrivalField f = reconstruct_arrival(tr, T, x_star, opts);

  // the exact sphere has u = T - rho^2/(2n)
  if (cfg.initial.kind == "sphere") {
    double err = 0;
    for (int j = 0; j < int(f.rays.size()); ++j)
      for (double rho = f.rho_min() * 1.0001; rho < f.rays[j].rho.front(); rho *= 1.1)
        err = std::max(err, std::abs(f.u_at(j, rho) - (T - rho * rho / (2 * n))));
    ctx.metric("arrival_sphere_max_err", plain(err));
  }

  try {
    const double h = p.hessian_h_fraction > 0 ? p.hessian_h_fraction * f.initial_radius : 0.0;
    const auto H = hessian_at_center(f, h);
    double dev = 0, dev_ex = 0;
    for (std::size_t j = 0; j < H.raw.size(); ++j) {
      dev = std::max(dev, std::abs(H.raw[j] * n + 1));
      dev_ex = std::max(dev_ex, std::abs(H.extrapolated[j] * n + 1));
    }
    ctx.metric("hessian_max_rel_dev", plain(dev));
    ctx.metric("hessian_extrap_max_rel_dev", plain(dev_ex));
    ctx.metric("hessian_spread_raw", plain(H.spread_raw));
    ctx.metric("hessian_h", plain(H.h));
    ctx.rep.hessian = H;
  } catch (const Error& e) {
    ctx.warn(std::string("hessian: ") + e.what());
  }

  if (p.c3) {
    double alpha = 0;
    if (auto it = ctx.rep.metrics.find("alpha_a2"); it != ctx.rep.metrics.end()) alpha = it->second.value;
    const auto R = regularity_report(f, cfg.initial.degree, alpha, p.rho_fraction);
    ctx.rep.regularity = R;
    ctx.metric("p_count", plain(R.p_count));
    if (R.p_count > 0) {
      ctx.metric("p_median", plain(R.p_median));
      ctx.metric("profile_corr_abs", plain(std::abs(R.profile_correlation)));
      double snr = std::numeric_limits<double>::infinity();
      for (const auto& e : R.entries) snr = std::min(snr, e.max_snr);
      ctx.metric("c3_min_snr", plain(snr));
      if (R.c_over_alpha_expected != 0) ctx.metric("c_over_alpha_ratio", plain(R.c_over_alpha / R.c_over_alpha_expected));
    }
  }
  if (p.corollary) {
    const auto C = corollary_check(f, cfg.initial.degree, n, p.rho_fraction);
    ctx.rep.corollary = C;
    ctx.metric("corollary_compatible", plain(C.c3_compatible ? 1 : 0));
    ctx.metric("corollary_noise_floor", plain(C.noise_floor ? 1 : 0));
    ctx.metric("corollary_c3_snr", plain(C.c3_max_snr));
    ctx.metric("corollary_boundary", plain(C.boundary ? 1 : 0));
    if (!C.noise_floor) ctx.metric("corollary_p", plain(C.p));
  }

  Csv csv({"s_or_t", "ray", "angle", "rho", "tau", "residual", "noise"});
  for (std::size_t j = 0; j < f.rays.size(); ++j) {
    const auto& r = f.rays[j];
    for (std::size_t k = 0; k < r.rho.size(); ++k)
      csv.row({tr.snapshots[k].time, double(j), r.angle, r.rho[k], r.tau[k], r.residual[k], r.noise[k]});
  }
  ctx.emit("arrival.csv", csv.str(), ctl.write_files);
}

void run_linearization(Context& ctx, const RunControl& ctl) {
  const auto& cfg = ctx.cfg;
  const int n = cfg.n;
  auto grid = make_grid<double>(n, cfg.N);
  IntegratorConfig ic = cfg.integrator;
  ic.gauges = false;
  std::vector<double> errs;
  Csv csv({"s_or_t", "amplitude", "rel_error"});
  for (double eps : cfg.probes.linearization_amplitudes) {
    ExperimentConfig c = cfg;
    c.initial.amplitude = eps;
    c.initial.kind = "perturbed";
    const auto tr = run_rescaled(rescaled_initial(c, grid), cfg.probes.linearization_s_max, ic);
    const ZonalSpectrumd w0 = perturbation_w(tr.snapshots.front().graph);
    double worst = 0;
    for (const auto& snap : tr.snapshots) {
      const auto lin = evolve_linear(w0, snap.time);
      const auto w = perturbation_w(snap.graph);
      const double e = (w.coeffs - lin.coeffs).norm() / lin.coeffs.norm();
      worst = std::max(worst, e);
      csv.row({snap.time, eps, e});
    }
    errs.push_back(worst);
    ctx.metric("linearization_error_" + fmt(eps), plain(worst));
  }
  double order = std::numeric_limits<double>::infinity();
  const auto& a = cfg.probes.linearization_amplitudes;
  for (std::size_t i = 0; i + 1 < errs.size(); ++i) order = std::min(order, std::log(errs[i] / errs[i + 1]) / std::log(a[i] / a[i + 1]));
  if (errs.size() >= 2) ctx.metric("linearization_order", plain(order));
  ctx.emit("linearization.csv", csv.str(), ctl.write_files);
}

void run_mcf(Context& ctx, const RunControl& ctl) {
  const auto& cfg = ctx.cfg;
  const int n = cfg.n;
  auto grid = make_grid<double>(n, cfg.N);
  const double R = cfg.initial.radius > 0 ? cfg.initial.radius : std::sqrt(2.0 * n);
  RadialGraphd g = rescaled_initial(cfg, grid);
  g.r *= R / std::sqrt(double(n));
  const auto run = run_to_singularity(g, cfg.integrator);
  ctx.rep.accepted_steps += run.trace.accepted_steps;
  ctx.rep.rejected_steps += run.trace.rejected_steps;
  Metric mt = plain(run.T);
  mt.n_points = run.fit_points;
  ctx.metric("T_mcf", mt);
  ctx.metric("T_mcf_spread", plain(run.T_spread));
  ctx.metric("x_star_norm", plain(run.x_star.norm()));
  if (!ctx.rep.T) {
    ctx.rep.T = run.T;
    ctx.rep.x_star = run.x_star;
  }
  if (cfg.initial.kind == "sphere") {
    const double T = R * R / (2 * n);
    ctx.metric("T_rel_error", plain(std::abs(run.T - T) / T));
    // r itself only while r >= r0/100: near T a fixed error in r^2 becomes a large relative error in r
    double law = 0, law2 = 0;
    for (const auto& s : run.trace.snapshots) {
      const double exact2 = R * R - 2 * n * s.time;
      law2 = std::max(law2, (s.graph.r.array().square() - exact2).abs().maxCoeff() / (R * R));
      if (exact2 < 1e-4 * R * R) continue;
      const double exact = std::sqrt(exact2);
      law = std::max(law, (s.graph.r.array() - exact).abs().maxCoeff() / exact);
    }
    ctx.metric("sphere_law_max_rel", plain(law));
    ctx.metric("sphere_law_r2_max_rel", plain(law2));
  }
  if (auto it = ctx.rep.metrics.find("T_rescaled"); it != ctx.rep.metrics.end())
    ctx.metric("T_frame_rel_diff", plain(std::abs(run.T - it->second.value) / run.T));

  Csv csv({"s_or_t", "area_radius", "r_min", "r_max", "center_0"});
  for (const auto& s : run.trace.snapshots)
    csv.row({s.time, area_radius(s.graph), s.graph.r.minCoeff(), s.graph.r.maxCoeff(), s.graph.center[0]});
  ctx.emit("mcf.csv", csv.str(), ctl.write_files);

  if (cfg.probes.arrival && !cfg.uses_rescaled()) analyse_arrival(ctx, run.trace, run.T, run.x_star, ctl);
}

void evaluate_assertions(RunReport& rep) {
  rep.pass = rep.status == "complete";
  for (const auto& a : rep.config.assertions) {
    AssertionResult r;
    r.assertion = a;
    auto it = rep.metrics.find(a.metric);
    if (it == rep.metrics.end() || !std::isfinite(it->second.value)) {
      r.pass = false;
      r.detail = "metric not computed";
    } else {
      const double v = it->second.value;
      r.observed = v;
      if (a.op == "approx")
        r.pass = std::abs(v - a.value) <= a.tol * std::abs(a.value);
      else if (a.op == "abs")
        r.pass = std::abs(v - a.value) <= a.tol;
      else if (a.op == "lt")
        r.pass = v < a.value;
      else if (a.op == "le")
        r.pass = v <= a.value;
      else if (a.op == "gt")
        r.pass = v > a.value;
      else if (a.op == "ge")
        r.pass = v >= a.value;
      std::ostringstream d;
      d.precision(10);
      d << a.metric << " = " << v << " " << a.op << " " << a.value;
      if (a.op == "approx" || a.op == "abs") d << " (tol " << a.tol << ")";
      r.detail = d.str();
    }
    rep.pass = rep.pass && r.pass;
    rep.assertions.push_back(r);
  }
}

std::string checkpoint_path(const std::string& dir) { return (std::filesystem::path(dir) / "checkpoint.bin").string(); }

RunReport execute(const ExperimentConfig& cfg, const RunControl& ctl, std::optional<Checkpoint> resume_from,
                  const std::string& dir = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  RunReport rep;
  rep.config = cfg;
  rep.output_dir = dir.empty() ? resolve_output_dir(cfg) : dir;
  Context ctx{cfg, rep, rep.output_dir};
  // a fresh run must not sit next to files from an older one
  if (ctl.write_files && !resume_from) {
    for (const char* f : {"series.csv", "arrival.csv", "mcf.csv", "linearization.csv", "report.json", "checkpoint.bin", "config.json"}) {
      std::error_code ec;
      std::filesystem::remove(std::filesystem::path(ctx.dir) / f, ec);
    }
  }
  ctx.emit("config.json", to_json(cfg).dump(2) + "\n", ctl.write_files);
  const std::string cfg_text = to_json(cfg).dump();

  try {
    if (cfg.uses_rescaled()) {
      FlowTrace trace;
      if (cfg.initial.cancel_degree > 0) {
        if (std::isfinite(ctl.stop_after) || resume_from)
          throw Error(ErrorKind::Config, "initial.cancel_degree: tuned runs cannot be interrupted or resumed");
        auto tuned = tune_cancellation(cfg.n, cfg.N, cfg.initial.degree, cfg.initial.amplitude * std::sqrt(double(cfg.n)),
                                       cfg.initial.cancel_degree, cfg.s_max, cfg.initial.cancel_s, cfg.integrator);
        ctx.metric("cancel_coefficient", plain(tuned.coefficient));
        ctx.metric("cancel_psi", plain(tuned.psi));
        ctx.metric("cancel_psi_untuned", plain(tuned.psi_untuned));
        trace = tuned.trace;
        tuned.trace = FlowTrace{};
        rep.tuning = std::move(tuned);
      } else {
        Checkpoint ck;
        if (resume_from) {
          ck = std::move(*resume_from);
        } else {
          ck.config_json = cfg_text;
          ck.config_hash = crc32_of(cfg_text);
          ck.n = cfg.n;
          ck.N = cfg.N;
          ck.cursor = start_rescaled(rescaled_initial(cfg, make_grid<double>(cfg.n, cfg.N)), cfg.integrator);
        }
        const double tiny = 1e-12 * std::max(1.0, cfg.s_max);
        while (ck.cursor.clock < cfg.s_max - tiny) {
          if (ck.cursor.clock >= ctl.stop_after - tiny) break;
          const double next = std::min({cfg.s_max, ck.cursor.clock + cfg.checkpoint_interval, ctl.stop_after});
          advance_rescaled(ck.cursor, next, cfg.integrator, ck.raw);
          if (ctl.write_files) save_checkpoint(checkpoint_path(ctx.dir), ck);
        }
        if (ctl.write_files) rep.files.push_back(checkpoint_path(ctx.dir));
        if (ck.cursor.clock < cfg.s_max - tiny) rep.status = "interrupted";
        trace = cfg.integrator.gauges ? normalize_gauge(ck.raw) : ck.raw;
      }
      rep.accepted_steps += trace.accepted_steps;
      rep.rejected_steps += trace.rejected_steps;
      if (rep.status == "complete") {
        analyse_rescaled(ctx, trace, ctl);
        if (cfg.probes.arrival) analyse_arrival(ctx, trace, trace.final_gauge.T, trace.final_gauge.x_star, ctl);
      }
    }
    if (rep.status == "complete" && cfg.uses_mcf()) run_mcf(ctx, ctl);
    if (rep.status == "complete" && !cfg.probes.linearization_amplitudes.empty()) run_linearization(ctx, ctl);
    if (rep.status == "complete" && cfg.probes.lemma_sweep_cases > 0) {
      const auto s = lemma_sweep(cfg.seed, cfg.probes.lemma_sweep_cases);
      ctx.metric("lemma_cases", plain(s.cases));
      ctx.metric("lemma_alpha_failures", plain(s.alpha_failures));
      ctx.metric("lemma_beta_failures", plain(s.beta_failures));
      ctx.metric("lemma_pure_decay_failures", plain(s.pure_decay_failures));
    }
  } catch (const Error& e) {
    throw Error(e.kind(), "experiment '" + cfg.name + "': " + e.what());
  }

  evaluate_assertions(rep);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (ctl.write_files) ctx.emit("report.json", to_json(rep).dump(2) + "\n", true);
  return rep;
}

// ---------------------------------------------------------------- presets

Assertion A(std::string metric, std::string op, double value, double tol = 0) { return {std::move(metric), std::move(op), value, tol}; }

ExperimentConfig base(const std::string& name, int n, double s_max) {
  ExperimentConfig c;
  c.name = name;
  c.n = n;
  c.N = n == 1 ? 64 : 32;
  c.s_max = s_max;
  c.integrator.tol = 1e-11;
  c.output_dir = name;
  return c;
}

double y2_horizon(int n) { return n == 1 ? 8 : n == 2 ? 12 : 18; }

ExperimentConfig rate_preset(int n) {
  auto c = base(n == 2 ? "rate-2n" : "rate-2n-n" + std::to_string(n), n, y2_horizon(n));
  c.probes.alpha = true;
  const double b = 2.0 / n;
  c.assertions = {A("slope_a2", "approx", -b, 0.05), A("slope_w_norm", "approx", -b, 0.05), A("alpha_ratio", "approx", 1, 0.1)};
  return c;
}

ExperimentConfig non_c3_preset(int n) {
  auto c = base(n == 2 ? "non-c3" : "non-c3-n" + std::to_string(n), n, y2_horizon(n));
  c.probes.alpha = true;
  c.probes.arrival = true;
  c.probes.c3 = true;
  c.assertions = {A("p_median", "approx", 2 + 2.0 / n, 0.05), A("profile_corr_abs", "gt", 0.99), A("c3_min_snr", "gt", 10),
                  A("hessian_max_rel_dev", "lt", 0.02)};
  return c;
}

ExperimentConfig make_preset(const std::string& name) {
  if (name == "sphere-exact") {
    auto c = base(name, 2, 12);
    c.frame = "both";
    c.initial.kind = "sphere";
    c.initial.amplitude = 0;
    c.integrator.tol = 1e-10;
    c.probes.rates = false;
    c.probes.huisken = true;
    c.probes.z = true;
    c.probes.arrival = true;
    c.assertions = {A("T_rel_error", "lt", 1e-6),        A("sphere_law_max_rel", "lt", 1e-6), A("sphere_law_r2_max_rel", "lt", 1e-6),
                    A("T_frame_rel_diff", "lt", 1e-6),
                    A("max_osc_H", "lt", 1e-9),          A("max_pinching", "lt", 1e-9),       A("max_grad_H", "lt", 1e-9),
                    A("max_Z_dev", "lt", 1e-9),          A("arrival_sphere_max_err", "lt", 1e-8)};
    return c;
  }
  if (name == "rate-2n") return rate_preset(2);
  if (name == "rate-2n-n1") return rate_preset(1);
  if (name == "rate-2n-n3") return rate_preset(3);
  if (name == "rate-higher" || name == "rate-higher-n3") {
    const int n = name == "rate-higher" ? 2 : 3;
    auto c = base(name, n, 6);
    c.initial.degree = 3;
    c.probes.rate_degrees = {3};
    c.probes.alpha = true;
    c.assertions = {A("slope_a3", "approx", -(1 + 6.0 / n), 0.05), A("alpha_ratio", "approx", 1, 0.1)};
    return c;
  }
  if (name == "lemma-sweep") {
    auto c = base(name, 2, 1);
    c.frame = "none";
    c.probes.rates = false;
    c.probes.lemma_sweep_cases = 1000;
    c.seed = 20240601;
    c.assertions = {A("lemma_cases", "abs", 1000, 0), A("lemma_alpha_failures", "abs", 0, 0), A("lemma_beta_failures", "abs", 0, 0),
                    A("lemma_pure_decay_failures", "abs", 0, 0)};
    return c;
  }
  if (name == "huisken-monitors") {
    auto c = base(name, 2, 12);
    c.probes.huisken = true;
    const double b = -2.0 / 2 * 0.95;
    c.assertions = {A("slope_osc_H", "le", b), A("slope_pinching", "le", b), A("slope_grad_H", "le", b)};
    return c;
  }
  if (name == "z-identity") {
    auto c = base(name, 2, 12);
    c.probes.z = true;
    c.assertions = {A("slope_Z", "lt", 0)};
    return c;
  }
  if (name == "non-c3") return non_c3_preset(2);
  if (name == "non-c3-n3") return non_c3_preset(3);
  if (name == "corollary-c3") {
    auto c = base(name, 2, 9);
    c.initial.degree = 3;
    c.initial.cancel_degree = 2;
    c.initial.cancel_s = 4;
    c.integrator.tol = 1e-12;
    c.probes.rate_degrees = {3};
    c.probes.arrival = true;
    c.probes.corollary = true;
    c.assertions = {A("corollary_compatible", "abs", 1, 0), A("corollary_c3_snr", "lt", 10)};
    return c;
  }
  if (name == "optimality") {
    // generic degree-2 data: ||w|| decays at 2/n, not faster
    auto c = base(name, 2, 12);
    c.initial.amplitude = 0.02;
    c.assertions = {A("slope_w_norm", "ge", -1.05), A("slope_w_norm", "le", -0.95)};
    return c;
  }
  if (name == "linearization") {
    auto c = base(name, 2, 2);
    c.frame = "none";
    c.probes.rates = false;
    c.probes.linearization_amplitudes = {0.01, 0.005, 0.0025};
    c.assertions = {A("linearization_order", "ge", 0.9)};
    return c;
  }
  throw Error(ErrorKind::Config, "unknown preset '" + name + "' (see list-presets)");
}

}  // namespace

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  if (name.empty()) throw config_error("name", "must not be empty");
  if (n < 1 || n > 10) throw config_error("n", "must be in 1..10");
  if (N < 8) throw config_error("N", "must be >= 8");
  if (initial.kind != "sphere" && initial.kind != "perturbed") throw config_error("initial.kind", "expected sphere or perturbed");
  if (initial.degree < 2) throw config_error("initial.degree", "must be >= 2");
  const int kmax = n == 1 ? (N - 1) / 2 : N - 1;
  if (initial.degree > dealias_degree(kmax)) throw config_error("initial.degree", "exceeds the dealiased degree of the grid");
  if (!(std::abs(initial.amplitude) <= 0.05)) throw config_error("initial.amplitude", "must satisfy |eps| <= 0.05");
  if (initial.radius < 0) throw config_error("initial.radius", "must be >= 0");
  if (initial.cancel_degree != 0) {
    if (initial.cancel_degree < 2 || initial.cancel_degree == initial.degree)
      throw config_error("initial.cancel_degree", "must be >= 2 and differ from initial.degree");
    if (!(initial.cancel_s + 0.5 < s_max)) throw config_error("initial.cancel_s", "must be at least 0.5 below s_max");
  }
  if (frame != "mcf" && frame != "rescaled" && frame != "both" && frame != "none")
    throw config_error("frame", "expected mcf, rescaled, both or none");
  if (uses_rescaled() && !(s_max > 0)) throw config_error("s_max", "must be positive");
  if (!(checkpoint_interval > 0)) throw config_error("checkpoint_interval", "must be positive");
  try {
    integrator.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  const bool rescaled_only = probes.huisken || probes.z || probes.alpha || probes.c3 || probes.corollary;
  if (rescaled_only && !uses_rescaled())
    throw config_error("probes", "huisken, z, alpha, c3 and corollary need frame rescaled or both");
  if (probes.rates && !uses_rescaled()) throw config_error("probes.rates", "needs frame rescaled or both");
  if (probes.arrival && frame == "none") throw config_error("probes.arrival", "needs a flow run");
  if ((probes.c3 || probes.corollary) && !probes.arrival) throw config_error("probes.arrival", "c3 and corollary need arrival");
  if (probes.corollary && initial.degree < 3) throw config_error("probes.corollary", "needs initial.degree >= 3");
  if (probes.directions < 2 || (n == 1 && probes.directions % 2)) throw config_error("probes.directions", "need an even count >= 2");
  if (probes.hessian_h_fraction < 0) throw config_error("probes.hessian_h_fraction", "must be >= 0");
  if (!(probes.rho_fraction > 0 && probes.rho_fraction <= 1)) throw config_error("probes.rho_fraction", "must be in (0, 1]");
  for (std::size_t i = 0; i < probes.rate_degrees.size(); ++i)
    if (probes.rate_degrees[i] < 0 || probes.rate_degrees[i] > dealias_degree(kmax))
      throw config_error("probes.rate_degrees[" + std::to_string(i) + "]", "degree outside the grid");
  if (probes.window_s0 && probes.window_s1 && !(*probes.window_s1 > *probes.window_s0))
    throw config_error("probes.window_s1", "must exceed window_s0");
  if (probes.lemma_sweep_cases < 0) throw config_error("probes.lemma_sweep_cases", "must be >= 0");
  for (std::size_t i = 0; i < probes.linearization_amplitudes.size(); ++i) {
    const double a = probes.linearization_amplitudes[i];
    if (!(a > 0 && a <= 0.05)) throw config_error("probes.linearization_amplitudes[" + std::to_string(i) + "]", "must be in (0, 0.05]");
  }
  if (!probes.linearization_amplitudes.empty() && !(probes.linearization_s_max > 0))
    throw config_error("probes.linearization_s_max", "must be positive");
  static const std::set<std::string> ops{"approx", "abs", "lt", "le", "gt", "ge"};
  for (std::size_t i = 0; i < assertions.size(); ++i) {
    const std::string at = "assertions[" + std::to_string(i) + "]";
    if (assertions[i].metric.empty()) throw config_error(at + ".metric", "must not be empty");
    if (!ops.count(assertions[i].op)) throw config_error(at + ".op", "expected approx, abs, lt, le, gt or ge");
    if (assertions[i].tol < 0) throw config_error(at + ".tol", "must be >= 0");
  }
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const { return to_json(*this) == to_json(o); }

json to_json(const ExperimentConfig& c) {
  json asserts = json::array();
  for (const auto& a : c.assertions) asserts.push_back({{"metric", a.metric}, {"op", a.op}, {"value", a.value}, {"tol", a.tol}});
  const auto& p = c.probes;
  return {{"name", c.name},
          {"n", c.n},
          {"N", c.N},
          {"initial",
           {{"kind", c.initial.kind},
            {"degree", c.initial.degree},
            {"amplitude", c.initial.amplitude},
            {"radius", c.initial.radius},
            {"cancel_degree", c.initial.cancel_degree},
            {"cancel_s", c.initial.cancel_s}}},
          {"frame", c.frame},
          {"s_max", c.s_max},
          {"integrator", integrator_json(c.integrator)},
          {"probes",
           {{"rates", p.rates},
            {"rate_degrees", p.rate_degrees},
            {"window_s0", optional_json(p.window_s0)},
            {"window_s1", optional_json(p.window_s1)},
            {"huisken", p.huisken},
            {"z", p.z},
            {"alpha", p.alpha},
            {"arrival", p.arrival},
            {"directions", p.directions},
            {"hessian_h_fraction", p.hessian_h_fraction},
            {"rho_fraction", p.rho_fraction},
            {"c3", p.c3},
            {"corollary", p.corollary},
            {"lemma_sweep_cases", p.lemma_sweep_cases},
            {"linearization_amplitudes", p.linearization_amplitudes},
            {"linearization_s_max", p.linearization_s_max}}},
          {"assertions", asserts},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"checkpoint_interval", c.checkpoint_interval}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Fields f(j, "");
  f.get("name", c.name);
  f.get("n", c.n);
  f.get("N", c.N);
  if (auto* v = f.find("initial")) {
    Fields g(*v, "initial");
    g.get("kind", c.initial.kind);
    g.get("degree", c.initial.degree);
    g.get("amplitude", c.initial.amplitude);
    g.get("radius", c.initial.radius);
    g.get("cancel_degree", c.initial.cancel_degree);
    g.get("cancel_s", c.initial.cancel_s);
    g.finish();
  }
  f.get("frame", c.frame);
  f.get("s_max", c.s_max);
  if (auto* v = f.find("integrator")) {
    Fields g(*v, "integrator");
    auto& ic = c.integrator;
    g.get("dt_safety", ic.dt_safety);
    g.get("tol", ic.tol);
    g.get("max_steps", ic.max_steps);
    g.get("dealias", ic.dealias);
    g.get("snapshot_interval", ic.snapshot_interval);
    g.get("gauge_interval", ic.gauge_interval);
    g.get("gauges", ic.gauges);
    g.get("floor_fraction", ic.floor_fraction);
    g.get("snapshot_every", ic.snapshot_every);
    g.get("record_steps", ic.record_steps);
    g.finish();
  }
  if (auto* v = f.find("probes")) {
    Fields g(*v, "probes");
    auto& p = c.probes;
    g.get("rates", p.rates);
    g.get("rate_degrees", p.rate_degrees);
    g.get("window_s0", p.window_s0);
    g.get("window_s1", p.window_s1);
    g.get("huisken", p.huisken);
    g.get("z", p.z);
    g.get("alpha", p.alpha);
    g.get("arrival", p.arrival);
    g.get("directions", p.directions);
    g.get("hessian_h_fraction", p.hessian_h_fraction);
    g.get("rho_fraction", p.rho_fraction);
    g.get("c3", p.c3);
    g.get("corollary", p.corollary);
    g.get("lemma_sweep_cases", p.lemma_sweep_cases);
    g.get("linearization_amplitudes", p.linearization_amplitudes);
    g.get("linearization_s_max", p.linearization_s_max);
    g.finish();
  }
  if (auto* v = f.find("assertions")) {
    if (!v->is_array()) throw config_error("assertions", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      Fields g((*v)[i], "assertions[" + std::to_string(i) + "]");
      Assertion a;
      g.get("metric", a.metric);
      g.get("op", a.op);
      g.get("value", a.value);
      g.get("tol", a.tol);
      g.finish();
      c.assertions.push_back(a);
    }
  }
  f.get("seed", c.seed);
  f.get("output_dir", c.output_dir);
  f.get("checkpoint_interval", c.checkpoint_interval);
  f.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, path + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::Config, "override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::stringstream ss(key);
  std::string part, path;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object()) throw config_error(path.empty() ? "<root>" : path, "is not an object");
    path += (i ? "." : "") + parts[i];
    if (i + 1 == parts.size()) {
      (*node)[parts[i]] = value;
    } else {
      node = &(*node)[parts[i]];
    }
  }
}

// ---------------------------------------------------------------- reports

json to_json(const RunReport& rep) {
  json j;
  j["config"] = to_json(rep.config);
  j["status"] = rep.status;
  j["pass"] = rep.pass;
  json metrics = json::object();
  for (const auto& [k, m] : rep.metrics) metrics[k] = metric_json(m);
  j["metrics"] = metrics;
  json asserts = json::array();
  for (const auto& a : rep.assertions) {
    asserts.push_back({{"metric", a.assertion.metric},
                       {"op", a.assertion.op},
                       {"value", a.assertion.value},
                       {"tol", a.assertion.tol},
                       {"observed", a.observed ? json(*a.observed) : json(nullptr)},
                       {"pass", a.pass},
                       {"detail", a.detail}});
  }
  j["assertions"] = asserts;
  j["warnings"] = rep.warnings;
  j["T"] = rep.T ? json(*rep.T) : json(nullptr);
  j["x_star"] = rep.x_star ? json(std::vector<double>(rep.x_star->data(), rep.x_star->data() + rep.x_star->size())) : json(nullptr);
  if (rep.hessian) {
    const auto& H = *rep.hessian;
    j["hessian"] = {{"h", H.h},
                    {"angles", H.angles},
                    {"raw", H.raw},
                    {"extrapolated", H.extrapolated},
                    {"exponent", H.exponent},
                    {"spread_raw", H.spread_raw},
                    {"spread_extrapolated", H.spread_extrapolated}};
  }
  if (rep.regularity) {
    const auto& R = *rep.regularity;
    json entries = json::array();
    for (const auto& e : R.entries)
      entries.push_back({{"angle", e.angle},
                         {"noise_floor", e.noise_floor},
                         {"p", e.p},
                         {"c", e.c},
                         {"r_squared", e.r_squared},
                         {"n_points", e.n_points},
                         {"rho_lo", e.rho_lo},
                         {"rho_hi", e.rho_hi},
                         {"max_snr", e.max_snr}});
    j["regularity"] = {{"n", R.n},
                       {"degree", R.degree},
                       {"p_median", R.p_median},
                       {"p_count", R.p_count},
                       {"profile", R.profile},
                       {"profile_correlation", R.profile_correlation},
                       {"c_over_alpha", R.c_over_alpha},
                       {"c_over_alpha_expected", R.c_over_alpha_expected},
                       {"quadratic_coefficient", R.quadratic_coefficient},
                       {"note", R.note},
                       {"entries", entries}};
  }
  if (rep.corollary) {
    const auto& C = *rep.corollary;
    j["corollary"] = {{"l", C.l},           {"n", C.n},
                      {"beta_l", C.beta_l}, {"expected_p", C.expected_p},
                      {"boundary", C.boundary}, {"noise_floor", C.noise_floor},
                      {"p", C.p},           {"c3", C.c3},
                      {"c3_max_snr", C.c3_max_snr}, {"low_order_detected", C.low_order_detected},
                      {"c3_compatible", C.c3_compatible}, {"verdict", C.verdict}};
  }
  if (rep.tuning)
    j["tuning"] = {{"coefficient", rep.tuning->coefficient},
                   {"psi", rep.tuning->psi},
                   {"psi_untuned", rep.tuning->psi_untuned},
                   {"iterations", rep.tuning->iterations}};
  j["wall_seconds"] = rep.wall_seconds;
  j["accepted_steps"] = rep.accepted_steps;
  j["rejected_steps"] = rep.rejected_steps;
  j["output_dir"] = rep.output_dir;
  j["files"] = rep.files;
  return j;
}

std::string resolve_output_dir(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const std::string leaf = cfg.output_dir.empty() ? cfg.name : cfg.output_dir;
  if (fs::path(leaf).is_absolute()) return leaf;
  const char* root = std::getenv("MCFLAB_OUTPUT_ROOT");
  return (fs::path(root && *root ? root : "mcflab-out") / leaf).string();
}

RunReport run_experiment(const ExperimentConfig& cfg, const RunControl& ctl) { return execute(cfg, ctl, std::nullopt); }

RunReport resume_experiment(const std::string& checkpoint_path, const RunControl& ctl) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  ExperimentConfig cfg;
  try {
    cfg = config_from_json(json::parse(ck.config_json));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::CorruptSnapshot, std::string("checkpoint config: ") + e.what());
  }
  // outputs go next to the checkpoint, wherever the output root pointed at the time
  const auto dir = std::filesystem::absolute(checkpoint_path).parent_path().string();
  return execute(cfg, ctl, std::move(ck), dir);
}

std::vector<PresetInfo> list_presets() {
  return {
      {"sphere-exact", "n=2 round sphere in both frames: T = r0^2/4, sphere law, monitors and arrival time exact"},
      {"rate-2n", "n=2, 0.01 sqrt(n) Y_2: a_2 and ||w|| decay at 2/n = 1, alpha within 10%"},
      {"rate-2n-n1", "n=1 curve, 0.01 Y_2: decay rate 2"},
      {"rate-2n-n3", "n=3, 0.01 sqrt(3) Y_2: decay rate 2/3"},
      {"rate-higher", "n=2, Y_3 data: a_3 decays at 1 + 6/n = 4"},
      {"rate-higher-n3", "n=3, Y_3 data: a_3 decays at 3"},
      {"lemma-sweep", "1000 random modal solutions against the three-interval lemmas"},
      {"huisken-monitors", "n=2 Y_2 run: osc H, pinching, |grad H| decay at least at 2/n"},
      {"z-identity", "n=2 Y_2 run: max |Z + 1/n| decays"},
      {"non-c3", "n=2 Y_2 run: arrival residual ~ rho^3 with a Y_2 profile, Hessian -I/2"},
      {"non-c3-n3", "n=3 Y_2 run: arrival residual ~ rho^{8/3}"},
      {"corollary-c3", "n=2 Y_3 data with the Y_2 tail tuned away: no rho^3 term in the arrival time"},
      {"optimality", "n=2 generic degree-2 data: ||w|| decays at 2/n and not faster"},
      {"linearization", "nonlinear minus linear modal error is first order in the amplitude"},
  };
}

ExperimentConfig preset(const std::string& name) {
  auto c = make_preset(name);
  c.validate();
  return c;
}

}  // namespace mcflab
