#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cmclab/diagnostics.hpp"

namespace cmclab {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Family configuration: rho = 1 + t * sum amp_j Y_{l_j, m_j} over a list of
// global amplitudes t, with an optional gauge pre-warp.
// ---------------------------------------------------------------------------

struct ModeSpec {
  int l = 0, m = 0;
  double amp = 0.0;
};

struct PreWarp {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();  // axis-angle
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

struct FamilyConfig {
  int band_limit = 16;
  std::vector<ModeSpec> modes;
  std::vector<double> amplitudes;
  std::optional<PreWarp> pre_warp;
  double alpha = 0.25;
  long seed = 0;

  void validate() const {
    if (band_limit < 8 || band_limit > 64)
      throw ConfigError("band_limit must lie in [8, 64]");
    if (amplitudes.empty()) throw ConfigError("amplitude list must not be empty");
    if (!(alpha > 0.0 && alpha < 0.5)) throw ConfigError("alpha must lie in (0, 1/2)");
    double amp_sum = 0.0;
    for (const ModeSpec& ms : modes) {
      if (ms.l < 2 || ms.l > band_limit - 2)
        throw ConfigError("mode degrees must satisfy 2 <= l <= band_limit - 2 "
                          "(l <= 1 modes are gauge directions)");
      if (std::abs(ms.m) > ms.l) throw ConfigError("mode order must satisfy |m| <= l");
      amp_sum += std::abs(ms.amp);
    }
    for (double t : amplitudes)
      if (amp_sum * std::abs(t) > 0.1 + 1e-12)
        throw ConfigError("total perturbation amplitude |amp|*|t| must stay below 0.1");
    if (pre_warp) {
      if (pre_warp->v.norm() > 0.5) throw ConfigError("pre_warp |v| too large");
      if (pre_warp->rotation.norm() > 1.0) throw ConfigError("pre_warp rotation too large");
      if (pre_warp->translation.norm() > 0.2)
        throw ConfigError("pre_warp translation too large");
    }
  }
};

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

inline Eigen::Vector3d vec3_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(where + " must be an array of three numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

inline FamilyConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  detail::reject_unknown_keys(
      j, {"band_limit", "modes", "amplitudes", "pre_warp", "alpha", "seed"}, "config");
  FamilyConfig cfg;
  try {
    cfg.band_limit = j.at("band_limit").get<int>();
    for (const json& jm : j.at("modes")) {
      detail::reject_unknown_keys(jm, {"l", "m", "amp"}, "modes[]");
      cfg.modes.push_back(
          {jm.at("l").get<int>(), jm.at("m").get<int>(), jm.at("amp").get<double>()});
    }
    for (const json& jt : j.at("amplitudes")) cfg.amplitudes.push_back(jt.get<double>());
    if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<long>();
    if (j.contains("pre_warp")) {
      const json& jw = j.at("pre_warp");
      detail::reject_unknown_keys(jw, {"v", "rotation", "translation"}, "pre_warp");
      PreWarp w;
      if (jw.contains("v")) w.v = detail::vec3_from(jw.at("v"), "pre_warp.v");
      if (jw.contains("rotation"))
        w.rotation = detail::vec3_from(jw.at("rotation"), "pre_warp.rotation");
      if (jw.contains("translation"))
        w.translation = detail::vec3_from(jw.at("translation"), "pre_warp.translation");
      cfg.pre_warp = w;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline FamilyConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Pipeline: conformalize -> (pre-warp) -> volume normalize -> gauge fix ->
// re-conformalize if the defect regressed -> diagnostics.
// ---------------------------------------------------------------------------

struct PipelineResult {
  double t = 0.0;
  DiagnosticsReport report;
  GeometrySummary summary;
  WillmoreThreshold threshold;
  Immersion immersion;
  int conformal_iterations = 0;
  double gauge_energy = 0.0;
  double gauge_grad_norm = 0.0;
  double aliasing_tail = 0.0;
};

namespace detail {

template <class Fn>
auto pipeline_stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error&) {
    std::throw_with_nested(Error(std::string("pipeline stage '") + name + "' failed"));
  }
}

}  // namespace detail

inline PipelineResult run_pipeline(const FamilyConfig& cfg, double t) {
  cfg.validate();
  double amp_sum = 0.0;
  for (const ModeSpec& ms : cfg.modes) amp_sum += std::abs(ms.amp);
  if (amp_sum * std::abs(t) > 0.1 + 1e-12)
    throw ConfigError("amplitude t out of the configured family range");

  GridPtr grid = build_grid(cfg.band_limit);
  SpectralCoeffs rc = SpectralCoeffs::zeros(cfg.band_limit);
  rc.at(0, 0) = std::sqrt(four_pi);
  for (const ModeSpec& ms : cfg.modes) rc.at(ms.l, ms.m) += t * ms.amp;
  ScalarField rho = synthesize(rc, grid);

  CrSolver solver(grid);
  ConformalizeResult conf = detail::pipeline_stage("conformalize", [&] {
    if (rho.values.minCoeff() <= 0.0) throw DomainError("radial profile must be positive");
    SpectralCoeffs dev = rc;
    dev.at(0, 0) -= std::sqrt(four_pi);
    if (sobolev_sq(dev, 2) > 0.5 * 0.5)
      throw OutOfRegimeError("family amplitude outside the perturbative regime");
    AmbientField f_init = {grid, {rho.values * grid->nx(), rho.values * grid->ny(),
                                  rho.values * grid->nz()}};
    return conformalize_on(RadialSurface{rc}, f_init, solver);
  });
  int conformal_iters = conf.iterations;

  AmbientField f = conf.immersion.map();
  Eigen::Vector3d shift = Eigen::Vector3d::Zero();
  if (cfg.pre_warp) {
    f = detail::pipeline_stage("pre_warp", [&] {
      GaugeParams w;
      w.mobius.R = rodrigues(cfg.pre_warp->rotation);
      w.mobius.v = cfg.pre_warp->v;
      w.a = cfg.pre_warp->translation;
      return mobius_resample(analyze(f), grid, w);
    });
    shift += cfg.pre_warp->translation;
  }

  double scale = 1.0;
  f = detail::pipeline_stage("normalize_volume", [&] {
    Immersion imm = make_immersion(f);
    double vol = geometry_summary(imm).volume;
    if (vol <= 0.0) throw OrientationError("non-positive enclosed volume");
    scale = std::cbrt(four_pi / 3.0 / vol);
    return scaled(f, scale);
  });
  shift *= scale;

  GaugeFit fit = detail::pipeline_stage("gauge", [&] { return minimize_gauge(f); });
  shift += fit.params.a;
  f = fit.normalized;

  Immersion imm = detail::pipeline_stage("geometry", [&] { return make_immersion(f); });
  if (imm.conformal_defect() > 1e-8) {
    ConformalizeResult again = detail::pipeline_stage("re_conformalize", [&] {
      return conformalize_on(RadialSurface{rc, scale, shift}, f, solver);
    });
    conformal_iters += again.iterations;
    imm = std::move(again.immersion);
  }

  PipelineResult out{t,
                     detail::pipeline_stage("stability_report",
                                            [&] { return stability_report(imm); }),
                     geometry_summary(imm),
                     willmore_threshold_check(imm, cfg.alpha),
                     std::move(imm),
                     conformal_iters,
                     fit.energy,
                     fit.grad_norm,
                     fit.aliasing_tail};
  return out;
}

// ---------------------------------------------------------------------------
// Exact-identity suite
// ---------------------------------------------------------------------------

struct IdentityCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline std::vector<IdentityCheck> identity_suite(const PipelineResult& res,
                                                 double corrupt_H = 0.0) {
  const DiagnosticsReport& r = res.report;
  RoundCalibration cal = calibrate_round(r.band_limit);
  std::vector<IdentityCheck> out;
  auto add = [&](const std::string& name, double value, double tol) {
    out.push_back({name, value, tol, std::abs(value) <= tol});
  };

  double e_dis = std::max(std::abs(r.E_id1 - r.E_def), std::abs(r.E_id2 - r.E_def));
  add("energy_identities_agree", e_dis, 1e-8 * (1.0 + std::abs(r.E_def)));
  add("grad_zn_pointwise", r.grad_zn_max, 1e-8);
  add("flux_volume", r.flux_identity_residual, std::max(1e-8 * four_pi, 10.0 * cal.flux));
  add("h2_splitting", r.h2_splitting_res, 1e-8 * (1.0 + r.willmore));
  const Immersion& imm = res.immersion;
  Eigen::ArrayXd H = imm.mean_curvature().values + corrupt_H;
  add("minkowski", minkowski_residual_with(imm, H), std::max(1e-8 * r.area, 10.0 * cal.minkowski));
  add("hbar_identity", hbar_control_with(imm, H).identity_residual,
      std::max(1e-8 * r.area, 10.0 * cal.hbar_identity));
  add("vec_defect_reduction", vec_defect_with(imm, H).reduction_residual,
      std::max(1e-8 * (1.0 + r.vec_defect_sq), 10.0 * cal.vec_reduction));
  // One-sided: the spectral gap may only fail from below.
  out.push_back({"spectral_gap_nonnegative", r.spectral_gap_residual, 1e-10,
                 r.spectral_gap_residual >= -1e-10});
  add("curvature_equation", r.curvature_eq_residual, r.curvature_eq_tol);
  add("conformal_factor_pointwise", r.conformal_factor_residual, 1e-6);
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps and scaling fits
// ---------------------------------------------------------------------------

struct SweepRow {
  double t = 0.0;
  double delta = 0.0, u_inf = 0.0, cmc_defect = 0.0, ratio = 0.0;
  bool ratio_defined = false;
  double vol_balance = 0.0, grad_residual = 0.0, hbar_minus_2 = 0.0, vec_defect = 0.0;
  double nu_residual_l2 = 0.0, orth_residual = 0.0;
  double willmore = 0.0, area = 0.0;
  int conformal_iters = 0;
};

struct SlopeFit {
  std::string name;
  double slope = 0.0, target = 0.0, band = 0.0;
  bool vacuous = false;  // all magnitudes below the noise floor: bound holds trivially
  bool pass = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SlopeFit> slopes;
  double ratio_variation = 0.0;
  bool ratio_stable = false;
  bool pass = false;
};

inline SlopeFit fit_slope(const std::string& name, const std::vector<double>& ts,
                          const std::vector<double>& ys, double target, double band,
                          double floor = 1e-9) {
  SlopeFit fit{name, 0.0, target, band, false, false};
  double ymax = 0.0;
  for (double y : ys) ymax = std::max(ymax, std::abs(y));
  if (ymax <= floor) {
    fit.vacuous = true;
    fit.pass = true;
    return fit;
  }
  // Least squares on log-log.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t i = 0; i < ts.size(); ++i) {
    double y = std::abs(ys[i]);
    if (y <= 0.0) continue;
    double lx = std::log(ts[i]), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n >= 2) fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.pass = std::abs(fit.slope - target) <= band;
  return fit;
}

inline int lab_threads() {
  if (const char* env = std::getenv("LAB_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : int(hc);
}

inline SweepResult run_sweep(const FamilyConfig& cfg) {
  cfg.validate();
  std::vector<double> ts = cfg.amplitudes;
  std::sort(ts.begin(), ts.end(), std::greater<double>());

  std::vector<std::optional<PipelineResult>> results(ts.size());
  {
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mutex;
    int nthreads = std::min<int>(lab_threads(), int(ts.size()));
    for (int w = 0; w < nthreads; ++w)
      pool.emplace_back([&, w] {
        for (size_t i = w; i < ts.size(); i += nthreads) {
          try {
            results[i] = run_pipeline(cfg, ts[i]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  SweepResult out;
  std::vector<double> vol_b, grad_r, orth, nu2, hbar, vec, num, den, ratios;
  for (size_t i = 0; i < ts.size(); ++i) {
    const DiagnosticsReport& r = results[i]->report;
    SweepRow row;
    row.t = ts[i];
    row.delta = r.delta;
    row.u_inf = r.u_inf;
    row.cmc_defect = r.cmc_defect;
    row.ratio = r.ratio_defined ? r.rigidity_ratio : 0.0;
    row.ratio_defined = r.ratio_defined;
    row.vol_balance = r.vol_balance;
    row.grad_residual = r.grad_exp_residual;
    row.hbar_minus_2 = r.hbar_minus_2;
    row.vec_defect = r.vec_defect_sq;
    row.nu_residual_l2 = r.nu_residual_l2;
    row.orth_residual = r.orth_rot + r.orth_grad + r.orth_zx;
    row.willmore = r.willmore;
    row.area = r.area;
    row.conformal_iters = results[i]->conformal_iterations;
    out.rows.push_back(row);

    vol_b.push_back(row.vol_balance);
    grad_r.push_back(row.grad_residual);
    orth.push_back(row.orth_residual);
    nu2.push_back(row.nu_residual_l2);
    hbar.push_back(row.hbar_minus_2);
    vec.push_back(row.vec_defect);
    num.push_back(row.delta + row.u_inf);
    den.push_back(row.cmc_defect);
    if (row.ratio_defined) ratios.push_back(row.ratio);
  }

  out.slopes.push_back(fit_slope("vol_balance", ts, vol_b, 3.0, 0.3));
  out.slopes.push_back(fit_slope("grad_exp_residual", ts, grad_r, 3.0, 0.3));
  out.slopes.push_back(fit_slope("orthogonality", ts, orth, 2.0, 0.3));
  out.slopes.push_back(fit_slope("nu_residual_l2", ts, nu2, 2.0, 0.3));
  out.slopes.push_back(fit_slope("hbar_minus_2", ts, hbar, 2.0, 0.3));
  out.slopes.push_back(fit_slope("vec_defect", ts, vec, 2.0, 0.3));
  out.slopes.push_back(fit_slope("ratio_numerator", ts, num, 1.0, 0.15, 1e-12));
  out.slopes.push_back(fit_slope("cmc_defect", ts, den, 1.0, 0.15, 1e-12));

  out.ratio_stable = ratios.size() == ts.size() && ratios.size() >= 2;
  for (size_t i = 0; i + 1 < ratios.size(); ++i) {
    double rel = std::abs(ratios[i + 1] - ratios[i]) / std::max(1e-300, ratios[i]);
    out.ratio_variation = std::max(out.ratio_variation, rel);
    if (rel > 0.25) out.ratio_stable = false;
  }

  out.pass = out.ratio_stable;
  for (const SlopeFit& s : out.slopes) out.pass = out.pass && s.pass;
  return out;
}

// ---------------------------------------------------------------------------
// Serialization (17 significant digits; deterministic key order)
// ---------------------------------------------------------------------------

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline json report_to_json(const PipelineResult& res, const FamilyConfig& cfg) {
  const DiagnosticsReport& r = res.report;
  json j;
  j["schema_version"] = "1";
  j["band_limit"] = r.band_limit;
  j["t"] = res.t;
  j["report"] = {{"delta", r.delta},
                 {"u_inf", r.u_inf},
                 {"cmc_defect", r.cmc_defect},
                 {"H_bar", r.H_bar},
                 {"E_def", r.E_def},
                 {"E_id1", r.E_id1},
                 {"E_id2", r.E_id2},
                 {"vol_balance", r.vol_balance},
                 {"grad_exp_residual", r.grad_exp_residual},
                 {"quad_form_Qz", r.quad_form_Qz},
                 {"low_mode", {{"abs_int_z", r.low_mode_abs_int_z},
                               {"abs_int_zx", r.low_mode_abs_int_zx},
                               {"p_le1_norm", r.p_le1_norm}}},
                 {"spectral_gap_residual", r.spectral_gap_residual},
                 {"hbar_minus_2", r.hbar_minus_2},
                 {"vec_defect_sq", r.vec_defect_sq},
                 {"nu_residual_l2", r.nu_residual_l2},
                 {"nu_residual_l4", r.nu_residual_l4},
                 {"rigidity_ratio", r.ratio_defined ? r.rigidity_ratio : 0.0},
                 {"ratio_defined", r.ratio_defined},
                 {"conformal_defect", r.conformal_defect},
                 {"orthogonality",
                  {{"const", r.orth_const}, {"rot", r.orth_rot}, {"grad", r.orth_grad},
                   {"zx", r.orth_zx}}},
                 {"identity_residuals",
                  {{"flux_volume", r.flux_identity_residual},
                   {"minkowski", r.minkowski_res},
                   {"h2_splitting", r.h2_splitting_res},
                   {"hbar", r.hbar_identity_res},
                   {"vec_reduction", r.vec_reduction_res},
                   {"curvature_eq", r.curvature_eq_residual},
                   {"curvature_eq_tol", r.curvature_eq_tol},
                   {"conformal_factor", r.conformal_factor_residual},
                   {"grad_zn_pointwise", r.grad_zn_max}}}};
  j["summary"] = {{"area", res.summary.area},
                  {"volume", res.summary.volume},
                  {"willmore", res.summary.willmore},
                  {"H_bar", res.summary.H_bar},
                  {"cmc_defect_l2", res.summary.cmc_defect_l2}};
  j["willmore_threshold"] = {{"willmore", res.threshold.willmore},
                             {"threshold", res.threshold.threshold},
                             {"single_bubble_product", res.threshold.single_bubble_product},
                             {"alpha", cfg.alpha},
                             {"passes", res.threshold.passes}};
  j["pipeline"] = {{"conformal_iterations", res.conformal_iterations},
                   {"gauge_energy", res.gauge_energy},
                   {"gauge_grad_norm", res.gauge_grad_norm},
                   {"aliasing_tail", res.aliasing_tail}};
  return j;
}

inline const std::vector<std::string>& sweep_csv_columns() {
  static const std::vector<std::string> cols = {
      "t",          "delta",        "u_inf",       "cmc_defect",     "ratio",
      "vol_balance", "grad_residual", "hbar_minus_2", "vec_defect",
      "nu_residual_L2", "orth_residual", "willmore",  "area",          "conformal_iters"};
  return cols;
}

inline std::string sweep_to_csv(const SweepResult& sweep) {
  std::string csv;
  const auto& cols = sweep_csv_columns();
  for (size_t i = 0; i < cols.size(); ++i) csv += cols[i] + (i + 1 < cols.size() ? "," : "\n");
  for (const SweepRow& r : sweep.rows) {
    std::vector<double> vals = {r.t,          r.delta,        r.u_inf,
                                r.cmc_defect, r.ratio,        r.vol_balance,
                                r.grad_residual, r.hbar_minus_2, r.vec_defect,
                                r.nu_residual_l2, r.orth_residual, r.willmore,
                                r.area};
    for (double v : vals) csv += format_g17(v) + ",";
    csv += std::to_string(r.conformal_iters) + "\n";
  }
  return csv;
}

inline json sweep_to_json(const SweepResult& sweep) {
  json j;
  j["schema_version"] = "1";
  json rows = json::array();
  for (const SweepRow& r : sweep.rows) {
    rows.push_back({{"t", r.t},
                    {"delta", r.delta},
                    {"u_inf", r.u_inf},
                    {"cmc_defect", r.cmc_defect},
                    {"ratio", r.ratio},
                    {"ratio_defined", r.ratio_defined},
                    {"vol_balance", r.vol_balance},
                    {"grad_residual", r.grad_residual},
                    {"hbar_minus_2", r.hbar_minus_2},
                    {"vec_defect", r.vec_defect},
                    {"nu_residual_L2", r.nu_residual_l2},
                    {"orth_residual", r.orth_residual},
                    {"willmore", r.willmore},
                    {"area", r.area},
                    {"conformal_iters", r.conformal_iters}});
  }
  j["rows"] = rows;
  json slopes = json::array();
  for (const SlopeFit& s : sweep.slopes)
    slopes.push_back({{"name", s.name},
                      {"slope", s.slope},
                      {"target", s.target},
                      {"band", s.band},
                      {"vacuous", s.vacuous},
                      {"pass", s.pass}});
  j["slopes"] = slopes;
  j["ratio_variation"] = sweep.ratio_variation;
  j["ratio_stable"] = sweep.ratio_stable;
  j["pass"] = sweep.pass;
  return j;
}

inline json identities_to_json(const std::vector<std::pair<double, std::vector<IdentityCheck>>>&
                                   per_amplitude) {
  json j;
  j["schema_version"] = "1";
  bool all = true;
  json arr = json::array();
  for (const auto& [t, checks] : per_amplitude) {
    json jc = json::array();
    for (const IdentityCheck& c : checks) {
      jc.push_back(
          {{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass}});
      all = all && c.pass;
    }
    arr.push_back({{"t", t}, {"checks", jc}});
  }
  j["surfaces"] = arr;
  j["pass"] = all;
  return j;
}

}  // namespace cmclab
