// Command-line front end: builds grids and windows, samples fields, evaluates
// the bispectrum statistic, and drives the Monte Carlo campaigns.  All
// artifacts go under the --out directory; a manifest is written before any
// computation starts.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "needlets/bispectrum.hpp"
#include "needlets/diagrams.hpp"
#include "needlets/experiments.hpp"
#include "needlets/field_model.hpp"
#include "needlets/harmonics.hpp"
#include "needlets/needlet_frame.hpp"
#include "needlets/spectrum.hpp"
#include "needlets/sphere_grid.hpp"
#include "needlets/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace needlets;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitUsage = 2;

struct CommonOpts {
  std::string out_dir = ".";
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_config) {
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--threads", o.threads, "worker thread cap (0 = hardware)");
  auto* s = cmd->add_option("--seed", o.seed, "master seed (overrides config)");
  s->each([&o](const std::string&) { o.seed_set = true; });
  if (with_config)
    cmd->add_option("--config", o.config_path, "JSON config file")->required();
}

json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw parse_error("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw parse_error("config is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw parse_error("config must be a JSON object");
  return j;
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw parse_error("unknown config key: \"" + it.key() + "\"");
}

void write_manifest(const CommonOpts& o, const std::string& command,
                    const json& resolved, std::uint64_t seed,
                    const std::vector<std::string>& outputs = {}) {
  fs::create_directories(o.out_dir);
  json m{{"command", command},
         {"config_path", o.config_path},
         {"resolved", resolved},
         {"seed", seed},
         {"output_directory", o.out_dir},
         {"outputs", outputs},  // relative to output_directory
         {"version", kVersion},
         {"written_unix_ms",
          std::chrono::duration_cast<std::chrono::milliseconds>(
              std::chrono::system_clock::now().time_since_epoch())
              .count()}};
  std::ofstream os(fs::path(o.out_dir) / "manifest.json");
  os << m.dump(2) << "\n";
}

std::ofstream open_out(const CommonOpts& o, const std::string& name) {
  std::ofstream os(fs::path(o.out_dir) / name);
  if (!os) throw std::runtime_error("cannot open output file: " + name);
  return os;
}

PowerSpectrum spectrum_from_json(const json& j, double B, int max_level_used) {
  std::vector<double> d = j.value("coeffs", std::vector<double>{0, 0, 0, 1});
  int lmax = j.value("lmax", 0);
  if (lmax <= 0) lmax = int(std::floor(std::pow(B, max_level_used + 1)));
  return make_power_spectrum(d, lmax);
}

MCConfig mc_config_from_json(const json& j) {
  reject_unknown_keys(j, {"B", "spectrum_coeffs", "spectrum_lmax", "triples",
                          "K", "R", "seed", "f_nl", "work_margin", "threads",
                          "max_level", "window_tol", "L", "levels"});
  MCConfig c;
  c.B = j.value("B", 2.0);
  c.spectrum_coeffs =
      j.value("spectrum_coeffs", std::vector<double>{0, 0, 0, 1});
  c.spectrum_lmax = j.value("spectrum_lmax", 0);
  if (j.contains("triples"))
    c.triples = j.at("triples").get<std::vector<std::array<int, 3>>>();
  c.K = j.value("K", 1);
  c.R = j.value("R", 100);
  c.seed = j.value("seed", std::uint64_t(1));
  c.f_nl = j.value("f_nl", 0.0);
  c.work_margin = j.value("work_margin", 2.0);
  c.threads = j.value("threads", 0);
  c.max_level = j.value("max_level", 10);
  c.window_tol = j.value("window_tol", 1e-12);
  return c;
}

void apply_overrides(MCConfig& c, const CommonOpts& o) {
  if (o.seed_set) c.seed = o.seed;
  if (o.threads > 0) c.threads = o.threads;
}

void write_mc_outputs(const CommonOpts& o, const MCResult& res,
                      bool studentized) {
  {
    auto os = open_out(o, "results.jsonl");
    const MCConfig echo = res.config_echo.get<MCConfig>();
    for (std::size_t t = 0; t < res.triples.size(); ++t)
      for (std::size_t r = 0; r < res.I[t].size(); ++r) {
        json rec{{"rep", r},
                 {"triple", res.triples[t]},
                 {"B", echo.B},
                 {"K", echo.K},
                 {"seed", derive_seed(echo.seed, r)},
                 {"I", res.I[t][r]},
                 {"var_theory", res.var_theory[t]},
                 {"I_hat", res.I_hat[t][r]}};
        if (studentized)
          rec["I_tilde"] = res.I_tilde[t][r];
        else
          rec["I_tilde"] = nullptr;
        os << rec.dump() << "\n";
      }
  }
  {
    auto os = open_out(o, "summary.csv");
    os << "j1,j2,j3,var_theory,mean,variance,skewness,excess_kurtosis,"
          "se_mean,se_skewness,se_kurtosis,ks_stat,ks_p,mc_theory_ratio\n";
    char buf[512];
    for (const auto& s : res.summaries) {
      std::snprintf(buf, sizeof buf,
                    "%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                    "%.17g,%.17g,%.17g\n",
                    s.triple[0], s.triple[1], s.triple[2], s.var_theory,
                    s.moments.mean, s.moments.variance, s.moments.skewness,
                    s.moments.excess_kurtosis, s.moments.se_mean,
                    s.moments.se_skewness, s.moments.se_kurtosis,
                    s.ks_normal.statistic, s.ks_normal.p_value,
                    s.mc_theory_ratio);
      os << buf;
    }
  }
  {
    auto os = open_out(o, "quantiles.csv");
    os << "j1,j2,j3,p,sample_quantile,normal_quantile\n";
    char buf[256];
    for (std::size_t t = 0; t < res.triples.size(); ++t) {
      for (int i = 1; i < 40; ++i) {
        const double p = i / 40.0;
        // Normal quantile by bisection on the cdf.
        double lo = -10.0, hi = 10.0;
        for (int it = 0; it < 80; ++it) {
          const double mid = 0.5 * (lo + hi);
          (normal_cdf(mid) < p ? lo : hi) = mid;
        }
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.4f,%.17g,%.17g\n",
                      res.triples[t][0], res.triples[t][1], res.triples[t][2],
                      p, quantile(res.I_hat[t], p), 0.5 * (lo + hi));
        os << buf;
      }
    }
  }
}

// ---------------------------------------------------------------------------

int cmd_grid(const CommonOpts& o, double B, int j) {
  write_manifest(o, "grid", json{{"B", B}, {"j", j}}, 0, {"grid.json"});
  auto g = build_grid(B, j);
  auto d = grid_diagnostics(g);
  double max_w = 0.0;
  for (int i = 0; i < g.n_theta; ++i) max_w = std::max(max_w, g.ring_weight[i]);
  json out{{"descriptor", grid_descriptor(g)},
           {"N", g.size()},
           {"mesh_norm", d.mesh_norm},
           {"separation", d.separation},
           {"kappa_estimate", d.kappa_estimate},
           {"rho_estimate", j >= 0 ? max_w * std::pow(B, 2 * j) : max_w},
           {"weight_sum", [&] {
              double s = 0.0;
              for (std::size_t k = 0; k < g.size(); ++k) s += g.weight(k);
              return s;
            }()}};
  auto os = open_out(o, "grid.json");
  os << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_window(const CommonOpts& o, double B, const std::string& check_l,
               double tol) {
  int l_lo = 1, l_hi = 200;
  if (std::sscanf(check_l.c_str(), "%d..%d", &l_lo, &l_hi) != 2 || l_lo < 1 ||
      l_hi < l_lo)
    throw parse_error("--check-l must look like \"1..200\"");
  write_manifest(o, "window",
                 json{{"B", B}, {"check_l", check_l}, {"tol", tol}}, 0,
                 {"window_partition.csv"});
  auto w = build_window(B, tol);
  auto os = open_out(o, "window_partition.csv");
  os << "l,sum_b_sq,deviation\n";
  double worst = 0.0;
  char buf[128];
  for (int l = l_lo; l <= l_hi; ++l) {
    const int J = int(std::ceil(std::log(double(l)) / std::log(B))) + 2;
    double s = 0.0;
    for (int jj = 0; jj <= J; ++jj) s += w.b_sq(l / std::pow(B, jj));
    worst = std::max(worst, std::abs(s - 1.0));
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.3e\n", l, s, std::abs(s - 1.0));
    os << buf;
  }
  std::printf("window B=%g: max |sum b^2 - 1| = %.3e over l=%d..%d\n", B,
              worst, l_lo, l_hi);
  return worst <= 1e-10 ? kExitOk : kExitValidation;
}

int cmd_synth(const CommonOpts& o) {
  json cfg = load_config(o.config_path);
  reject_unknown_keys(cfg, {"B", "spectrum", "seed", "f_nl", "work_margin",
                            "lmax", "max_level"});
  const double B = cfg.value("B", 2.0);
  std::uint64_t seed = cfg.value("seed", std::uint64_t(1));
  if (o.seed_set) seed = o.seed;
  const double f_nl = cfg.value("f_nl", 0.0);
  json scfg = cfg.value("spectrum", json::object());
  reject_unknown_keys(scfg, {"coeffs", "lmax"});
  const int lmax = scfg.value("lmax", 64);
  auto spectrum = make_power_spectrum(
      scfg.value("coeffs", std::vector<double>{0, 0, 0, 1}), lmax);
  write_manifest(o, "synth", cfg, seed, {"alm.csv", "spectrum.csv"});
  HarmonicCoefficients alm;
  if (f_nl == 0.0) {
    alm = sample_gaussian_alm(spectrum, seed);
  } else {
    const double margin = cfg.value("work_margin", 2.0);
    auto work = build_grid_for_degree(
        std::max(int(std::ceil(margin * lmax)), 2 * lmax));
    alm = sample_local_ng({f_nl, spectrum}, seed, work);
  }
  write_alm_csv(alm, (fs::path(o.out_dir) / "alm.csv").string());
  write_spectrum_csv(spectrum,
                     (fs::path(o.out_dir) / "spectrum.csv").string());
  (void)B;
  std::printf("synth: wrote alm.csv (lmax %d) and spectrum.csv\n", lmax);
  return kExitOk;
}

int cmd_bispec(const CommonOpts& o) {
  json cfg = load_config(o.config_path);
  reject_unknown_keys(cfg, {"B", "K", "triple", "spectrum", "alm",
                            "window_tol"});
  const double B = cfg.value("B", 2.0);
  const int K = cfg.value("K", 1);
  const auto triple = cfg.at("triple").get<std::array<int, 3>>();
  write_manifest(o, "bispec", cfg, 0, {"bispec.jsonl"});
  auto w = build_window(B, cfg.value("window_tol", 1e-12));
  json scfg = cfg.value("spectrum", json::object());
  reject_unknown_keys(scfg, {"coeffs", "lmax"});
  auto spectrum = spectrum_from_json(scfg, B, triple[2]);
  auto alm = read_alm_csv(cfg.at("alm").get<std::string>());
  auto g1 = build_grid(B, triple[0]);
  auto g2 = build_grid(B, triple[1]);
  auto g3 = build_grid(B, triple[2]);
  auto bcfg = make_bispectrum_config(g1, g2, g3, K);
  const double vt = theoretical_variance(spectrum, w, bcfg);

  auto n1 = needlet_analyze(alm, w, g1);
  auto n2 = (triple[1] == triple[0]) ? n1 : needlet_analyze(alm, w, g2);
  auto n3 = (triple[2] == triple[1]) ? n2 : needlet_analyze(alm, w, g3);
  const auto lv1 = needlet_level_variance(spectrum, w, triple[0], g1);
  const auto lv2 = needlet_level_variance(spectrum, w, triple[1], g2);
  const auto lv3 = needlet_level_variance(spectrum, w, triple[2], g3);
  std::vector<double> b1 = n1.beta, b2 = n2.beta, b3 = n3.beta;
  for (auto& v : b1) v /= std::sqrt(lv1.sigma_j_sq);
  for (auto& v : b2) v /= std::sqrt(lv2.sigma_j_sq);
  for (auto& v : b3) v /= std::sqrt(lv3.sigma_j_sq);
  auto val = needlet_bispectrum(b1, b2, b3, bcfg, vt);
  val.I_tilde = studentized_bispectrum(n1, n2, n3, bcfg) / std::sqrt(vt);
  auto rec = bispectrum_record(val);
  auto os = open_out(o, "bispec.jsonl");
  os << rec.dump() << "\n";
  std::cout << rec.dump() << "\n";
  return kExitOk;
}

int cmd_mc_clt(const CommonOpts& o, bool studentized) {
  json cfg = load_config(o.config_path);
  MCConfig c = mc_config_from_json(cfg);
  apply_overrides(c, o);
  json resolved;
  to_json(resolved, c);
  write_manifest(o, studentized ? "mc-student" : "mc-clt", resolved, c.seed,
                 studentized
                     ? std::vector<std::string>{"results.jsonl", "summary.csv",
                                                "quantiles.csv",
                                                "sigma_ratios.csv"}
                     : std::vector<std::string>{"results.jsonl", "summary.csv",
                                                "quantiles.csv"});
  MCResult res = studentized ? run_studentized(c) : run_null_clt(c);
  write_mc_outputs(o, res, studentized);
  if (studentized) {
    auto os = open_out(o, "sigma_ratios.csv");
    os << "j,rep,sigma_ratio\n";
    char buf[128];
    for (const auto& [j, v] : res.sigma_ratio)
      for (std::size_t r = 0; r < v.size(); ++r) {
        std::snprintf(buf, sizeof buf, "%d,%zu,%.17g\n", j, r, v[r]);
        os << buf;
      }
    auto ks = ks_test_two_sample(res.I_hat[0], res.I_tilde[0]);
    std::printf("mc-student: KS(I_hat, I_tilde) stat %.4f p %.4f\n",
                ks.statistic, ks.p_value);
  }
  for (const auto& s : res.summaries)
    std::printf(
        "triple (%d,%d,%d): mean %.4f +- %.4f, var %.4f, skew %.3f, exkurt "
        "%.3f, KS p %.3f, mc/theory %.3f\n",
        s.triple[0], s.triple[1], s.triple[2], s.moments.mean,
        s.moments.se_mean, s.moments.variance, s.moments.skewness,
        s.moments.excess_kurtosis, s.ks_normal.p_value, s.mc_theory_ratio);
  return kExitOk;
}

int cmd_mc_partial(const CommonOpts& o) {
  json cfg = load_config(o.config_path);
  const int L = cfg.value("L", 4);
  MCConfig c = mc_config_from_json(cfg);
  apply_overrides(c, o);
  json resolved;
  to_json(resolved, c);
  resolved["L"] = L;
  write_manifest(o, "mc-partial", resolved, c.seed,
                 {"j1_covariance.csv", "j2_covariance.csv"});
  auto rep = run_partial_sums(c, L);

  {
    auto os = open_out(o, "j1_covariance.csv");
    os << "r1,r2,s1,s2,empirical,template\n";
    char buf[256];
    const int n = rep.L;
    for (int a1 = 0; a1 <= n; ++a1)
      for (int a2 = 0; a2 <= n; ++a2)
        for (int b1 = a1; b1 <= n; ++b1)
          for (int b2 = 0; b2 <= n; ++b2) {
            if (b1 == a1 && b2 < a2) continue;
            CompensatedSum s;
            for (std::size_t r = 0; r < rep.j1_vals[a1][a2].size(); ++r)
              s.add(rep.j1_vals[a1][a2][r] * rep.j1_vals[b1][b2][r]);
            const double emp = s.value() / double(rep.j1_vals[a1][a2].size());
            const double tmpl = std::min(rep.grid_r[a1], rep.grid_r[b1]) *
                                std::min(rep.grid_r[a2], rep.grid_r[b2]);
            std::snprintf(buf, sizeof buf, "%g,%g,%g,%g,%.17g,%.17g\n",
                          rep.grid_r[a1], rep.grid_r[a2], rep.grid_r[b1],
                          rep.grid_r[b2], emp, tmpl);
            os << buf;
          }
  }
  if (rep.j2_available) {
    auto os = open_out(o, "j2_covariance.csv");
    os << "r,s,empirical,template\n";
    char buf[256];
    for (int a = 0; a <= rep.L; ++a)
      for (int b = a; b <= rep.L; ++b) {
        CompensatedSum s;
        for (std::size_t r = 0; r < rep.j2_vals[a].size(); ++r)
          s.add(rep.j2_vals[a][r] * rep.j2_vals[b][r]);
        const double emp = s.value() / double(rep.j2_vals[a].size());
        std::snprintf(buf, sizeof buf, "%g,%g,%.17g,%.17g\n", rep.grid_r[a],
                      rep.grid_r[b], emp,
                      std::min(rep.grid_r[a], rep.grid_r[b]));
        os << buf;
      }
  }
  std::printf("mc-partial L=%d: Var J1(1,1) = %.4f (3se band %.4f)\n", rep.L,
              rep.j1_var_full, 3.0 * rep.j1_var_se);
  if (rep.j2_available)
    std::printf("mc-partial: E[J2(1)J2(1/3)] = %.4f +- %.4f, Var J2(1) = %.4f\n",
                rep.j2_cov_probe, rep.j2_cov_probe_se, rep.j2_var_full);
  else
    std::printf("mc-partial: three-level family empty for this (B, K)\n");
  return kExitOk;
}

int cmd_mc_power(const CommonOpts& o) {
  json cfg = load_config(o.config_path);
  MCConfig c = mc_config_from_json(cfg);
  apply_overrides(c, o);
  json resolved;
  to_json(resolved, c);
  write_manifest(o, "mc-power", resolved, c.seed, {"power_report.json"});
  auto rep = run_power(c);
  // Control arm with the same seed and f_nl = 0.
  MCConfig control = c;
  control.f_nl = 0.0;
  auto null_res = run_null_clt(control);

  json out{{"f_nl_sampler", rep.f_nl_sampler},
           {"f_nl_local", rep.f_nl_local},
           {"spectrum_distortion", rep.spectrum_distortion},
           {"arms", json::array()},
           {"control", json::array()}};
  for (const auto& a : rep.arms)
    out["arms"].push_back(json{{"triple", a.triple},
                               {"mean_I_hat", a.mean_I_hat},
                               {"se", a.se},
                               {"predicted_mean", a.predicted_mean},
                               {"detected", a.detected}});
  for (const auto& s : null_res.summaries)
    out["control"].push_back(
        json{{"triple", s.triple},
             {"mean_I_hat", s.moments.mean},
             {"se", s.moments.se_mean},
             {"detected",
              std::abs(s.moments.mean) > 3.0 * s.moments.se_mean}});
  auto os = open_out(o, "power_report.json");
  os << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_decay(const CommonOpts& o) {
  json cfg = load_config(o.config_path);
  MCConfig c = mc_config_from_json(cfg);
  apply_overrides(c, o);
  std::vector<int> levels = cfg.value("levels", std::vector<int>{4, 5, 6});
  json resolved;
  to_json(resolved, c);
  resolved["levels"] = levels;
  write_manifest(o, "decay", resolved, c.seed,
                 {"decay_curves.csv", "decay_mc.csv", "decay_exponents.json"});
  auto rep = run_correlation_decay(c, levels);
  {
    auto os = open_out(o, "decay_curves.csv");
    os << "j,theta,corr_model\n";
    char buf[160];
    for (const auto& cv : rep.curves)
      for (std::size_t i = 0; i < cv.theta.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", cv.j, cv.theta[i],
                      cv.corr_model[i]);
        os << buf;
      }
  }
  {
    auto os = open_out(o, "decay_mc.csv");
    os << "j,theta,corr_mc,corr_model,se\n";
    char buf[224];
    for (const auto& cv : rep.curves)
      for (std::size_t i = 0; i < cv.theta_mc.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", cv.j,
                      cv.theta_mc[i], cv.corr_mc[i], cv.corr_mc_model[i],
                      cv.corr_mc_se[i]);
        os << buf;
      }
  }
  json exps = json::array();
  for (const auto& cv : rep.curves) {
    exps.push_back(json{{"j", cv.j}, {"fitted_exponent", cv.fitted_exponent}});
    std::printf("decay j=%d: fitted exponent %.3f\n", cv.j,
                cv.fitted_exponent);
  }
  auto os = open_out(o, "decay_exponents.json");
  os << exps.dump(2) << "\n";
  return kExitOk;
}

int cmd_diagram(const CommonOpts& o, const std::string& rows_arg) {
  std::vector<int> rows;
  {
    std::string tok;
    for (char ch : rows_arg + ",") {
      if (ch == ',') {
        if (!tok.empty()) rows.push_back(std::stoi(tok));
        tok.clear();
      } else {
        tok += ch;
      }
    }
  }
  write_manifest(o, "diagram", json{{"rows", rows}}, 0, {"diagram.json"});
  DiagramTable t{rows};
  auto all = enumerate_diagrams(t);
  std::size_t flat = 0, connected = 0, paired = 0;
  for (const auto& d : all) {
    const auto c = classify(d, t);
    flat += c.has_flat;
    connected += c.connected;
    paired += c.paired;
  }
  json out{{"rows", rows},
           {"diagrams", all.size()},
           {"flat", flat},
           {"connected", connected},
           {"paired", paired}};
  auto os = open_out(o, "diagram.json");
  os << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_validate(const CommonOpts& o, bool quick) {
  write_manifest(o, "validate", json{{"quick", quick}}, 0);
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    std::printf("[%s] %s\n", ok ? "ok" : "FAIL", name);
    if (!ok) ++failures;
  };

  {  // window partition of unity
    bool ok = true;
    for (double B : {1.5, 2.0}) {
      auto w = build_window(B, 1e-12);
      const int top = quick ? 64 : 512;
      for (int l = 1; l <= top && ok; ++l) {
        const int J = int(std::ceil(std::log(double(l)) / std::log(B))) + 2;
        double s = 0.0;
        for (int jj = 0; jj <= J; ++jj) s += w.b_sq(l / std::pow(B, jj));
        ok = std::abs(s - 1.0) <= 1e-10;
      }
    }
    check("window partition of unity", ok);
  }
  {  // cubature exactness
    auto g = build_grid(2.0, quick ? 2 : 3);
    bool ok = true;
    std::uint64_t pick = 77;
    for (int it = 0; it < (quick ? 40 : 120) && ok; ++it) {
      pick = mix_key(pick, it);
      const int l = 1 + int(pick % std::uint64_t(g.lmax));
      const int m = int(mix_key(pick, 1) % std::uint64_t(l + 1));
      std::complex<double> acc{0.0, 0.0};
      for (std::size_t k = 0; k < g.size(); ++k)
        acc += g.weight(k) * sph_harm(l, m, g.point(k));
      ok = std::abs(acc) < 1e-9;
    }
    check("cubature exactness", ok);
  }
  {  // weighted zero sum of analyzed fields
    auto w = build_window(2.0, 1e-12);
    auto spec = make_power_spectrum({0, 0, 0, 1}, 32);
    auto g = build_grid(2.0, 3);
    bool ok = true;
    for (int r = 0; r < (quick ? 3 : 10) && ok; ++r) {
      auto nc = needlet_analyze(sample_gaussian_alm(spec, derive_seed(4, r)),
                                w, g);
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        num += nc.beta[k] * std::sqrt(g.weight(k));
        den += nc.beta[k] * nc.beta[k] * g.weight(k);
      }
      ok = std::abs(num) <= 1e-8 * std::sqrt(den);
    }
    check("weighted zero sum", ok);
  }
  {  // wigner orthogonality
    bool ok = true;
    std::uint64_t pick = 5;
    for (int it = 0; it < (quick ? 6 : 20) && ok; ++it) {
      pick = mix_key(pick, it);
      const int l1 = 2 + int(pick % 8);
      const int l2 = 2 + int(mix_key(pick, 1) % 8);
      const int l3 =
          std::abs(l1 - l2) + int(mix_key(pick, 2) % (2 * std::min(l1, l2) + 1));
      double s = 0.0;
      for (int m1 = -l1; m1 <= l1; ++m1)
        for (int m2 = -l2; m2 <= l2; ++m2) {
          const int m3 = -m1 - m2;
          if (std::abs(m3) > l3) continue;
          const double v = wigner_3j(l1, l2, l3, m1, m2, m3);
          s += v * v;
        }
      ok = std::abs(s - 1.0) < 1e-10;
    }
    check("wigner orthogonality", ok);
  }
  {  // diagram counts
    bool ok = enumerate_diagrams({{2, 2}}).size() == 3 &&
              enumerate_diagrams({{1, 1, 1, 1}}).size() == 3;
    ok = ok && std::abs(hermite(3, 2.0) - 2.0) < 1e-12;
    check("diagram counts and hermite values", ok);
  }
  {  // distances
    bool ok = std::abs(geodesic_distance({0.0, 0.0}, {kPi, 0.0}) - kPi) < 1e-12;
    auto g = build_grid(2.0, 1);
    double sum = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) sum += g.weight(k);
    ok = ok && std::abs(sum - kFourPi) < 1e-10;
    check("geometry basics", ok);
  }
  std::printf("validate: %d failure(s)\n", failures);
  return failures == 0 ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"needlets bispectrum toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonOpts o_grid, o_window, o_synth, o_bispec, o_clt, o_student, o_partial,
      o_power, o_decay, o_diagram, o_validate;

  double grid_B = 2.0;
  int grid_j = 0;
  auto* c_grid = app.add_subcommand("grid", "build a cubature grid and report diagnostics");
  add_common(c_grid, o_grid, false);
  c_grid->add_option("--B", grid_B, "band ratio")->required();
  c_grid->add_option("--j", grid_j, "level")->required();

  double win_B = 2.0, win_tol = 1e-12;
  std::string win_check = "1..200";
  auto* c_window = app.add_subcommand("window", "build a window and table the partition of unity");
  add_common(c_window, o_window, false);
  c_window->add_option("--B", win_B, "band ratio")->required();
  c_window->add_option("--check-l", win_check, "multipole range, e.g. 1..200");
  c_window->add_option("--tol", win_tol, "evaluation tolerance");

  auto* c_synth = app.add_subcommand("synth", "sample a field to coefficient files");
  add_common(c_synth, o_synth, true);

  auto* c_bispec = app.add_subcommand("bispec", "one statistic from stored coefficients");
  add_common(c_bispec, o_bispec, true);

  auto* c_clt = app.add_subcommand("mc-clt", "null-distribution campaign");
  add_common(c_clt, o_clt, true);

  auto* c_student = app.add_subcommand("mc-student", "studentized campaign");
  add_common(c_student, o_student, true);

  auto* c_partial = app.add_subcommand("mc-partial", "partial-sum campaign");
  add_common(c_partial, o_partial, true);

  auto* c_power = app.add_subcommand("mc-power", "non-Gaussian power campaign");
  add_common(c_power, o_power, true);

  auto* c_decay = app.add_subcommand("decay", "coefficient correlation decay report");
  add_common(c_decay, o_decay, true);

  std::string diagram_rows = "2,2";
  auto* c_diagram = app.add_subcommand("diagram", "diagram counts and classification");
  add_common(c_diagram, o_diagram, false);
  c_diagram->add_option("--rows", diagram_rows, "row sizes, e.g. 2,2,2");

  bool validate_quick = false;
  auto* c_validate = app.add_subcommand("validate", "run the invariant suite");
  add_common(c_validate, o_validate, false);
  c_validate->add_flag("--quick", validate_quick, "reduced ranges");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_grid->parsed()) return cmd_grid(o_grid, grid_B, grid_j);
    if (c_window->parsed())
      return cmd_window(o_window, win_B, win_check, win_tol);
    if (c_synth->parsed()) return cmd_synth(o_synth);
    if (c_bispec->parsed()) return cmd_bispec(o_bispec);
    if (c_clt->parsed()) return cmd_mc_clt(o_clt, false);
    if (c_student->parsed()) return cmd_mc_clt(o_student, true);
    if (c_partial->parsed()) return cmd_mc_partial(o_partial);
    if (c_power->parsed()) return cmd_mc_power(o_power);
    if (c_decay->parsed()) return cmd_decay(o_decay);
    if (c_diagram->parsed()) return cmd_diagram(o_diagram, diagram_rows);
    if (c_validate->parsed()) return cmd_validate(o_validate, validate_quick);
  } catch (const parse_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitUsage;
}
