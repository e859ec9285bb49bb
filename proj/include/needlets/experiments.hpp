#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "needlets/bispectrum.hpp"
#include "needlets/field_model.hpp"
#include "needlets/needlet_frame.hpp"
#include "needlets/rng.hpp"
#include "needlets/spectrum.hpp"
#include "needlets/stats.hpp"
#include "needlets/version.hpp"

#include <json.hpp>

namespace needlets {

// ---------------------------------------------------------------------------
// Campaign configuration

struct MCConfig {
  double B = 2.0;
  std::vector<double> spectrum_coeffs = {0.0, 0.0, 0.0, 1.0};
  int spectrum_lmax = 0;  // 0: derived from the highest level used
  std::vector<std::array<int, 3>> triples;
  int K = 1;
  int R = 100;
  std::uint64_t seed = 1;
  double f_nl = 0.0;         // quadratic sampler amplitude; 0 = Gaussian
  double work_margin = 2.0;  // work-grid degree = margin * base lmax
  int threads = 0;           // 0: hardware concurrency
  int max_level = 10;
  double window_tol = 1e-12;
};

inline void to_json(nlohmann::json& j, const MCConfig& c) {
  j = nlohmann::json{{"B", c.B},
                     {"spectrum_coeffs", c.spectrum_coeffs},
                     {"spectrum_lmax", c.spectrum_lmax},
                     {"triples", c.triples},
                     {"K", c.K},
                     {"R", c.R},
                     {"seed", c.seed},
                     {"f_nl", c.f_nl},
                     {"work_margin", c.work_margin},
                     {"threads", c.threads},
                     {"max_level", c.max_level},
                     {"window_tol", c.window_tol}};
}

inline void from_json(const nlohmann::json& j, MCConfig& c) {
  j.at("B").get_to(c.B);
  j.at("spectrum_coeffs").get_to(c.spectrum_coeffs);
  j.at("spectrum_lmax").get_to(c.spectrum_lmax);
  j.at("triples").get_to(c.triples);
  j.at("K").get_to(c.K);
  j.at("R").get_to(c.R);
  j.at("seed").get_to(c.seed);
  j.at("f_nl").get_to(c.f_nl);
  j.at("work_margin").get_to(c.work_margin);
  j.at("threads").get_to(c.threads);
  j.at("max_level").get_to(c.max_level);
  j.at("window_tol").get_to(c.window_tol);
}

inline std::string config_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

namespace detail {

inline int thread_count(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? int(hw) : 1;
}

template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::exception_ptr err;
  std::mutex err_mx;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mx);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace detail

// Shared per-campaign machinery: window, spectrum, grids, level variances,
// triple configs and their model variances.
class CampaignContext {
 public:
  explicit CampaignContext(const MCConfig& cfg) : cfg_(cfg) {
    if (cfg.R < 100)
      throw std::invalid_argument("campaign: need at least 100 replications");
    if (!(cfg.B > 1.0)) throw std::invalid_argument("campaign: B <= 1");
    if (cfg.triples.empty())
      throw std::invalid_argument("campaign: no triples configured");
    window_ = build_window(cfg.B, cfg.window_tol);
    int jmax = 0;
    for (const auto& t : cfg.triples) {
      if (!(t[0] >= 1 && t[0] <= t[1] && t[1] <= t[2]))
        throw std::invalid_argument("campaign: triple must satisfy 1<=j1<=j2<=j3");
      if (t[2] > cfg.max_level)
        throw capacity_error("campaign: level " + std::to_string(t[2]) +
                             " exceeds configured maximum " +
                             std::to_string(cfg.max_level));
      jmax = std::max(jmax, t[2]);
    }
    lmax_ = cfg.spectrum_lmax > 0
                ? cfg.spectrum_lmax
                : int(std::floor(std::pow(cfg.B, jmax + 1)));
    spectrum_ = make_power_spectrum(cfg.spectrum_coeffs, lmax_);
    std::vector<char> needed(jmax + 1, 0);
    for (const auto& t : cfg.triples)
      for (int i = 0; i < 3; ++i) needed[t[i]] = 1;
    grids_.resize(jmax + 1);
    level_var_.resize(jmax + 1);
    levels_.clear();
    for (int j = 1; j <= jmax; ++j)
      if (needed[j]) {
        grids_[j] = build_grid(cfg.B, j);
        level_var_[j] = needlet_level_variance(spectrum_, window_, j, grids_[j]);
        levels_.push_back(j);
      }
    for (const auto& t : cfg.triples) {
      configs_.push_back(make_bispectrum_config(grids_[t[0]], grids_[t[1]],
                                                grids_[t[2]], cfg.K));
      if (!configs_.back().admissible())
        throw std::invalid_argument(
            "campaign: triple (" + std::to_string(t[0]) + "," +
            std::to_string(t[1]) + "," + std::to_string(t[2]) +
            ") is not admissible for K=" + std::to_string(cfg.K));
      var_theory_.push_back(theoretical_variance(spectrum_, window_, configs_.back()));
    }
    if (cfg.f_nl != 0.0) {
      const int deg = int(std::ceil(cfg.work_margin * lmax_));
      work_grid_ = build_grid_for_degree(std::max(deg, 2 * lmax_));
    }
  }

  const MCConfig& config() const { return cfg_; }
  const NeedletWindow& window() const { return window_; }
  const PowerSpectrum& spectrum() const { return spectrum_; }
  const std::vector<int>& levels() const { return levels_; }
  const CubatureGrid& grid(int j) const { return grids_[j]; }
  const LevelVariance& level_variance(int j) const { return level_var_[j]; }
  const std::vector<BispectrumConfig>& triple_configs() const { return configs_; }
  const std::vector<double>& var_theory() const { return var_theory_; }
  int lmax() const { return lmax_; }

  HarmonicCoefficients sample_field(int rep) const {
    const std::uint64_t s = derive_seed(cfg_.seed, std::uint64_t(rep));
    if (cfg_.f_nl == 0.0) return sample_gaussian_alm(spectrum_, s);
    return sample_local_ng({cfg_.f_nl, spectrum_}, s, work_grid_);
  }

  // Normalized coefficients and plug-in/model variance ratios per level.
  struct FieldLevels {
    std::map<int, std::vector<double>> bhat;
    std::map<int, double> sigma_ratio;  // sigma_hat^2 / sigma_j^2
  };

  FieldLevels analyze_field(const HarmonicCoefficients& alm) const {
    FieldLevels out;
    for (int j : levels_) {
      auto nc = needlet_analyze(alm, window_, grids_[j]);
      const double hat = estimate_sigma(nc);
      out.sigma_ratio[j] = hat / level_var_[j].sigma_j_sq;
      const double inv = 1.0 / std::sqrt(level_var_[j].sigma_j_sq);
      for (auto& b : nc.beta) b *= inv;
      out.bhat[j] = std::move(nc.beta);
    }
    return out;
  }

 private:
  MCConfig cfg_;
  NeedletWindow window_;
  PowerSpectrum spectrum_;
  int lmax_ = 0;
  std::vector<int> levels_;
  std::vector<CubatureGrid> grids_;
  std::vector<LevelVariance> level_var_;
  std::vector<BispectrumConfig> configs_;
  std::vector<double> var_theory_;
  CubatureGrid work_grid_;
};

// ---------------------------------------------------------------------------
// Campaign results

struct TripleSummary {
  std::array<int, 3> triple{};
  double var_theory = 0.0;
  MomentSummary moments;      // of I_hat
  KsResult ks_normal;         // I_hat against N(0,1)
  double mc_theory_ratio = 0.0;  // MC variance of I / var_theory
};

struct MCResult {
  nlohmann::json config_echo;
  std::string hash;
  std::string version = kVersion;
  std::vector<std::array<int, 3>> triples;
  std::vector<double> var_theory;
  // Row-major per replication: values[t][r].
  std::vector<std::vector<double>> I;
  std::vector<std::vector<double>> I_hat;
  std::vector<std::vector<double>> I_tilde;            // studentized runs
  std::map<int, std::vector<double>> sigma_ratio;      // per level, per rep
  std::vector<TripleSummary> summaries;                // filled by summarize()

  void summarize() {
    summaries.clear();
    for (std::size_t t = 0; t < triples.size(); ++t) {
      TripleSummary s;
      s.triple = triples[t];
      s.var_theory = var_theory[t];
      s.moments = summarize_moments(I_hat[t]);
      s.ks_normal = ks_test_normal(I_hat[t]);
      const auto mi = summarize_moments(I[t]);
      s.mc_theory_ratio = var_theory[t] > 0.0 ? mi.variance / var_theory[t] : 0.0;
      summaries.push_back(s);
    }
  }
};

namespace detail {

inline MCResult run_campaign(const CampaignContext& ctx, bool studentized) {
  const MCConfig& cfg = ctx.config();
  MCResult res;
  to_json(res.config_echo, cfg);
  res.hash = config_hash(res.config_echo);
  res.triples = cfg.triples;
  res.var_theory = ctx.var_theory();
  const std::size_t nt = cfg.triples.size();
  res.I.assign(nt, std::vector<double>(cfg.R, 0.0));
  res.I_hat.assign(nt, std::vector<double>(cfg.R, 0.0));
  if (studentized) res.I_tilde.assign(nt, std::vector<double>(cfg.R, 0.0));
  for (int j : ctx.levels())
    res.sigma_ratio[j] = std::vector<double>(cfg.R, 0.0);

  parallel_for(cfg.R, thread_count(cfg.threads), [&](int r) {
    const auto alm = ctx.sample_field(r);
    const auto fl = ctx.analyze_field(alm);
    for (auto& [j, ratio] : fl.sigma_ratio)
      res.sigma_ratio[j][r] = ratio;
    for (std::size_t t = 0; t < nt; ++t) {
      const auto& c = ctx.triple_configs()[t];
      const auto v = needlet_bispectrum(fl.bhat.at(c.j1), fl.bhat.at(c.j2),
                                        fl.bhat.at(c.j3), c,
                                        ctx.var_theory()[t]);
      res.I[t][r] = v.I;
      res.I_hat[t][r] = v.I_hat;
      if (studentized) {
        // Plug-in accumulation equals I / prod sqrt(ratio_j) algebraically
        // (asserted against the direct path in the unit tests); reported here
        // in the same standardized units as I_hat.
        const double scale = std::sqrt(fl.sigma_ratio.at(c.j1) *
                                       fl.sigma_ratio.at(c.j2) *
                                       fl.sigma_ratio.at(c.j3));
        if (!(scale > 0.0))
          throw degenerate_variance_error("studentized campaign: zero scale");
        res.I_tilde[t][r] = v.I_hat / scale;
      }
    }
  });
  res.summarize();
  return res;
}

}  // namespace detail

// Gaussian null campaign: distribution of I_hat per triple.
inline MCResult run_null_clt(const MCConfig& cfg) {
  if (cfg.f_nl != 0.0)
    throw std::invalid_argument("run_null_clt: requires f_nl = 0");
  CampaignContext ctx(cfg);
  return detail::run_campaign(ctx, /*studentized=*/false);
}

// Null campaign carrying both the model-normalized and the plug-in
// studentized statistic.
inline MCResult run_studentized(const MCConfig& cfg) {
  if (cfg.f_nl != 0.0)
    throw std::invalid_argument("run_studentized: requires f_nl = 0");
  CampaignContext ctx(cfg);
  return detail::run_campaign(ctx, /*studentized=*/true);
}

// ---------------------------------------------------------------------------
// Partial-sum campaigns

struct PartialSumReport {
  nlohmann::json config_echo;
  std::string hash;
  std::string version = kVersion;
  int L = 0;
  int K = 0;
  // J1: per replication values on the (r1, r2) grid {i/L}.
  std::vector<double> grid_r;                     // 0..1 in steps of 1/L
  std::vector<std::vector<std::vector<double>>> j1_vals;  // [i1][i2][rep]
  bool j2_available = false;  // (B, K) admits a three-level family
  std::vector<std::vector<double>> j2_vals;               // [i][rep]
  std::vector<std::pair<int, int>> j2_offsets;
  // Covariance summaries.
  double j1_var_full = 0.0;     // Var J1(1,1)
  double j1_var_se = 0.0;
  double j2_cov_probe = 0.0;    // E[J2(1) J2(1/3)]
  double j2_cov_probe_se = 0.0;
  double j2_var_full = 0.0;     // Var J2(1)
};

// The collapsed two-parameter family (j1, j1+K+m, j1+K+m).  The offset K is
// the campaign's gap parameter; it must exceed the admissibility gap, so the
// triples are checked against K-1 and the m = 0 column qualifies.
inline PartialSumReport run_partial_sums(const MCConfig& cfg, int L) {
  if (L < 1) throw std::invalid_argument("run_partial_sums: L < 1");
  if (cfg.K < 1) throw std::invalid_argument("run_partial_sums: K < 1");
  const int admissible_gap = cfg.K - 1;

  // Build the J1 and J2 triple lists.
  std::vector<std::array<int, 3>> triples;
  for (int j1 = 1; j1 <= L; ++j1)
    for (int m = 0; m < L; ++m) {
      const int j2 = j1 + cfg.K + m;
      triples.push_back({j1, j2, j2});
    }
  const auto offsets = admissible_offsets(cfg.B, cfg.K);
  for (int j1 = 2; j1 <= L; ++j1)
    for (const auto& [m1, m2] : offsets)
      triples.push_back({j1, j1 + cfg.K + m1, j1 + 2 * cfg.K + m1 + m2});
  const bool have_j2 = !offsets.empty() && L >= 2;

  MCConfig inner = cfg;
  inner.K = admissible_gap;
  inner.triples = triples;
  CampaignContext ctx(inner);
  MCResult mc = detail::run_campaign(ctx, /*studentized=*/false);

  PartialSumReport rep;
  rep.config_echo = mc.config_echo;
  rep.config_echo["L"] = L;
  rep.hash = config_hash(rep.config_echo);
  rep.L = L;
  rep.K = cfg.K;
  rep.j2_offsets = offsets;
  rep.grid_r.resize(L + 1);
  for (int i = 0; i <= L; ++i) rep.grid_r[i] = double(i) / L;

  // Assemble per-replication tables and partial sums.
  rep.j2_available = have_j2;
  rep.j1_vals.assign(L + 1, std::vector<std::vector<double>>(
                                L + 1, std::vector<double>(cfg.R, 0.0)));
  if (have_j2) rep.j2_vals.assign(L + 1, std::vector<double>(cfg.R, 0.0));
  const std::size_t n_j1 = std::size_t(L) * L;
  for (int r = 0; r < cfg.R; ++r) {
    IhatTableJ1 t1(L, cfg.K);
    std::size_t idx = 0;
    for (int j1 = 1; j1 <= L; ++j1)
      for (int m = 0; m < L; ++m) t1.at(j1, m) = mc.I_hat[idx++][r];
    for (int i1 = 0; i1 <= L; ++i1)
      for (int i2 = 0; i2 <= L; ++i2)
        rep.j1_vals[i1][i2][r] =
            partial_sum_j1(t1, rep.grid_r[i1], rep.grid_r[i2]);
    if (have_j2) {
      IhatTableJ2 t2(L, cfg.K, cfg.B);
      for (int j1 = 2; j1 <= L; ++j1)
        for (std::size_t o = 0; o < offsets.size(); ++o)
          t2.at(j1, o) =
              mc.I_hat[n_j1 + std::size_t(j1 - 2) * offsets.size() + o][r];
      for (int i = 0; i <= L; ++i)
        rep.j2_vals[i][r] = partial_sum_j2(t2, rep.grid_r[i]);
    }
  }

  const auto mj1 = summarize_moments(rep.j1_vals[L][L]);
  rep.j1_var_full = mj1.variance;
  rep.j1_var_se = mj1.variance * std::sqrt(2.0 / (cfg.R - 1.0)) *
                  std::sqrt(1.0 + std::max(0.0, mj1.excess_kurtosis) / 2.0);
  if (have_j2) {
    // E[J2(1) J2(1/3)] and Var J2(1).
    const int i_third = std::max(1, L / 3);
    CompensatedSum cov;
    for (int r = 0; r < cfg.R; ++r)
      cov.add(rep.j2_vals[L][r] * rep.j2_vals[i_third][r]);
    rep.j2_cov_probe = cov.value() / double(cfg.R);
    CompensatedSum cov2;
    for (int r = 0; r < cfg.R; ++r) {
      const double p = rep.j2_vals[L][r] * rep.j2_vals[i_third][r];
      cov2.add((p - rep.j2_cov_probe) * (p - rep.j2_cov_probe));
    }
    rep.j2_cov_probe_se =
        std::sqrt(cov2.value() / double(cfg.R) / double(cfg.R));
    rep.j2_var_full = summarize_moments(rep.j2_vals[L]).variance;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Power campaign

struct PowerArm {
  std::array<int, 3> triple{};
  double mean_I_hat = 0.0;
  double se = 0.0;
  double predicted_mean = 0.0;  // from the band-sum expectation
  bool detected = false;        // |mean| > 3 se
};

struct PowerReport {
  nlohmann::json config_echo;
  std::string hash;
  std::string version = kVersion;
  double f_nl_sampler = 0.0;
  double f_nl_local = 0.0;  // local-template amplitude: -f_nl_sampler / 3
  double spectrum_distortion = 0.0;  // measured sigma ratio drift at j3
  std::vector<PowerArm> arms;
  MCResult mc;
};

inline PowerReport run_power(const MCConfig& cfg) {
  if (cfg.f_nl == 0.0)
    throw std::invalid_argument("run_power: requires f_nl != 0");
  CampaignContext ctx(cfg);
  PowerReport rep;
  rep.mc = detail::run_campaign(ctx, /*studentized=*/false);
  rep.config_echo = rep.mc.config_echo;
  rep.hash = rep.mc.hash;
  rep.f_nl_sampler = cfg.f_nl;
  rep.f_nl_local = -cfg.f_nl / 3.0;
  for (std::size_t t = 0; t < cfg.triples.size(); ++t) {
    PowerArm arm;
    arm.triple = cfg.triples[t];
    const auto m = summarize_moments(rep.mc.I_hat[t]);
    arm.mean_I_hat = m.mean;
    arm.se = m.se_mean;
    arm.predicted_mean =
        expected_needlet_bispectrum(ctx.spectrum(), rep.f_nl_local,
                                    ctx.window(), arm.triple[0], arm.triple[1],
                                    arm.triple[2]) /
        std::sqrt(ctx.var_theory()[t]);
    arm.detected = std::abs(arm.mean_I_hat) > 3.0 * arm.se;
    rep.arms.push_back(arm);
  }
  // Spectrum distortion diagnostic: mean plug-in/model variance ratio at the
  // finest level (1 for the Gaussian model).
  int jmax = 0;
  for (const auto& t : cfg.triples) jmax = std::max(jmax, t[2]);
  const auto& ratios = rep.mc.sigma_ratio.at(jmax);
  rep.spectrum_distortion = summarize_moments(ratios).mean - 1.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Correlation decay report

struct DecayCurve {
  int j = 0;
  std::vector<double> theta;        // model curve grid
  std::vector<double> corr_model;
  std::vector<double> theta_mc;     // sampled grid-pair separations
  std::vector<double> corr_mc;      // empirical correlation there
  std::vector<double> corr_mc_model;
  std::vector<double> corr_mc_se;
  double fitted_exponent = 0.0;     // envelope slope in log(1 + B^j theta)
};

struct DecayReport {
  nlohmann::json config_echo;
  std::string hash;
  std::string version = kVersion;
  std::vector<DecayCurve> curves;
};

inline double fit_decay_exponent(const PowerSpectrum& spectrum,
                                 const NeedletWindow& w, int j,
                                 int n_theta = 600, int n_bins = 24) {
  const double bj = std::pow(w.band_ratio(), j);
  const double span = std::log(1.0 + bj * kPi / 2.0);
  std::vector<double> binmax(n_bins, 0.0);
  for (int i = 1; i <= n_theta; ++i) {
    const double th = (kPi / 2.0) * i / n_theta;
    const double c = std::abs(coefficient_correlation(spectrum, w, j, th));
    int b = int(std::log(1.0 + bj * th) / span * n_bins);
    if (b >= n_bins) b = n_bins - 1;
    binmax[b] = std::max(binmax[b], c);
  }
  std::vector<double> x, y;
  for (int b = 0; b < n_bins; ++b) {
    if (binmax[b] <= 1e-14) continue;
    x.push_back((b + 0.5) / n_bins * span);
    y.push_back(std::log(binmax[b]));
  }
  return -ls_slope(x, y);
}

inline DecayReport run_correlation_decay(const MCConfig& cfg,
                                         const std::vector<int>& js,
                                         int n_pairs = 12) {
  if (cfg.f_nl != 0.0)
    throw std::invalid_argument("run_correlation_decay: Gaussian only");
  MCConfig inner = cfg;
  inner.triples.clear();
  int jmax = 1;
  for (int j : js) jmax = std::max(jmax, j);
  for (int j : js) inner.triples.push_back({j, j, j});
  CampaignContext ctx(inner);

  DecayReport rep;
  to_json(rep.config_echo, inner);
  rep.config_echo["decay_levels"] = js;
  rep.hash = config_hash(rep.config_echo);

  // Pre-draw the fields once, reuse across levels.
  std::vector<CampaignContext::FieldLevels> fields(cfg.R);
  detail::parallel_for(cfg.R, detail::thread_count(cfg.threads), [&](int r) {
    fields[r] = ctx.analyze_field(ctx.sample_field(r));
  });

  for (int j : js) {
    DecayCurve c;
    c.j = j;
    for (int i = 0; i <= 80; ++i) {
      const double th = (kPi / 2.0) * i / 80.0;
      c.theta.push_back(th);
      c.corr_model.push_back(
          coefficient_correlation(ctx.spectrum(), ctx.window(), j, th));
    }
    const auto& g = ctx.grid(j);
    std::uint64_t pick = mix_key(cfg.seed, 0xdecaULL, std::uint64_t(j));
    for (int p = 0; p < n_pairs; ++p) {
      pick = mix_key(pick, p);
      const std::size_t ka = pick % g.size();
      const std::size_t kb = mix_key(pick, 1) % g.size();
      std::vector<double> va(cfg.R), vb(cfg.R);
      for (int r = 0; r < cfg.R; ++r) {
        va[r] = fields[r].bhat.at(j)[ka];
        vb[r] = fields[r].bhat.at(j)[kb];
      }
      const double th = geodesic_distance(g.point(ka), g.point(kb));
      const double emp = pearson_correlation(va, vb);
      const double model =
          coefficient_correlation(ctx.spectrum(), ctx.window(), j, th);
      c.theta_mc.push_back(th);
      c.corr_mc.push_back(emp);
      c.corr_mc_model.push_back(model);
      c.corr_mc_se.push_back((1.0 - model * model) / std::sqrt(double(cfg.R)));
    }
    c.fitted_exponent = fit_decay_exponent(ctx.spectrum(), ctx.window(), j);
    rep.curves.push_back(std::move(c));
  }
  return rep;
}

}  // namespace needlets
