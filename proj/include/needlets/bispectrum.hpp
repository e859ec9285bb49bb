#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "needlets/errors.hpp"
#include "needlets/harmonics.hpp"
#include "needlets/needlet_frame.hpp"
#include "needlets/spectrum.hpp"
#include "needlets/sphere_grid.hpp"
#include "needlets/stats.hpp"

#include <json.hpp>

namespace needlets {

enum class TripleCase { all_distinct, squeezed, equilateral };

// Frequency triple j1 <= j2 <= j3 with the cross-level parent maps that
// realize the nested-cell summation convention: the finest grid leads the
// sum, coarser indices are the nearest-cell parents of the chain.
struct BispectrumConfig {
  double B = 0.0;
  int j1 = -1, j2 = -1, j3 = -1;
  int K = 0;
  const CubatureGrid* g1 = nullptr;
  const CubatureGrid* g2 = nullptr;
  const CubatureGrid* g3 = nullptr;
  AssociationMap map32;  // j3 -> j2 parents, used when j2 < j3
  AssociationMap map21;  // j2 -> j1 parents, used when j1 < j2
  TripleCase triple_case = TripleCase::equilateral;

  std::size_t chain_k2(std::size_t k3) const {
    return (j2 < j3) ? std::size_t(map32.parent[k3]) : k3;
  }
  std::size_t chain_k1(std::size_t k2) const {
    return (j1 < j2) ? std::size_t(map21.parent[k2]) : k2;
  }

  // Variance-lower-bound admissibility: equilateral, or a level gap bigger
  // than K together with the triangle condition B^j1 + B^j2 >= B^j3.
  bool admissible() const {
    if (j1 == j2 && j2 == j3) return true;
    if (!(j1 + K < j2)) return false;
    return std::pow(B, j1) + std::pow(B, j2) >= std::pow(B, j3);
  }
};

inline BispectrumConfig make_bispectrum_config(const CubatureGrid& g1,
                                               const CubatureGrid& g2,
                                               const CubatureGrid& g3, int K) {
  if (g1.j < 0 || g2.j < 0 || g3.j < 0)
    throw std::invalid_argument("bispectrum config: grids must carry levels");
  if (!(g1.B == g2.B && g2.B == g3.B))
    throw std::invalid_argument("bispectrum config: mixed band ratios");
  if (!(g1.j <= g2.j && g2.j <= g3.j))
    throw std::invalid_argument("bispectrum config: need j1 <= j2 <= j3");
  if (K < 0) throw std::invalid_argument("bispectrum config: K < 0");
  BispectrumConfig c;
  c.B = g1.B;
  c.j1 = g1.j;
  c.j2 = g2.j;
  c.j3 = g3.j;
  c.K = K;
  c.g1 = &g1;
  c.g2 = &g2;
  c.g3 = &g3;
  if (c.j2 < c.j3) c.map32 = associate_levels(g3, g2);
  if (c.j1 < c.j2) c.map21 = associate_levels(g2, g1);
  if (c.j1 == c.j2 && c.j2 == c.j3)
    c.triple_case = TripleCase::equilateral;
  else if (c.j1 == c.j2 || c.j2 == c.j3)
    c.triple_case = TripleCase::squeezed;
  else
    c.triple_case = TripleCase::all_distinct;
  return c;
}

// Combinatorial weight of the k3 term.  In the collapsed case j1 < j2 = j3
// the coarse weight is spread over the fine points of its cell; otherwise the
// fine-point weight applies.
inline double h_weight(const BispectrumConfig& cfg, std::size_t k3) {
  if (cfg.j1 < cfg.j2 && cfg.j2 == cfg.j3) {
    const std::size_t k1 = cfg.chain_k1(k3);
    const std::int32_t count = cfg.map21.child_count[k1];
    if (count <= 0)
      throw degenerate_cell_error("h_weight: empty cell at coarse index " +
                                  std::to_string(k1));
    return std::pow(cfg.B, cfg.j2 - cfg.j1) *
           std::sqrt(cfg.g1->weight(k1)) / double(count);
  }
  return std::sqrt(cfg.g3->weight(k3));
}

struct BispectrumValue {
  double I = 0.0;
  double var_theory = std::numeric_limits<double>::quiet_NaN();
  double I_hat = std::numeric_limits<double>::quiet_NaN();
  double I_tilde = std::numeric_limits<double>::quiet_NaN();
  int j1 = -1, j2 = -1, j3 = -1;
  double B = 0.0;
  int K = 0;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Model variance of the statistic
//
// Band-sum form of the dominant pairing, evaluated with this grid family's
// constants:
//   var = D * (2 pi^3/3) / (N_j1 N_j2)
//       * sum_{l1 l2 l3} prod_i [ b^2(l_i/B^j_i) C_{l_i} (2 l_i + 1) ]
//         (3j0)^2 / (sigma_j1^2 sigma_j2^2 sigma_j3^2),
// where D counts the level-preserving pairings of the two coefficient
// triples: 6 when all levels coincide, 2 when exactly two do, 1 otherwise.

inline double theoretical_variance(const PowerSpectrum& spectrum,
                                   const NeedletWindow& w,
                                   const BispectrumConfig& cfg) {
  const double B = cfg.B;
  if (B != w.band_ratio())
    throw std::invalid_argument("theoretical_variance: window mismatch");
  const std::array<int, 3> js{cfg.j1, cfg.j2, cfg.j3};
  std::array<double, 3> sigma_sq{};
  std::array<std::vector<double>, 3> bsq;
  for (int i = 0; i < 3; ++i) {
    const int j = js[i];
    const int need = int(std::floor(std::pow(B, j + 1)));
    if (spectrum.lmax < need)
      throw std::invalid_argument("theoretical_variance: spectrum too short");
    const int lmax = w.band_lmax(j);
    bsq[i].assign(lmax + 1, 0.0);
    const double scale = std::pow(B, j);
    double band = 0.0;
    for (int l = 1; l <= lmax; ++l) {
      bsq[i][l] = w.b_sq(l / scale);
      band += (2.0 * l + 1.0) * bsq[i][l] * spectrum.cl[l];
    }
    if (!(band > 0.0))
      throw degenerate_variance_error(
          "theoretical_variance: spectrum vanishes in band j=" +
          std::to_string(j));
    sigma_sq[i] = band / double(grid_size_for_level(B, j));
  }

  double sum = 0.0;
  for (int l1 = w.band_lmin(cfg.j1); l1 < int(bsq[0].size()); ++l1) {
    if (bsq[0][l1] == 0.0) continue;
    const double t1 = bsq[0][l1] * spectrum.cl[l1] * (2.0 * l1 + 1.0);
    for (int l2 = w.band_lmin(cfg.j2); l2 < int(bsq[1].size()); ++l2) {
      if (bsq[1][l2] == 0.0) continue;
      const double t2 = t1 * bsq[1][l2] * spectrum.cl[l2] * (2.0 * l2 + 1.0);
      const int lo = std::max(w.band_lmin(cfg.j3), std::abs(l1 - l2));
      const int hi = std::min(int(bsq[2].size()) - 1, l1 + l2);
      for (int l3 = lo; l3 <= hi; ++l3) {
        if ((l1 + l2 + l3) % 2 != 0 || bsq[2][l3] == 0.0) continue;
        const double w0 = wigner_3j(l1, l2, l3, 0, 0, 0);
        if (w0 == 0.0) continue;
        sum += t2 * bsq[2][l3] * spectrum.cl[l3] * (2.0 * l3 + 1.0) * w0 * w0;
      }
    }
  }

  double D = 1.0;
  if (cfg.triple_case == TripleCase::equilateral)
    D = 6.0;
  else if (cfg.triple_case == TripleCase::squeezed)
    D = 2.0;
  const double n1 = double(grid_size_for_level(B, cfg.j1));
  const double n2 = double(grid_size_for_level(B, cfg.j2));
  double var = D * (2.0 * kPi * kPi * kPi / 3.0) / (n1 * n2) * sum /
               (sigma_sq[0] * sigma_sq[1] * sigma_sq[2]);

  // Collapsed case: the pairing that couples the coarse coefficients through
  // the cell averages of the fine-point variances.  The zero-sum identity
  // kills its constant part, but the latitude modulation of the weights
  // projects onto the coarse band when that band sits at very low l, which
  // is visible for j1 <= 2.  The term is an exact coarse-grid quadratic form
  // and cheap whenever the coarse grid is small.
  if (cfg.j1 < cfg.j2 && cfg.j2 == cfg.j3 && cfg.g1 != nullptr &&
      cfg.g1->size() <= 4500) {
    const CubatureGrid& g1 = *cfg.g1;
    const CubatureGrid& g3 = *cfg.g3;
    const int lmax1 = w.band_lmax(cfg.j1);
    const double scale1 = std::pow(B, cfg.j1);
    std::vector<double> kern(lmax1 + 1, 0.0);
    for (int l = 1; l <= lmax1; ++l)
      kern[l] =
          (2.0 * l + 1.0) * w.b_sq(l / scale1) * spectrum.cl[l] / kFourPi;
    // Cell averages of v_k = sigma_jk^2 / sigma_j^2 at the fine level.
    std::vector<double> cell_v(g1.size(), 0.0);
    const double fine_norm =
        double(g3.size()) / kFourPi;  // v_k = lambda_k * N / 4pi
    for (std::size_t k3 = 0; k3 < g3.size(); ++k3)
      cell_v[cfg.map21.parent[k3]] += g3.weight(k3) * fine_norm;
    for (std::size_t k1 = 0; k1 < g1.size(); ++k1) {
      if (cfg.map21.child_count[k1] <= 0)
        throw degenerate_cell_error("theoretical_variance: empty cell");
      cell_v[k1] /= double(cfg.map21.child_count[k1]);
    }
    const double bpow = std::pow(B, 2.0 * (cfg.j2 - cfg.j1));
    double corr = 0.0;
    for (std::size_t a = 0; a < g1.size(); ++a) {
      const double wa = std::sqrt(g1.weight(a)) * cell_v[a];
      const auto pa = g1.point(a);
      for (std::size_t b = 0; b < g1.size(); ++b) {
        const double wb = std::sqrt(g1.weight(b)) * cell_v[b];
        const double x = std::cos(geodesic_distance(pa, g1.point(b)));
        corr += wa * wb * std::sqrt(g1.weight(a) * g1.weight(b)) *
                legendre_series(kern, x);
      }
    }
    var += bpow * corr / sigma_sq[0];
  }
  return var;
}

// ---------------------------------------------------------------------------
// The statistic.  Inputs are normalized coefficients beta_hat = beta/sigma_j;
// the single pass over the finest grid follows the parent chains.

inline BispectrumValue needlet_bispectrum(const std::vector<double>& bhat1,
                                          const std::vector<double>& bhat2,
                                          const std::vector<double>& bhat3,
                                          const BispectrumConfig& cfg,
                                          double var_theory) {
  if (bhat1.size() != cfg.g1->size() || bhat2.size() != cfg.g2->size() ||
      bhat3.size() != cfg.g3->size())
    throw std::invalid_argument("needlet_bispectrum: size mismatch");
  CompensatedSum acc;
  const std::size_t n3 = cfg.g3->size();
  for (std::size_t k3 = 0; k3 < n3; ++k3) {
    const std::size_t k2 = cfg.chain_k2(k3);
    const std::size_t k1 = cfg.chain_k1(k2);
    acc.add(bhat1[k1] * bhat2[k2] * bhat3[k3] * h_weight(cfg, k3));
  }
  BispectrumValue v;
  v.I = acc.value();
  v.var_theory = var_theory;
  if (var_theory > 0.0)
    v.I_hat = v.I / std::sqrt(var_theory);
  else if (var_theory == 0.0)
    v.I_hat = std::numeric_limits<double>::quiet_NaN();
  v.j1 = cfg.j1;
  v.j2 = cfg.j2;
  v.j3 = cfg.j3;
  v.B = cfg.B;
  v.K = cfg.K;
  return v;
}

inline BispectrumValue needlet_bispectrum(const std::vector<double>& bhat1,
                                          const std::vector<double>& bhat2,
                                          const std::vector<double>& bhat3,
                                          const BispectrumConfig& cfg,
                                          const PowerSpectrum& spectrum,
                                          const NeedletWindow& w) {
  return needlet_bispectrum(bhat1, bhat2, bhat3, cfg,
                            theoretical_variance(spectrum, w, cfg));
}

// Studentized variant: identical accumulation with the plug-in level
// variances replacing the model ones.
inline double studentized_bispectrum(const NeedletCoefficients& b1,
                                     const NeedletCoefficients& b2,
                                     const NeedletCoefficients& b3,
                                     const BispectrumConfig& cfg) {
  const double s1 = estimate_sigma(b1);
  const double s2 = estimate_sigma(b2);
  const double s3 = estimate_sigma(b3);
  if (!(s1 > 0.0) || !(s2 > 0.0) || !(s3 > 0.0))
    throw degenerate_variance_error(
        "studentized_bispectrum: zero plug-in variance");
  const double inv = 1.0 / std::sqrt(s1 * s2 * s3);
  CompensatedSum acc;
  const std::size_t n3 = cfg.g3->size();
  for (std::size_t k3 = 0; k3 < n3; ++k3) {
    const std::size_t k2 = cfg.chain_k2(k3);
    const std::size_t k1 = cfg.chain_k1(k2);
    acc.add(b1.beta[k1] * b2.beta[k2] * b3.beta[k3] * h_weight(cfg, k3));
  }
  return acc.value() * inv;
}

// ---------------------------------------------------------------------------
// Partial-sum processes
//
// J1 sums the collapsed family (j1, j1+K+m, j1+K+m) for j1 = 1..floor(L r1)
// and m over floor(L r2) offsets, scaled by 1/L.  J2 sums the admissible
// three-level family (j1, j1+K+m1, j1+2K+m1+m2) for j1 = 2..floor(L r).  The
// index counts follow the processes' exact finite-L covariances
// (floor(Lr1) * floor(Lr2) terms for J1, floor(Lr) - 1 blocks for J2).

struct IhatTableJ1 {
  int L = 0;
  int K = 0;
  std::vector<double> values;  // (j1-1)*L + m, j1 = 1..L, m = 0..L-1

  IhatTableJ1() = default;
  IhatTableJ1(int L_, int K_)
      : L(L_), K(K_),
        values(std::size_t(L_) * L_,
               std::numeric_limits<double>::quiet_NaN()) {}
  double& at(int j1, int m) { return values[idx(j1, m)]; }
  double at(int j1, int m) const { return values[idx(j1, m)]; }

 private:
  std::size_t idx(int j1, int m) const {
    if (j1 < 1 || j1 > L || m < 0 || m >= L)
      throw std::invalid_argument("J1 table index out of range");
    return std::size_t(j1 - 1) * L + m;
  }
};

inline double partial_sum_j1(const IhatTableJ1& t, double r1, double r2) {
  if (r1 < 0.0 || r1 > 1.0 || r2 < 0.0 || r2 > 1.0)
    throw std::invalid_argument("partial_sum_j1: r out of [0,1]");
  const int n1 = int(std::floor(t.L * r1));
  const int n2 = int(std::floor(t.L * r2));
  CompensatedSum s;
  for (int j1 = 1; j1 <= n1; ++j1)
    for (int m = 0; m < n2; ++m) {
      const double v = t.at(j1, m);
      if (std::isnan(v))
        throw std::invalid_argument("partial_sum_j1: missing table entry");
      s.add(v);
    }
  return s.value() / double(t.L);
}

// Offsets (m1, m2) keeping the triangle condition
// B^j1 + B^(j1+K+m1) >= B^(j1+2K+m1+m2); dividing by B^j1 removes j1.
inline std::vector<std::pair<int, int>> admissible_offsets(double B, int K) {
  if (!(B > 1.0)) throw std::invalid_argument("admissible_offsets: B <= 1");
  if (K < 1)
    throw std::invalid_argument(
        "admissible_offsets: the three-level family needs K >= 1");
  std::vector<std::pair<int, int>> out;
  for (int m1 = 0; m1 <= 64; ++m1) {
    if (!(1.0 + std::pow(B, K + m1) >= std::pow(B, 2 * K + m1))) break;
    for (int m2 = 0; m2 <= 64; ++m2) {
      if (!(1.0 + std::pow(B, K + m1) >= std::pow(B, 2 * K + m1 + m2))) break;
      out.emplace_back(m1, m2);
      if (m2 == 64)
        throw capacity_error("admissible_offsets: m2 range exceeds 64");
    }
    if (m1 == 64) throw capacity_error("admissible_offsets: m1 range exceeds 64");
  }
  return out;
}

struct IhatTableJ2 {
  int L = 0;
  int K = 0;
  double B = 0.0;
  std::vector<std::pair<int, int>> offsets;  // admissible (m1, m2)
  std::vector<double> values;                // (j1-2)*offsets.size() + o

  IhatTableJ2() = default;
  IhatTableJ2(int L_, int K_, double B_)
      : L(L_), K(K_), B(B_), offsets(admissible_offsets(B_, K_)) {
    if (offsets.empty())
      throw std::invalid_argument(
          "IhatTableJ2: no admissible offsets for this (B, K)");
    values.assign(std::size_t(std::max(0, L - 1)) * offsets.size(),
                  std::numeric_limits<double>::quiet_NaN());
  }
  double& at(int j1, std::size_t o) { return values[idx(j1, o)]; }
  double at(int j1, std::size_t o) const { return values[idx(j1, o)]; }

 private:
  std::size_t idx(int j1, std::size_t o) const {
    if (j1 < 2 || j1 > L || o >= offsets.size())
      throw std::invalid_argument("J2 table index out of range");
    return std::size_t(j1 - 2) * offsets.size() + o;
  }
};

inline double partial_sum_j2(const IhatTableJ2& t, double r) {
  if (r < 0.0 || r > 1.0)
    throw std::invalid_argument("partial_sum_j2: r out of [0,1]");
  const int n = int(std::floor(t.L * r));
  CompensatedSum s;
  for (int j1 = 2; j1 <= n; ++j1)
    for (std::size_t o = 0; o < t.offsets.size(); ++o) {
      const double v = t.at(j1, o);
      if (std::isnan(v))
        throw std::invalid_argument("partial_sum_j2: missing table entry");
      s.add(v);
    }
  return s.value() /
         std::sqrt(double(t.L) * double(t.offsets.size()));
}

// ---------------------------------------------------------------------------
// Result record (JSON lines)

inline nlohmann::json bispectrum_record(const BispectrumValue& v) {
  nlohmann::json j{{"triple", {v.j1, v.j2, v.j3}},
                   {"B", v.B},
                   {"K", v.K},
                   {"seed", v.seed},
                   {"I", v.I},
                   {"var_theory", v.var_theory},
                   {"I_hat", v.I_hat}};
  if (std::isnan(v.I_tilde))
    j["I_tilde"] = nullptr;
  else
    j["I_tilde"] = v.I_tilde;
  return j;
}

}  // namespace needlets
