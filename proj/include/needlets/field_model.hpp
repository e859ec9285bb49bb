#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "needlets/errors.hpp"
#include "needlets/harmonics.hpp"
#include "needlets/needlet_frame.hpp"
#include "needlets/rng.hpp"
#include "needlets/spectrum.hpp"
#include "needlets/sphere_grid.hpp"

namespace needlets {

// ---------------------------------------------------------------------------
// Gaussian sampling

// a_l0 ~ N(0, C_l) real; for m > 0 the real and imaginary parts are
// independent N(0, C_l/2).  Each (l, m) draws from its own counter-derived
// stream, so the output is independent of evaluation order.
inline HarmonicCoefficients sample_gaussian_alm(const PowerSpectrum& spectrum,
                                                std::uint64_t seed) {
  HarmonicCoefficients a(spectrum.lmax);
  for (int l = 1; l <= spectrum.lmax; ++l) {
    const double sd = std::sqrt(spectrum.cl[l]);
    if (sd == 0.0) continue;
    double z0 = 0.0, z1 = 0.0;
    normal_pair(seed, std::uint64_t(l), 0, 0x0a10ULL, z0, z1);
    a.at(l, 0) = {sd * z0, 0.0};
    const double sdh = sd / std::sqrt(2.0);
    for (int m = 1; m <= l; ++m) {
      normal_pair(seed, std::uint64_t(l), std::uint64_t(m), 0x0a1aULL, z0, z1);
      a.at(l, m) = {sdh * z0, sdh * z1};
    }
  }
  return a;
}

// Mean square of the band-limited Gaussian field, E T^2 = sum (2l+1) C_l/4pi.
inline double field_mean_square(const PowerSpectrum& spectrum) {
  double s = 0.0;
  for (int l = 1; l <= spectrum.lmax; ++l)
    s += (2.0 * l + 1.0) * spectrum.cl[l];
  return s / kFourPi;
}

// Local quadratic model: T = T_G + f_nl (T_G^2 - E T_G^2) formed pointwise on
// the work grid and re-analyzed to the base band.  The subtraction uses the
// model value of E T_G^2, so f_nl = 0 reduces to the Gaussian sampler exactly
// (up to transform round-off).
//
// To leading order in f_nl the induced reduced bispectrum is
//   2 f_nl (C_{l1} C_{l2} + C_{l1} C_{l3} + C_{l2} C_{l3}),
// i.e. the local shape with amplitude f_sw = -f_nl/3 in the convention of
// reduced_bispectrum_sw below.
inline HarmonicCoefficients sample_local_ng(const NonGaussianSpec& spec,
                                            std::uint64_t seed,
                                            const CubatureGrid& work_grid) {
  if (work_grid.lmax < 2 * spec.base.lmax)
    throw std::invalid_argument(
        "sample_local_ng: work grid must be exact to 2*lmax");
  HarmonicCoefficients g = sample_gaussian_alm(spec.base, seed);
  std::vector<double> t = sht_synthesize(g, work_grid);
  const double mean_sq = field_mean_square(spec.base);
  for (double& v : t) v += spec.f_nl * (v * v - mean_sq);
  return sht_analyze(work_grid, t, spec.base.lmax);
}

// ---------------------------------------------------------------------------
// Reduced bispectrum of the local model

inline double reduced_bispectrum_sw(const PowerSpectrum& base, double f_nl,
                                    int l1, int l2, int l3) {
  const double c1 = base.at(l1), c2 = base.at(l2), c3 = base.at(l3);
  return -6.0 * f_nl * (c1 * c2 + c1 * c3 + c2 * c3);
}

// ---------------------------------------------------------------------------
// Expected needlet bispectrum under the local reduced bispectrum
//
// The band sum is
//   sum_{l1 l2 l3} b(l1/B^j1) b(l2/B^j2) b(l3/B^j3) b_red(l1,l2,l3)
//     (2l1+1)(2l2+1)(2l3+1)/(4pi) (3j0)^2 / (sigma_j1 sigma_j2 sigma_j3).
// The leading constant depends on the cubature family through the level
// point counts; for these grids it is B^(j2-j1) 4pi/N_j2 when j1 < j2 = j3
// and pi^3 / (2 sqrt(N_j1 N_j2)) otherwise.

namespace detail {

inline double band_moment(const PowerSpectrum& s, const NeedletWindow& w,
                          int j) {
  const int lmax = std::min(s.lmax, w.band_lmax(j));
  const double scale = std::pow(w.band_ratio(), j);
  double band = 0.0;
  for (int l = 1; l <= lmax; ++l)
    band += (2.0 * l + 1.0) * w.b_sq(l / scale) * s.cl[l];
  return band;
}

inline double sigma_level(const PowerSpectrum& s, const NeedletWindow& w,
                          int j) {
  const double band = band_moment(s, w, j);
  if (!(band > 0.0))
    throw degenerate_variance_error("level variance vanishes at j=" +
                                    std::to_string(j));
  return band / double(grid_size_for_level(w.band_ratio(), j));
}

}  // namespace detail

inline double expected_needlet_bispectrum(const PowerSpectrum& base,
                                          double f_nl, const NeedletWindow& w,
                                          int j1, int j2, int j3) {
  if (!(j1 <= j2 && j2 <= j3))
    throw std::invalid_argument("expected_needlet_bispectrum: need j1<=j2<=j3");
  const double B = w.band_ratio();
  if (base.lmax < int(std::floor(std::pow(B, j3 + 1))))
    throw std::invalid_argument("expected_needlet_bispectrum: spectrum short");
  if (f_nl == 0.0) return 0.0;
  const double s1 = std::sqrt(detail::sigma_level(base, w, j1));
  const double s2 = std::sqrt(detail::sigma_level(base, w, j2));
  const double s3 = std::sqrt(detail::sigma_level(base, w, j3));

  const std::vector<double> b1 = w.band_profile(j1, w.band_lmax(j1));
  const std::vector<double> b2 = w.band_profile(j2, w.band_lmax(j2));
  const std::vector<double> b3 = w.band_profile(j3, w.band_lmax(j3));

  double sum = 0.0;
  for (int l1 = w.band_lmin(j1); l1 <= w.band_lmax(j1); ++l1) {
    if (b1[l1] == 0.0) continue;
    for (int l2 = w.band_lmin(j2); l2 <= w.band_lmax(j2); ++l2) {
      if (b2[l2] == 0.0) continue;
      const int lo = std::max(w.band_lmin(j3), std::abs(l1 - l2));
      const int hi = std::min(w.band_lmax(j3), l1 + l2);
      for (int l3 = lo; l3 <= hi; ++l3) {
        if ((l1 + l2 + l3) % 2 != 0 || b3[l3] == 0.0) continue;
        const double w0 = wigner_3j(l1, l2, l3, 0, 0, 0);
        if (w0 == 0.0) continue;
        sum += b1[l1] * b2[l2] * b3[l3] *
               reduced_bispectrum_sw(base, f_nl, l1, l2, l3) *
               (2.0 * l1 + 1.0) * (2.0 * l2 + 1.0) * (2.0 * l3 + 1.0) * w0 *
               w0;
      }
    }
  }
  sum /= kFourPi * s1 * s2 * s3;

  const double n1 = double(grid_size_for_level(B, j1));
  const double n2 = double(grid_size_for_level(B, j2));
  const double pref = (j1 < j2 && j2 == j3)
                          ? std::pow(B, j2 - j1) * kFourPi / n2
                          : kPi * kPi * kPi / (2.0 * std::sqrt(n1 * n2));
  return pref * sum;
}

}  // namespace needlets
