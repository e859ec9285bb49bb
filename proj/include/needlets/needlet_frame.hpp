#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "needlets/errors.hpp"
#include "needlets/harmonics.hpp"
#include "needlets/spectrum.hpp"
#include "needlets/sphere_grid.hpp"

namespace needlets {

// ---------------------------------------------------------------------------
// Window: phi is the normalized integral of the compact bump
// t -> exp(-1/(1-t^2)), reparameterized so that phi = 1 on [0, 1/B] and
// phi = 0 on [1, inf); b^2(x) = phi(x/B) - phi(x).
//
// The cumulative bump integral is tabulated per cell with 16-point
// Gauss-Legendre; an evaluation integrates from the nearest cell edge, so
// there is no interpolation error beyond the quadrature itself.

class NeedletWindow {
 public:
  NeedletWindow() = default;

  NeedletWindow(double B, double eval_tolerance) : B_(B), tol_(eval_tolerance) {
    if (!(B > 1.0)) throw std::invalid_argument("window: B must be > 1");
    if (!(eval_tolerance > 0.0) || eval_tolerance > 1e-6)
      throw std::invalid_argument("window: tolerance must be in (0, 1e-6]");
    int cells = 1024;
    build_table(cells);
    // Refine until the total integral is stable to tol/10.
    for (;;) {
      const double z_prev = total_;
      cells *= 2;
      build_table(cells);
      if (std::abs(total_ - z_prev) <= tol_ / 10.0 || cells >= (1 << 20))
        break;
    }
  }

  double band_ratio() const { return B_; }
  double eval_tolerance() const { return tol_; }

  // Smooth cutoff: 1 on [0, 1/B], 0 on [1, inf), strictly decreasing between.
  double phi(double x) const {
    x = std::abs(x);
    if (x <= 1.0 / B_) return 1.0;
    if (x >= 1.0) return 0.0;
    const double u = 1.0 - 2.0 * (x - 1.0 / B_) / (1.0 - 1.0 / B_);
    return ramp(u);
  }

  double b_sq(double x) const {
    x = std::abs(x);
    if (x <= 1.0 / B_ || x >= B_) return 0.0;
    const double v = phi(x / B_) - phi(x);
    return v > 0.0 ? v : 0.0;
  }

  double b(double x) const { return std::sqrt(b_sq(x)); }

  // b(l / B^j) for l = 0..lmax.
  std::vector<double> band_profile(int j, int lmax) const {
    std::vector<double> out(lmax + 1, 0.0);
    const double scale = std::pow(B_, j);
    for (int l = 0; l <= lmax; ++l) out[l] = b(l / scale);
    return out;
  }

  // Integer band actually touched at level j: l with b(l/B^j) != 0.
  int band_lmin(int j) const {
    return int(std::floor(std::pow(B_, j - 1))) + 1;
  }
  int band_lmax(int j) const {
    const double top = std::pow(B_, j + 1);
    const double fl = std::floor(top);
    return int(fl == top ? fl - 1 : fl);
  }

 private:
  static double bump(double t) {
    const double s = 1.0 - t * t;
    return s > 0.0 ? std::exp(-1.0 / s) : 0.0;
  }

  void build_table(int cells) {
    cells_ = cells;
    h_ = 2.0 / cells;
    prefix_.assign(cells + 1, 0.0);
    for (int c = 0; c < cells; ++c) {
      const double a = -1.0 + c * h_;
      prefix_[c + 1] = prefix_[c] + gl16(a, a + h_);
    }
    total_ = prefix_[cells];
  }

  static double gl16(double a, double b) {
    static const double xs[8] = {
        0.0950125098376374402, 0.2816035507792589132, 0.4580167776572273863,
        0.6178762444026437484, 0.7554044083550030339, 0.8656312023878317439,
        0.9445750230732325761, 0.9894009349916499326};
    static const double ws[8] = {
        0.1894506104550684963, 0.1826034150449235889, 0.1691565193950025382,
        0.1495959888165767320, 0.1246289712555338720, 0.0951585116824927848,
        0.0622535239386478929, 0.0271524594117540949};
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < 8; ++i)
      s += ws[i] * (bump(mid - half * xs[i]) + bump(mid + half * xs[i]));
    return s * half;
  }

  // Normalized integral of the bump from -1 to u.
  double ramp(double u) const {
    if (u <= -1.0) return 0.0;
    if (u >= 1.0) return 1.0;
    const int c = std::min(int((u + 1.0) / h_), cells_ - 1);
    const double a = -1.0 + c * h_;
    return (prefix_[c] + gl16(a, u)) / total_;
  }

  double B_ = 0.0;
  double tol_ = 0.0;
  int cells_ = 0;
  double h_ = 0.0;
  double total_ = 0.0;
  std::vector<double> prefix_;
};

inline NeedletWindow build_window(double B, double eval_tolerance = 1e-12) {
  return NeedletWindow(B, eval_tolerance);
}

// ---------------------------------------------------------------------------
// Needlet coefficients of a field at one level

struct NeedletCoefficients {
  int j = -1;
  const CubatureGrid* grid = nullptr;
  std::vector<double> beta;
  double sigma_j_sq = 0.0;    // model variance, filled from a spectrum
  double sigma_hat_sq = 0.0;  // plug-in estimate, filled by estimate_sigma
};

// Pointwise needlet function value, via the addition theorem.
inline double needlet_eval(const NeedletWindow& w, const CubatureGrid& grid,
                           std::size_t k, const SphericalPoint& x) {
  if (k >= grid.size()) throw std::invalid_argument("needlet_eval: bad index");
  if (grid.j < 0) throw std::invalid_argument("needlet_eval: grid has no level");
  const int lmax = w.band_lmax(grid.j);
  std::vector<double> c(lmax + 1, 0.0);
  const double scale = std::pow(w.band_ratio(), grid.j);
  for (int l = 0; l <= lmax; ++l)
    c[l] = w.b(l / scale) * (2.0 * l + 1.0) / kFourPi;
  const double d = geodesic_distance(grid.point(k), x);
  return std::sqrt(grid.weight(k)) * legendre_series(c, std::cos(d));
}

// beta_jk = sqrt(lambda_jk) sum_l b(l/B^j) sum_m a_lm Y_lm(xi_jk), computed
// in harmonic space (band-weighted synthesis), never by pixel integration.
inline NeedletCoefficients needlet_analyze(const HarmonicCoefficients& coeffs,
                                           const NeedletWindow& w,
                                           const CubatureGrid& grid) {
  if (grid.j < 0 || grid.B != w.band_ratio())
    throw std::invalid_argument("needlet_analyze: grid/window mismatch");
  const int j = grid.j;
  const int need = int(std::floor(std::pow(w.band_ratio(), j + 1)));
  if (coeffs.lmax() < need)
    throw std::invalid_argument(
        "needlet_analyze: coefficients lmax " + std::to_string(coeffs.lmax()) +
        " below band top " + std::to_string(need));
  const int lmax = std::min(coeffs.lmax(), w.band_lmax(j));
  HarmonicCoefficients banded(lmax);
  const std::vector<double> bl = w.band_profile(j, lmax);
  for (int l = 0; l <= lmax; ++l) {
    if (bl[l] == 0.0) continue;
    for (int m = 0; m <= l; ++m) banded.at(l, m) = bl[l] * coeffs.at(l, m);
  }
  NeedletCoefficients out;
  out.j = j;
  out.grid = &grid;
  out.beta = sht_synthesize(banded, grid);
  for (std::size_t k = 0; k < out.beta.size(); ++k)
    out.beta[k] *= std::sqrt(grid.weight(k));
  return out;
}

// ---------------------------------------------------------------------------
// Model variances of the coefficients

struct LevelVariance {
  double sigma_j_sq = 0.0;
  std::vector<double> sigma_jk_sq;
};

// sigma_jk^2 = lambda_jk sum_l (2l+1)/(4pi) b^2(l/B^j) C_l and its grid
// average sigma_j^2 = (4pi/N_j) * same band sum.
inline LevelVariance needlet_level_variance(const PowerSpectrum& spectrum,
                                            const NeedletWindow& w, int j,
                                            const CubatureGrid& grid) {
  const int need = int(std::floor(std::pow(w.band_ratio(), j + 1)));
  if (spectrum.lmax < need)
    throw std::invalid_argument("needlet_level_variance: spectrum too short");
  const int lmax = std::min(spectrum.lmax, w.band_lmax(j));
  const double scale = std::pow(w.band_ratio(), j);
  double band = 0.0;
  for (int l = 1; l <= lmax; ++l)
    band += (2.0 * l + 1.0) * w.b_sq(l / scale) * spectrum.cl[l];
  if (!(band > 0.0))
    throw degenerate_variance_error(
        "needlet_level_variance: spectrum vanishes in band j=" +
        std::to_string(j));
  LevelVariance v;
  v.sigma_j_sq = band / double(grid.size());
  v.sigma_jk_sq.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k)
    v.sigma_jk_sq[k] = grid.weight(k) * band / kFourPi;
  return v;
}

// Model correlation of two coefficients at one level, as a function of the
// geodesic separation.
inline double coefficient_correlation(const PowerSpectrum& spectrum,
                                      const NeedletWindow& w, int j,
                                      double theta) {
  const int need = int(std::floor(std::pow(w.band_ratio(), j + 1)));
  if (spectrum.lmax < need)
    throw std::invalid_argument("coefficient_correlation: spectrum too short");
  const int lmax = std::min(spectrum.lmax, w.band_lmax(j));
  const double scale = std::pow(w.band_ratio(), j);
  std::vector<double> c(lmax + 1, 0.0);
  double norm = 0.0;
  for (int l = 1; l <= lmax; ++l) {
    c[l] = (2.0 * l + 1.0) * w.b_sq(l / scale) * spectrum.cl[l];
    norm += c[l];
  }
  if (!(norm > 0.0))
    throw degenerate_variance_error(
        "coefficient_correlation: spectrum vanishes in band");
  return legendre_series(c, std::cos(theta)) / norm;
}

// Plug-in level variance estimate: plain average of squared coefficients.
inline double estimate_sigma(const NeedletCoefficients& nc) {
  if (nc.beta.empty()) throw std::invalid_argument("estimate_sigma: empty");
  double s = 0.0;
  for (double b : nc.beta) s += b * b;
  return s / double(nc.beta.size());
}

// ---------------------------------------------------------------------------
// Coefficient dump: "j,k,theta,phi,weight,beta"

inline void write_needlet_csv(const NeedletCoefficients& nc, double B,
                              const std::string& spectrum_ref,
                              std::ostream& os) {
  os << "# needlet v1 B=" << B << " j=" << nc.j << " spectrum=" << spectrum_ref
     << "\n";
  os << "j,k,theta,phi,weight,beta\n";
  char buf[160];
  for (std::size_t k = 0; k < nc.beta.size(); ++k) {
    const SphericalPoint p = nc.grid->point(k);
    std::snprintf(buf, sizeof buf, "%d,%zu,%.17g,%.17g,%.17g,%.17g\n", nc.j, k,
                  p.theta, p.phi, nc.grid->weight(k), nc.beta[k]);
    os << buf;
  }
}

}  // namespace needlets
