#pragma once

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "needlets/errors.hpp"
#include "needlets/sphere_grid.hpp"

namespace needlets {

inline constexpr int kMaxWignerL = 1500;

// ---------------------------------------------------------------------------
// Legendre polynomials

inline double legendre_p(int l, double x) {
  if (l < 0) throw std::invalid_argument("legendre_p: l must be >= 0");
  if (std::abs(x) > 1.0) throw std::invalid_argument("legendre_p: |x| > 1");
  double p0 = 1.0, p1 = x;
  if (l == 0) return p0;
  for (int k = 1; k < l; ++k) {
    const double p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// Clenshaw evaluation of sum_l c_l P_l(x).
inline double legendre_series(const std::vector<double>& c, double x) {
  double b1 = 0.0, b2 = 0.0;
  for (int l = int(c.size()) - 1; l >= 1; --l) {
    const double a = (2.0 * l + 1.0) / (l + 1.0);
    const double g = (l + 1.0) / (l + 2.0);
    const double b0 = c[l] + a * x * b1 - g * b2;
    b2 = b1;
    b1 = b0;
  }
  return (c.empty() ? 0.0 : c[0]) + x * b1 - 0.5 * b2;
}

namespace detail {

// Orthonormal associated Legendre column: out[l-m] = Ptilde_lm(cos theta) for
// l = m..lmax, such that Y_lm = Ptilde_lm * exp(i m phi).  Includes the
// Condon-Shortley phase.  Standard upward recurrence in l at fixed m with the
// normalization applied on the fly.
inline void alf_column(int m, int lmax, double ct, double st, double* out) {
  double pmm = 1.0 / std::sqrt(kFourPi);
  for (int i = 1; i <= m; ++i)
    pmm *= -st * std::sqrt((2.0 * i + 1.0) / (2.0 * i));
  out[0] = pmm;
  if (lmax == m) return;
  double plm1 = pmm;
  double pl = ct * std::sqrt(2.0 * m + 3.0) * pmm;
  out[1] = pl;
  double alm1 = std::sqrt(double(2 * m + 3));
  for (int l = m + 2; l <= lmax; ++l) {
    const double al =
        std::sqrt((4.0 * l * l - 1.0) / (double(l - m) * double(l + m)));
    const double p = al * (ct * pl - plm1 / alm1);
    plm1 = pl;
    pl = p;
    alm1 = al;
    out[l - m] = p;
  }
}

}  // namespace detail

inline std::complex<double> sph_harm(int l, int m, const SphericalPoint& p) {
  if (l < 0 || std::abs(m) > l)
    throw std::invalid_argument("sph_harm: need l >= 0 and |m| <= l");
  const int ma = std::abs(m);
  std::vector<double> col(l - ma + 1);
  detail::alf_column(ma, l, std::cos(p.theta), std::sin(p.theta), col.data());
  const double pt = col[l - ma];
  std::complex<double> y =
      pt * std::polar(1.0, ma * p.phi);
  if (m < 0) y = (ma % 2 ? -1.0 : 1.0) * std::conj(y);
  return y;
}

// ---------------------------------------------------------------------------
// Harmonic coefficients (m >= 0 stored; a_{l,-m} = (-1)^m conj(a_{lm}))

class HarmonicCoefficients {
 public:
  HarmonicCoefficients() = default;
  explicit HarmonicCoefficients(int lmax)
      : lmax_(lmax), a_(std::size_t(lmax + 1) * (lmax + 2) / 2) {
    if (lmax < 0) throw std::invalid_argument("lmax must be >= 0");
  }

  int lmax() const { return lmax_; }

  std::complex<double>& at(int l, int m) { return a_[index(l, m)]; }
  const std::complex<double>& at(int l, int m) const { return a_[index(l, m)]; }

  // Any m, the reality convention applied for m < 0.
  std::complex<double> get(int l, int m) const {
    if (m >= 0) return a_[index(l, m)];
    const std::complex<double> v = std::conj(a_[index(l, -m)]);
    return (m % 2 ? -v : v);
  }

  void enforce_reality() {
    for (int l = 0; l <= lmax_; ++l) at(l, 0).imag(0.0);
  }

  const std::vector<std::complex<double>>& storage() const { return a_; }
  std::vector<std::complex<double>>& storage() { return a_; }

 private:
  std::size_t index(int l, int m) const {
    if (l < 0 || l > lmax_ || m < 0 || m > l)
      throw std::invalid_argument("harmonic index out of range");
    return std::size_t(l) * (l + 1) / 2 + m;
  }
  int lmax_ = -1;
  std::vector<std::complex<double>> a_;
};

// ---------------------------------------------------------------------------
// Transforms on cubature grids

// a_lm = sum_k lambda_k f_k conj(Y_lm(xi_k)).  Exact for band-limited f when
// f and the requested band both fit inside the rule: 2*lmax <= grid.lmax.
inline HarmonicCoefficients sht_analyze(const CubatureGrid& g,
                                        const std::vector<double>& values,
                                        int lmax) {
  if (values.size() != g.size())
    throw std::invalid_argument("sht_analyze: value count != grid size");
  if (2 * lmax > g.lmax)
    throw std::invalid_argument("sht_analyze: need 2*lmax <= grid.lmax");
  HarmonicCoefficients out(lmax);
  const int nt = g.n_theta, np = g.n_phi;
  // Ring-wise Fourier sums F_m(i) = sum_q f(i,q) exp(-i m phi_q).
  std::vector<std::complex<double>> F(std::size_t(nt) * (lmax + 1));
  for (int i = 0; i < nt; ++i) {
    const double* f = values.data() + std::size_t(i) * np;
    for (int m = 0; m <= lmax; ++m) {
      const std::complex<double> w = std::polar(1.0, -2.0 * kPi * m / np);
      std::complex<double> acc{0.0, 0.0}, ph{1.0, 0.0};
      for (int q = 0; q < np; ++q) {
        acc += f[q] * ph;
        ph *= w;
      }
      F[std::size_t(i) * (lmax + 1) + m] = acc;
    }
  }
  std::vector<double> col(lmax + 1);
  for (int m = 0; m <= lmax; ++m) {
    for (int i = 0; i < nt; ++i) {
      const double th = g.ring_theta[i];
      detail::alf_column(m, lmax, std::cos(th), std::sin(th), col.data());
      const std::complex<double> fm =
          g.ring_weight[i] * F[std::size_t(i) * (lmax + 1) + m];
      for (int l = m; l <= lmax; ++l) out.at(l, m) += col[l - m] * fm;
    }
  }
  out.enforce_reality();
  return out;
}

// f(xi_k) = sum_lm a_lm Y_lm(xi_k), returned per grid point (real field).
inline std::vector<double> sht_synthesize(const HarmonicCoefficients& c,
                                          const CubatureGrid& g) {
  if (c.lmax() > g.lmax)
    throw std::invalid_argument("sht_synthesize: coeffs.lmax > grid.lmax");
  const int lmax = c.lmax(), nt = g.n_theta, np = g.n_phi;
  std::vector<double> out(g.size(), 0.0);
  std::vector<double> col(lmax + 1);
  std::vector<std::complex<double>> gm(lmax + 1);
  for (int i = 0; i < nt; ++i) {
    const double th = g.ring_theta[i];
    const double ct = std::cos(th), st = std::sin(th);
    for (int m = 0; m <= lmax; ++m) {
      detail::alf_column(m, lmax, ct, st, col.data());
      std::complex<double> acc{0.0, 0.0};
      for (int l = m; l <= lmax; ++l) acc += c.at(l, m) * col[l - m];
      gm[m] = acc;
    }
    double* f = out.data() + std::size_t(i) * np;
    for (int q = 0; q < np; ++q) {
      const std::complex<double> w = std::polar(1.0, 2.0 * kPi * q / np);
      std::complex<double> ph = w;
      double v = gm[0].real();
      for (int m = 1; m <= lmax; ++m) {
        v += 2.0 * (gm[m] * ph).real();
        ph *= w;
      }
      f[q] = v;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wigner 3j and Gaunt coefficients

namespace detail {

inline const std::vector<long double>& log_factorials() {
  static const std::vector<long double> table = [] {
    std::vector<long double> t(4 * kMaxWignerL + 3, 0.0L);
    for (std::size_t n = 2; n < t.size(); ++n)
      t[n] = t[n - 1] + std::log(static_cast<long double>(n));
    return t;
  }();
  return table;
}

inline long double lf(int n) { return log_factorials()[n]; }

}  // namespace detail

// Racah single-sum evaluation in log space; selection-rule failures return 0.
inline double wigner_3j(int l1, int l2, int l3, int m1, int m2, int m3) {
  if (l1 < 0 || l2 < 0 || l3 < 0)
    throw std::invalid_argument("wigner_3j: negative l");
  if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(m3) > l3)
    throw std::invalid_argument("wigner_3j: |m| > l");
  if (l1 > kMaxWignerL || l2 > kMaxWignerL || l3 > kMaxWignerL)
    throw capacity_error("wigner_3j: l exceeds supported maximum");
  if (m1 + m2 + m3 != 0) return 0.0;
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2) return 0.0;
  using detail::lf;
  const long double log_delta = lf(l1 + l2 - l3) + lf(l1 - l2 + l3) +
                                lf(-l1 + l2 + l3) - lf(l1 + l2 + l3 + 1);
  if (m1 == 0 && m2 == 0 && m3 == 0) {
    if ((l1 + l2 + l3) % 2 != 0) return 0.0;
    const int J = (l1 + l2 + l3) / 2;
    const long double lg =
        0.5L * log_delta + lf(J) - lf(J - l1) - lf(J - l2) - lf(J - l3);
    const double v = double(std::exp(lg));
    return (J % 2 ? -v : v);
  }
  const int tmin = std::max({0, l2 - l3 - m1, l1 - l3 + m2});
  const int tmax = std::min({l1 + l2 - l3, l1 - m1, l2 + m2});
  if (tmin > tmax) return 0.0;
  const long double log_pref =
      0.5L * (log_delta + lf(l1 + m1) + lf(l1 - m1) + lf(l2 + m2) +
              lf(l2 - m2) + lf(l3 + m3) + lf(l3 - m3));
  std::vector<long double> lt(tmax - tmin + 1);
  long double lt_max = -1e30L;
  for (int t = tmin; t <= tmax; ++t) {
    lt[t - tmin] = log_pref - lf(t) - lf(l1 + l2 - l3 - t) -
                   lf(l1 - m1 - t) - lf(l2 + m2 - t) - lf(l3 - l2 + m1 + t) -
                   lf(l3 - l1 - m2 + t);
    lt_max = std::max(lt_max, lt[t - tmin]);
  }
  long double sum = 0.0L;
  for (int t = tmin; t <= tmax; ++t) {
    const long double term = std::exp(lt[t - tmin] - lt_max);
    sum += (t % 2 ? -term : term);
  }
  const int phase = l1 - l2 - m3;
  const double v = double(sum * std::exp(lt_max));
  return (((phase % 2) + 2) % 2 ? -v : v);
}

// Integral of Y_{l1 m1} Y_{l2 m2} Y_{l3 m3} over the sphere.
inline double gaunt(int l1, int l2, int l3, int m1, int m2, int m3) {
  const double w0 = wigner_3j(l1, l2, l3, 0, 0, 0);
  if (w0 == 0.0) return 0.0;
  const double wm = wigner_3j(l1, l2, l3, m1, m2, m3);
  return std::sqrt((2.0 * l1 + 1.0) * (2.0 * l2 + 1.0) * (2.0 * l3 + 1.0) /
                   kFourPi) *
         wm * w0;
}

// ---------------------------------------------------------------------------
// Coefficient file format: "# alm v1 lmax=<n>" then "l,m,re,im" for m >= 0.

inline void write_alm_csv(const HarmonicCoefficients& c, std::ostream& os) {
  os << "# alm v1 lmax=" << c.lmax() << "\n";
  char buf[128];
  for (int l = 0; l <= c.lmax(); ++l)
    for (int m = 0; m <= l; ++m) {
      const auto v = c.at(l, m);
      std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g\n", l, m, v.real(),
                    v.imag());
      os << buf;
    }
}

inline void write_alm_csv(const HarmonicCoefficients& c,
                          const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_alm_csv(c, os);
}

inline HarmonicCoefficients read_alm_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw parse_error("alm file: empty");
  int lmax = -1;
  if (std::sscanf(line.c_str(), "# alm v1 lmax=%d", &lmax) != 1 || lmax < 0)
    throw parse_error("alm file: bad header: " + line);
  HarmonicCoefficients c(lmax);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    int l = 0, m = 0;
    double re = 0.0, im = 0.0;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf", &l, &m, &re, &im) != 4)
      throw parse_error("alm file: bad record at line " +
                        std::to_string(lineno));
    if (l < 0 || l > lmax || m < 0 || m > l)
      throw parse_error("alm file: index out of range at line " +
                        std::to_string(lineno));
    if (m == 0 && std::abs(im) > 1e-9)
      throw parse_error("alm file: a_l0 must be real (line " +
                        std::to_string(lineno) + ")");
    c.at(l, m) = {re, im};
  }
  return c;
}

inline HarmonicCoefficients read_alm_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_alm_csv(is);
}

}  // namespace needlets
