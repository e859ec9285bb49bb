#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "needlets/errors.hpp"

namespace needlets {

// Angular power spectrum C_l, 0 <= l <= lmax, with C_0 = 0.  Either an
// inverse-polynomial model C_l = 1 / sum_k d_k l^k or an explicit table.
struct PowerSpectrum {
  int lmax = 0;
  std::vector<double> cl;      // size lmax+1, cl[0] == 0
  std::vector<double> coeffs;  // d_0..d_p when model is inverse-polynomial
  double alpha = 0.0;          // decay exponent (p) for the model, else 0
  bool low_order_warning = false;  // set when p == 2

  double at(int l) const {
    if (l < 0 || l > lmax)
      throw std::invalid_argument("spectrum index out of range");
    return cl[l];
  }
};

inline PowerSpectrum make_power_spectrum(const std::vector<double>& d,
                                         int lmax) {
  if (d.size() < 3)
    throw std::invalid_argument(
        "make_power_spectrum: need polynomial degree p >= 2");
  if (lmax < 1) throw std::invalid_argument("make_power_spectrum: lmax < 1");
  PowerSpectrum s;
  s.lmax = lmax;
  s.coeffs = d;
  s.alpha = double(d.size() - 1);
  s.low_order_warning = (d.size() == 3);
  s.cl.assign(lmax + 1, 0.0);
  for (int l = 1; l <= lmax; ++l) {
    double denom = 0.0, lp = 1.0;
    for (double dk : d) {
      denom += dk * lp;
      lp *= l;
    }
    if (!(denom > 0.0))
      throw std::invalid_argument(
          "make_power_spectrum: nonpositive denominator at l=" +
          std::to_string(l));
    s.cl[l] = 1.0 / denom;
  }
  return s;
}

inline PowerSpectrum make_tabulated_spectrum(std::vector<double> cl) {
  if (cl.size() < 2)
    throw std::invalid_argument("tabulated spectrum needs lmax >= 1");
  PowerSpectrum s;
  s.lmax = int(cl.size()) - 1;
  s.cl = std::move(cl);
  s.cl[0] = 0.0;
  for (double c : s.cl)
    if (c < 0.0)
      throw std::invalid_argument("tabulated spectrum: negative C_l");
  return s;
}

inline std::string spectrum_id(const PowerSpectrum& s) {
  if (!s.coeffs.empty()) {
    std::string id = "invpoly";
    char buf[32];
    for (double d : s.coeffs) {
      std::snprintf(buf, sizeof buf, "_%g", d);
      id += buf;
    }
    return id;
  }
  return "table_lmax" + std::to_string(s.lmax);
}

// File format: "# spectrum v1 lmax=<n> model=<id>" then "l,C_l" lines.
inline void write_spectrum_csv(const PowerSpectrum& s, std::ostream& os) {
  os << "# spectrum v1 lmax=" << s.lmax << " model=" << spectrum_id(s) << "\n";
  char buf[64];
  for (int l = 0; l <= s.lmax; ++l) {
    std::snprintf(buf, sizeof buf, "%d,%.17g\n", l, s.cl[l]);
    os << buf;
  }
}

inline void write_spectrum_csv(const PowerSpectrum& s,
                               const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_spectrum_csv(s, os);
}

inline PowerSpectrum read_spectrum_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw parse_error("spectrum file: empty");
  int lmax = -1;
  if (std::sscanf(line.c_str(), "# spectrum v1 lmax=%d", &lmax) != 1 ||
      lmax < 1)
    throw parse_error("spectrum file: bad header: " + line);
  std::vector<double> cl(lmax + 1, 0.0);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    int l = 0;
    double c = 0.0;
    if (std::sscanf(line.c_str(), "%d,%lf", &l, &c) != 2 || l < 0 || l > lmax)
      throw parse_error("spectrum file: bad record at line " +
                        std::to_string(lineno));
    cl[l] = c;
  }
  return make_tabulated_spectrum(std::move(cl));
}

inline PowerSpectrum read_spectrum_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_spectrum_csv(is);
}

// Local-type non-Gaussian field description.
struct NonGaussianSpec {
  double f_nl = 0.0;
  PowerSpectrum base;
};

}  // namespace needlets
