#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace needlets {

// Neumaier compensated accumulator; summation order is fixed by the caller,
// so folds are reproducible bit-for-bit.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = s_ + x;
    if (std::abs(s_) >= std::abs(x))
      c_ += (s_ - t) + x;
    else
      c_ += (x - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

inline double compensated_total(const std::vector<double>& v) {
  CompensatedSum s;
  for (double x : v) s.add(x);
  return s.value();
}

struct MomentSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double se_mean = 0.0;
  double se_skewness = 0.0;  // sqrt(6/n)
  double se_kurtosis = 0.0;  // sqrt(24/n)
};

inline MomentSummary summarize_moments(const std::vector<double>& v) {
  MomentSummary m;
  m.n = v.size();
  if (v.empty()) return m;
  const double n = double(v.size());
  CompensatedSum s;
  for (double x : v) s.add(x);
  m.mean = s.value() / n;
  CompensatedSum s2, s3, s4;
  for (double x : v) {
    const double d = x - m.mean;
    s2.add(d * d);
    s3.add(d * d * d);
    s4.add(d * d * d * d);
  }
  const double m2 = s2.value() / n;
  const double m3 = s3.value() / n;
  const double m4 = s4.value() / n;
  m.variance = (v.size() > 1) ? s2.value() / (n - 1.0) : 0.0;
  m.skewness = (m2 > 0.0) ? m3 / std::pow(m2, 1.5) : 0.0;
  m.excess_kurtosis = (m2 > 0.0) ? m4 / (m2 * m2) - 3.0 : 0.0;
  m.se_mean = std::sqrt(m.variance / n);
  m.se_skewness = std::sqrt(6.0 / n);
  m.se_kurtosis = std::sqrt(24.0 / n);
  return m;
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Kolmogorov tail Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-10) return 1.0;
  double s = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 101; ++k) {
    const double t = std::exp(-2.0 * k * k * lambda * lambda);
    s += sign * t;
    sign = -sign;
    if (t < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;  // D_n
  double p_value = 1.0;    // asymptotic, with the small-sample correction
};

// One-sample KS against the standard normal.
inline KsResult ks_test_normal(std::vector<double> v) {
  if (v.size() < 8) throw std::invalid_argument("ks_test_normal: too few samples");
  std::sort(v.begin(), v.end());
  const double n = double(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = normal_cdf(v[i]);
    d = std::max(d, std::abs(f - double(i) / n));
    d = std::max(d, std::abs(double(i + 1) / n - f));
  }
  KsResult r;
  r.statistic = d;
  const double sn = std::sqrt(n);
  r.p_value = kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
  return r;
}

// Two-sample KS.
inline KsResult ks_test_two_sample(std::vector<double> a,
                                   std::vector<double> b) {
  if (a.size() < 8 || b.size() < 8)
    throw std::invalid_argument("ks_test_two_sample: too few samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, k = 0;
  while (i < a.size() && k < b.size()) {
    const double x = std::min(a[i], b[k]);
    while (i < a.size() && a[i] <= x) ++i;
    while (k < b.size() && b[k] <= x) ++k;
    d = std::max(d, std::abs(double(i) / a.size() - double(k) / b.size()));
  }
  KsResult r;
  r.statistic = d;
  const double ne = double(a.size()) * double(b.size()) /
                    double(a.size() + b.size());
  const double sn = std::sqrt(ne);
  r.p_value = kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
  return r;
}

// Sample quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * (v.size() - 1);
  const std::size_t lo = std::size_t(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double w = pos - double(lo);
  return v[lo] * (1.0 - w) + v[lo + 1] * w;
}

inline double pearson_correlation(const std::vector<double>& x,
                                  const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("pearson_correlation: bad inputs");
  const auto mx = summarize_moments(x), my = summarize_moments(y);
  CompensatedSum s;
  for (std::size_t i = 0; i < x.size(); ++i)
    s.add((x[i] - mx.mean) * (y[i] - my.mean));
  const double cov = s.value() / (double(x.size()) - 1.0);
  const double denom = std::sqrt(mx.variance * my.variance);
  return denom > 0.0 ? cov / denom : 0.0;
}

// Least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x,
                       const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("ls_slope: bad inputs");
  const auto mx = summarize_moments(x), my = summarize_moments(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx.mean) * (x[i] - mx.mean);
    sxy += (x[i] - mx.mean) * (y[i] - my.mean);
  }
  if (sxx == 0.0) throw std::invalid_argument("ls_slope: degenerate x");
  return sxy / sxx;
}

}  // namespace needlets
