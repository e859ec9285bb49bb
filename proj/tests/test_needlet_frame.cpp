#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "needlets/field_model.hpp"
#include "needlets/needlet_frame.hpp"
#include "needlets/stats.hpp"

using namespace needlets;

namespace {
const NeedletWindow& window2() {
  static const NeedletWindow w = build_window(2.0, 1e-12);
  return w;
}
}  // namespace

TEST_CASE("window construction and support") {
  CHECK_THROWS_AS(build_window(1.0, 1e-12), std::invalid_argument);
  CHECK_THROWS_AS(build_window(2.0, 1e-3), std::invalid_argument);

  const auto& w = window2();
  CHECK(w.phi(0.0) == 1.0);
  CHECK(w.phi(0.5) == 1.0);
  CHECK(w.phi(1.0) == 0.0);
  CHECK(w.b(2.1) == 0.0);
  CHECK(w.b(0.25) == 0.0);
  CHECK(w.b(0.5) == 0.0);
  CHECK(w.b(2.0) == 0.0);
  // Monotone decrease of phi across the transition.
  double prev = 1.0;
  for (int i = 1; i <= 50; ++i) {
    const double x = 0.5 + 0.5 * i / 51.0;
    const double v = w.phi(x);
    CHECK(v <= prev + 1e-15);
    CHECK(v >= 0.0);
    prev = v;
  }
}

TEST_CASE("squared profile partition of unity", "[window]") {
  for (double B : {1.5, 2.0}) {
    auto w = build_window(B, 1e-12);
    for (int l = 1; l <= 200; ++l) {
      const int J = int(std::ceil(std::log(double(l)) / std::log(B))) + 2;
      double s = 0.0;
      for (int j = 0; j <= J; ++j) s += w.b_sq(l / std::pow(B, j));
      CHECK(std::abs(s - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("profile is nonnegative and continuous at the seams") {
  const auto& w = window2();
  // b vanishes smoothly at the support endpoints and peaks at 1.
  for (double x : {0.5 + 1e-12, 2.0 - 1e-12}) {
    CHECK(w.b_sq(x) >= 0.0);
    CHECK(w.b_sq(x) < 1e-5);
  }
  CHECK(w.b(1.0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("needlet_eval matches the direct double sum") {
  const auto& w = window2();
  auto g = build_grid(2.0, 0);  // band l in (1/2, 2): l = 1 only
  const std::size_t k = g.size() / 3;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ut(0.0, kPi), up(0.0, 2 * kPi);
  for (int it = 0; it < 20; ++it) {
    SphericalPoint x{ut(rng), up(rng)};
    // Direct evaluation: sqrt(lambda) sum_l b(l/B^j) sum_m Y_lm(xi) Y*_lm(x).
    std::complex<double> s{0.0, 0.0};
    for (int l = 1; l <= 1; ++l) {
      const double bl = w.b(l / 1.0);
      for (int m = -l; m <= l; ++m)
        s += bl * sph_harm(l, m, g.point(k)) * std::conj(sph_harm(l, m, x));
    }
    const double direct = std::sqrt(g.weight(k)) * s.real();
    CHECK(std::abs(s.imag()) < 1e-14);
    CHECK(needlet_eval(w, g, k, x) == Catch::Approx(direct).margin(1e-12));
  }
}

TEST_CASE("needlet peaks at its own center") {
  const auto& w = window2();
  auto g = build_grid(2.0, 2);
  const std::size_t k = g.size() / 2;
  const double at_center =
      std::abs(needlet_eval(w, g, k, g.point(k)));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ut(0.0, kPi), up(0.0, 2 * kPi);
  for (int it = 0; it < 1000; ++it) {
    SphericalPoint x{ut(rng), up(rng)};
    CHECK(std::abs(needlet_eval(w, g, k, x)) <= at_center + 1e-12);
  }
}

TEST_CASE("analysis of a single out-of-band mode vanishes") {
  const auto& w = window2();
  auto g = build_grid(2.0, 1);  // band (1, 4)
  HarmonicCoefficients a(8);
  a.at(5, 2) = {1.0, 0.5};  // l = 5 >= B^(j+1) = 4
  a.at(4, 1) = {0.3, -0.2};  // l = 4 has b(4/2) = b(2) = 0 as well
  auto nc = needlet_analyze(a, w, g);
  for (double b : nc.beta) CHECK(std::abs(b) < 1e-12);
}

TEST_CASE("analysis of one in-band m=0 mode gives the closed form") {
  const auto& w = window2();
  auto g = build_grid(2.0, 1);
  const int l0 = 2;
  HarmonicCoefficients a(4);
  a.at(l0, 0) = {1.0, 0.0};
  auto nc = needlet_analyze(a, w, g);
  const double bl = w.b(l0 / 2.0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double expect =
        std::sqrt(g.weight(k)) * bl * sph_harm(l0, 0, g.point(k)).real();
    CHECK(nc.beta[k] == Catch::Approx(expect).margin(1e-12));
  }
}

TEST_CASE("weighted zero sum holds for sampled fields", "[zero-sum]") {
  const auto& w = window2();
  auto spec = make_power_spectrum({0.0, 0.0, 0.0, 1.0}, 64);
  for (int j : {2, 3}) {
    auto g = build_grid(2.0, j);
    for (int rep = 0; rep < 5; ++rep) {
      auto a = sample_gaussian_alm(spec, 1000 + rep);
      auto nc = needlet_analyze(a, w, g);
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double t = nc.beta[k] * std::sqrt(g.weight(k));
        num += t;
        den += nc.beta[k] * nc.beta[k] * g.weight(k);
      }
      CHECK(std::abs(num) <= 1e-8 * std::sqrt(den));
    }
  }
}

TEST_CASE("harmonic-space analysis equals pixel-space quadrature") {
  const auto& w = window2();
  auto g = build_grid(2.0, 1);           // band (1,4), so products reach 4+4
  auto fine = build_grid_for_degree(24);  // exact for field*needlet products
  auto spec = make_power_spectrum({0.0, 0.0, 0.0, 1.0}, 4);
  auto a = sample_gaussian_alm(spec, 99);
  auto nc = needlet_analyze(a, w, g);
  auto field = sht_synthesize(a, fine);
  for (std::size_t k = 0; k < g.size(); k += 7) {
    double acc = 0.0;
    for (std::size_t q = 0; q < fine.size(); ++q)
      acc += fine.weight(q) * field[q] * needlet_eval(w, g, k, fine.point(q));
    CHECK(acc == Catch::Approx(nc.beta[k]).margin(1e-7));
  }
}

TEST_CASE("level variance closed forms") {
  const auto& w = window2();
  auto g = build_grid(2.0, 1);
  // Spectrum supported on a single multipole with b(l0/B^j) known.
  std::vector<double> cl(5, 0.0);
  const int l0 = 2;
  cl[l0] = 0.7;
  auto spec = make_tabulated_spectrum(cl);
  auto v = needlet_level_variance(spec, w, 1, g);
  const double bsq = w.b_sq(l0 / 2.0);
  for (std::size_t k = 0; k < g.size(); k += 11)
    CHECK(v.sigma_jk_sq[k] ==
          Catch::Approx(g.weight(k) * (2.0 * l0 + 1.0) / kFourPi * bsq * 0.7)
              .epsilon(1e-12));
  CHECK(v.sigma_j_sq ==
        Catch::Approx((2.0 * l0 + 1.0) * bsq * 0.7 / double(g.size()))
            .epsilon(1e-12));

  // A spectrum that vanishes in the band must raise.
  std::vector<double> dead(9, 0.0);
  dead[8] = 1.0;  // outside band (1,4)... but spectrum must cover B^(j+1)=4
  auto spec2 = make_tabulated_spectrum(dead);
  CHECK_THROWS_AS(needlet_level_variance(spec2, w, 1, g),
                  degenerate_variance_error);
}

TEST_CASE("empirical coefficient variance matches the model", "[mc]") {
  const auto& w = window2();
  const int j = 2;
  auto g = build_grid(2.0, j);
  auto spec = make_power_spectrum({0.0, 0.0, 0.0, 1.0}, 8);
  auto v = needlet_level_variance(spec, w, j, g);
  const int R = 2000;
  const std::size_t k_probe[] = {0, g.size() / 2, g.size() - 1};
  std::vector<std::vector<double>> draws(3);
  for (int r = 0; r < R; ++r) {
    auto a = sample_gaussian_alm(spec, derive_seed(42, r));
    auto nc = needlet_analyze(a, w, g);
    for (int i = 0; i < 3; ++i) draws[i].push_back(nc.beta[k_probe[i]]);
  }
  for (int i = 0; i < 3; ++i) {
    const auto m = summarize_moments(draws[i]);
    const double se = v.sigma_jk_sq[k_probe[i]] * std::sqrt(2.0 / (R - 1.0));
    CHECK(std::abs(m.variance - v.sigma_jk_sq[k_probe[i]]) <= 3.5 * se);
  }
}

TEST_CASE("coefficient correlation function") {
  const auto& w = window2();
  auto spec = make_power_spectrum({0.0, 0.0, 0.0, 1.0}, 200);
  CHECK(coefficient_correlation(spec, w, 3, 0.0) == Catch::Approx(1.0));
  for (double th : {0.1, 0.5, 1.0, 2.0}) {
    const double c = coefficient_correlation(spec, w, 3, th);
    CHECK(c <= 1.0 + 1e-12);
    CHECK(c >= -1.0 - 1e-12);
  }
  // Fixed separation decorrelates as the level grows.
  const double c4 = std::abs(coefficient_correlation(spec, w, 4, 0.3));
  const double c6 = std::abs(coefficient_correlation(spec, w, 6, 0.3));
  CHECK(c6 < c4);
}

TEST_CASE("correlation decay bound in the scaled distance", "[decay]") {
  // |corr| <= C/(1 + B^j theta)^2 on a grid out to pi/2, with C anchored at
  // theta = B^-j.  The kernel's first side lobes exceed the single-point
  // anchor by a measured factor of about 2.1, frozen here with margin 3.
  const auto& w = window2();
  auto spec = make_power_spectrum({0.0, 0.0, 0.0, 1.0}, 200);
  const int j = 5;
  const double bj = std::pow(2.0, j);
  const double c_fit = 3.0 *
                       std::abs(coefficient_correlation(spec, w, j, 1.0 / bj)) *
                       std::pow(1.0 + 1.0, 2.0);
  for (int i = 1; i <= 60; ++i) {
    const double th = (kPi / 2.0) * i / 60.0;
    const double bound = c_fit / std::pow(1.0 + bj * th, 2.0);
    CHECK(std::abs(coefficient_correlation(spec, w, j, th)) <= bound + 1e-9);
  }
}

TEST_CASE("plug-in variance estimate") {
  NeedletCoefficients nc;
  nc.beta = {2.0, 2.0, 2.0};
  CHECK(estimate_sigma(nc) == Catch::Approx(4.0));
  nc.beta = {0.0, 0.0};
  CHECK(estimate_sigma(nc) == 0.0);
  nc.beta.clear();
  CHECK_THROWS_AS(estimate_sigma(nc), std::invalid_argument);
}

TEST_CASE("empirical correlation at grid pairs matches the model", "[mc]") {
  const auto& w = window2();
  const int j = 2;
  auto g = build_grid(2.0, j);
  auto spec = make_power_spectrum({0.0, 0.0, 0.0, 1.0}, 8);
  const int R = 1500;
  std::mt19937_64 pick(3);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (int i = 0; i < 8; ++i)
    pairs.emplace_back(pick() % g.size(), pick() % g.size());
  std::vector<std::vector<double>> a_draws(pairs.size()), b_draws(pairs.size());
  for (int r = 0; r < R; ++r) {
    auto a = sample_gaussian_alm(spec, derive_seed(77, r));
    auto nc = needlet_analyze(a, w, g);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      a_draws[i].push_back(nc.beta[pairs[i].first]);
      b_draws[i].push_back(nc.beta[pairs[i].second]);
    }
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double th =
        geodesic_distance(g.point(pairs[i].first), g.point(pairs[i].second));
    const double model = coefficient_correlation(spec, w, j, th);
    const double emp = pearson_correlation(a_draws[i], b_draws[i]);
    // s.e. of a correlation estimate ~ (1 - rho^2)/sqrt(R).
    const double se = (1.0 - model * model) / std::sqrt(double(R));
    CHECK(std::abs(emp - model) <= 3.5 * se + 1e-3);
  }
}

TEST_CASE("per-point variance ratio stays inside the measured band") {
  // sigma_jk^2 / sigma_j^2 = lambda_k N / 4pi on this family: close to
  // pi/2 * sin(theta) across rings, small near the poles.  Measured band
  // over j = 2..5 (B = 2): [2e-4, 1.6]; frozen with margin.
  const auto& w = window2();
  auto spec = make_power_spectrum({0.0, 0.0, 0.0, 1.0}, 200);
  for (int j : {2, 3, 4}) {
    auto g = build_grid(2.0, j);
    auto v = needlet_level_variance(spec, w, j, g);
    double lo = 1e300, hi = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double r = v.sigma_jk_sq[k] / v.sigma_j_sq;
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    CHECK(hi < 2.0);
    CHECK(lo > 1e-5);
    CHECK(hi / lo < 5e4);
  }
}

TEST_CASE("needlet coefficient dump format") {
  const auto& w = window2();
  auto g = build_grid(2.0, 1);
  auto spec = make_power_spectrum({0.0, 0.0, 0.0, 1.0}, 4);
  auto nc = needlet_analyze(sample_gaussian_alm(spec, 5), w, g);
  std::stringstream ss;
  write_needlet_csv(nc, 2.0, spectrum_id(spec), ss);
  std::string line;
  std::getline(ss, line);
  CHECK(line.find("# needlet v1 B=2") == 0);
  CHECK(line.find("spectrum=invpoly") != std::string::npos);
  std::getline(ss, line);
  CHECK(line == "j,k,theta,phi,weight,beta");
  std::size_t rows = 0;
  while (std::getline(ss, line)) ++rows;
  CHECK(rows == g.size());
}

TEST_CASE("analysis rejects coefficients that stop below the band top") {
  const auto& w = window2();
  auto g = build_grid(2.0, 2);  // band top floor(B^3) = 8
  HarmonicCoefficients short_alm(7);
  CHECK_THROWS_AS(needlet_analyze(short_alm, w, g), std::invalid_argument);
  CHECK_THROWS_AS(
      needlet_level_variance(make_power_spectrum({0, 0, 0, 1}, 7), w, 2, g),
      std::invalid_argument);
}

TEST_CASE("fixed-separation correlation dies off with the level") {
  // Beyond the level where B^-j < theta0/4 the magnitude is non-increasing,
  // and it falls below 0.05 once B^j theta0 >= 30.
  const auto& w = window2();
  auto spec = make_power_spectrum({0.0, 0.0, 0.0, 1.0}, 260);
  const double theta0 = 0.3;
  double prev = 1e300;
  for (int j = 4; j <= 7; ++j) {
    const double c = std::abs(coefficient_correlation(spec, w, j, theta0));
    CHECK(c <= prev + 1e-12);
    if (std::pow(2.0, j) * theta0 >= 30.0) CHECK(c < 0.05);
    prev = c;
  }
}
