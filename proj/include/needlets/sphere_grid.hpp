#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "needlets/errors.hpp"

#include <json.hpp>

namespace needlets {

inline constexpr double kPi = std::numbers::pi_v<double>;
inline constexpr double kFourPi = 4.0 * std::numbers::pi_v<double>;

// Largest polynomial exactness degree a grid may request.  Level j grids need
// degree floor(3*B^(j+1)); with B=2 this admits levels up to j=9.
inline constexpr int kMaxGridDegree = 3100;

struct SphericalPoint {
  double theta = 0.0;  // colatitude, [0, pi]
  double phi = 0.0;    // longitude, [0, 2*pi)
};

// Geodesic distance via atan2 of the cross/dot pair; stable near 0 and pi.
inline double geodesic_distance(const SphericalPoint& p,
                                const SphericalPoint& q) {
  const double st1 = std::sin(p.theta), ct1 = std::cos(p.theta);
  const double st2 = std::sin(q.theta), ct2 = std::cos(q.theta);
  const double dphi = p.phi - q.phi;
  const double cdp = std::cos(dphi), sdp = std::sin(dphi);
  const double dot = ct1 * ct2 + st1 * st2 * cdp;
  // |p x q|, expanded in spherical coordinates.
  const double cx = st2 * sdp;
  const double cy = st1 * ct2 - ct1 * st2 * cdp;
  const double cross = std::sqrt(cx * cx + cy * cy);
  return std::atan2(cross, dot);
}

namespace detail {

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
inline void gauss_legendre(int n, std::vector<double>& x,
                           std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Tricomi-style initial guess.
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int l = 0; l < n; ++l) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * l + 1.0) * z * p1 - l * p2) / (l + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    const double wi = 2.0 / ((1.0 - z * z) * pp * pp);
    w[i] = wi;
    w[n - 1 - i] = wi;
  }
}

}  // namespace detail

// Product cubature rule: Gauss-Legendre rings in cos(theta) times equally
// spaced longitudes.  Exact for spherical polynomials of degree <= lmax.
// Point ordering is frozen: ring index major (theta ascending), longitude
// index minor (phi ascending from 0).
struct CubatureGrid {
  double B = 0.0;  // provenance; 0 when the grid was built from a bare degree
  int j = -1;
  int lmax = 0;
  int n_theta = 0;
  int n_phi = 0;
  std::vector<double> ring_theta;   // size n_theta
  std::vector<double> ring_weight;  // per-point weight on that ring

  std::size_t size() const { return ring_theta.size() * std::size_t(n_phi); }
  int ring_of(std::size_t k) const { return int(k / std::size_t(n_phi)); }
  int slot_of(std::size_t k) const { return int(k % std::size_t(n_phi)); }
  double phi_of_slot(int q) const { return 2.0 * kPi * q / n_phi; }

  SphericalPoint point(std::size_t k) const {
    return {ring_theta[ring_of(k)], phi_of_slot(slot_of(k))};
  }
  double weight(std::size_t k) const { return ring_weight[ring_of(k)]; }
};

inline int grid_degree_for_level(double B, int j) {
  const double d = 3.0 * std::pow(B, j + 1);
  return int(std::floor(d));
}

// Point count of the level-j rule, without building it.
inline std::size_t grid_size_for_level(double B, int j) {
  const int deg = grid_degree_for_level(B, j);
  return std::size_t((deg + 2) / 2) * std::size_t(deg + 1);
}

// Rule exact on polynomials of degree <= degree.
inline CubatureGrid build_grid_for_degree(int degree) {
  if (degree < 0) throw std::invalid_argument("grid degree must be >= 0");
  if (degree > kMaxGridDegree)
    throw capacity_error("grid degree " + std::to_string(degree) +
                         " exceeds supported maximum " +
                         std::to_string(kMaxGridDegree));
  CubatureGrid g;
  g.lmax = degree;
  g.n_theta = (degree + 2) / 2;  // ceil((lmax+1)/2)
  g.n_phi = degree + 1;
  std::vector<double> x, w;
  detail::gauss_legendre(g.n_theta, x, w);
  g.ring_theta.resize(g.n_theta);
  g.ring_weight.resize(g.n_theta);
  // x ascending <-> theta descending; store theta ascending.
  for (int i = 0; i < g.n_theta; ++i) {
    g.ring_theta[i] = std::acos(x[g.n_theta - 1 - i]);
    g.ring_weight[i] = w[g.n_theta - 1 - i] * 2.0 * kPi / g.n_phi;
  }
  return g;
}

// Level-j grid: exact on degree floor(3*B^(j+1)).
inline CubatureGrid build_grid(double B, int j) {
  if (!(B > 1.0)) throw std::invalid_argument("band ratio B must be > 1");
  if (j < 0) throw std::invalid_argument("level j must be >= 0");
  CubatureGrid g = build_grid_for_degree(grid_degree_for_level(B, j));
  g.B = B;
  g.j = j;
  return g;
}

// Index of the grid point nearest to p; ties broken by smallest index.
// Rings are scanned outward from the latitude bracket, pruned by the fact
// that |theta - ring_theta| lower-bounds the geodesic distance.  Within a
// ring the distance is monotone in |delta phi|, so only the slots bracketing
// p.phi need checking.
inline std::size_t nearest_point(const CubatureGrid& g,
                                 const SphericalPoint& p) {
  const int nt = g.n_theta, np = g.n_phi;
  const double st = std::sin(p.theta), ct = std::cos(p.theta);
  int i0 = int(std::lower_bound(g.ring_theta.begin(), g.ring_theta.end(),
                                p.theta) -
               g.ring_theta.begin());
  double best = 4.0;  // > pi
  std::size_t best_k = 0;
  auto try_ring = [&](int i) {
    const double th = g.ring_theta[i];
    const double sr = std::sin(th), cr = std::cos(th);
    const int qc = int(std::floor(p.phi * np / (2.0 * kPi) + 0.5));
    for (int dq = -1; dq <= 1; ++dq) {
      const int q = ((qc + dq) % np + np) % np;
      const double dphi = p.phi - 2.0 * kPi * q / np;
      const double dot = ct * cr + st * sr * std::cos(dphi);
      const double d = std::acos(std::clamp(dot, -1.0, 1.0));
      const std::size_t k = std::size_t(i) * np + q;
      if (d < best - 1e-15 || (std::abs(d - best) <= 1e-15 && k < best_k)) {
        best = d;
        best_k = k;
      }
    }
  };
  int lo = i0 - 1, hi = i0;
  while (lo >= 0 || hi < nt) {
    bool advanced = false;
    if (hi < nt && g.ring_theta[hi] - p.theta < best + 1e-15) {
      try_ring(hi);
      ++hi;
      advanced = true;
    } else {
      hi = nt;
    }
    if (lo >= 0 && p.theta - g.ring_theta[lo] < best + 1e-15) {
      try_ring(lo);
      --lo;
      advanced = true;
    } else {
      lo = -1;
    }
    if (!advanced) break;
  }
  return best_k;
}

// Nearest-point parent assignment between a fine and a coarse level of the
// same family.  Nested tessellations are not assumed.
struct AssociationMap {
  int j_fine = -1;
  int j_coarse = -1;
  std::vector<std::int32_t> parent;       // fine index -> coarse index
  std::vector<std::int32_t> child_count;  // coarse index -> #assigned
};

inline AssociationMap associate_levels(const CubatureGrid& fine,
                                       const CubatureGrid& coarse) {
  if (fine.j < 0 || coarse.j < 0 || fine.B != coarse.B)
    throw std::invalid_argument("associate_levels requires two levels of one grid family");
  if (fine.j <= coarse.j)
    throw std::invalid_argument("associate_levels requires fine.j > coarse.j");
  AssociationMap m;
  m.j_fine = fine.j;
  m.j_coarse = coarse.j;
  m.parent.resize(fine.size());
  m.child_count.assign(coarse.size(), 0);
  for (std::size_t k = 0; k < fine.size(); ++k) {
    const std::size_t c = nearest_point(coarse, fine.point(k));
    m.parent[k] = std::int32_t(c);
    ++m.child_count[c];
  }
  return m;
}

struct GridDiagnostics {
  double mesh_norm = 0.0;       // covering radius against a dense probe set
  double separation = 0.0;      // min pairwise distance (pi for 1 point)
  double kappa_estimate = 0.0;  // mesh_norm * B^j
};

inline GridDiagnostics grid_diagnostics(const CubatureGrid& g) {
  if (g.size() == 0) throw std::invalid_argument("empty grid");
  GridDiagnostics d;
  // Probe set: a finer product net, offset half a cell in both directions.
  const int pt = 2 * g.n_theta + 1, pp = 2 * g.n_phi + 1;
  double mesh = 0.0;
  for (int i = 0; i < pt; ++i) {
    const double th = kPi * (i + 0.5) / pt;
    for (int q = 0; q < pp; ++q) {
      SphericalPoint p{th, 2.0 * kPi * (q + 0.3) / pp};
      const std::size_t k = nearest_point(g, p);
      mesh = std::max(mesh, geodesic_distance(p, g.point(k)));
    }
  }
  // Poles are not probe-ring centers; check them explicitly.
  for (double th : {0.0, kPi}) {
    SphericalPoint p{th, 0.0};
    mesh = std::max(mesh, geodesic_distance(p, g.point(nearest_point(g, p))));
  }
  d.mesh_norm = mesh;

  if (g.size() == 1) {
    d.separation = kPi;
  } else {
    double sep = 4.0;
    for (int i = 0; i < g.n_theta; ++i) {
      // Within-ring spacing.
      if (g.n_phi > 1) {
        const SphericalPoint a{g.ring_theta[i], 0.0};
        const SphericalPoint b{g.ring_theta[i], 2.0 * kPi / g.n_phi};
        sep = std::min(sep, geodesic_distance(a, b));
      }
      // Against the next few rings.
      for (int i2 = i + 1; i2 < std::min(g.n_theta, i + 3); ++i2) {
        const double gap = g.ring_theta[i2] - g.ring_theta[i];
        if (gap >= sep) break;
        for (int dq : {0, 1}) {
          const SphericalPoint a{g.ring_theta[i], 0.0};
          const SphericalPoint b{g.ring_theta[i2],
                                 g.phi_of_slot(dq) + 0.0};
          sep = std::min(sep, geodesic_distance(a, b));
        }
      }
    }
    d.separation = sep;
  }
  d.kappa_estimate =
      (g.j >= 0) ? d.mesh_norm * std::pow(g.B, g.j) : d.mesh_norm;
  return d;
}

// Grids are always rebuilt from this descriptor, never stored in full.
inline nlohmann::json grid_descriptor(const CubatureGrid& g) {
  return nlohmann::json{{"B", g.B},
                        {"j", g.j},
                        {"lmax", g.lmax},
                        {"n_theta", g.n_theta},
                        {"n_phi", g.n_phi}};
}

inline CubatureGrid grid_from_descriptor(const nlohmann::json& d) {
  CubatureGrid g;
  const double B = d.at("B").get<double>();
  const int j = d.at("j").get<int>();
  g = (j >= 0 && B > 1.0) ? build_grid(B, j)
                          : build_grid_for_degree(d.at("lmax").get<int>());
  if (d.contains("lmax") && d.at("lmax").get<int>() != g.lmax)
    throw parse_error("grid descriptor lmax mismatch");
  if (d.contains("n_theta") && d.at("n_theta").get<int>() != g.n_theta)
    throw parse_error("grid descriptor n_theta mismatch");
  if (d.contains("n_phi") && d.at("n_phi").get<int>() != g.n_phi)
    throw parse_error("grid descriptor n_phi mismatch");
  return g;
}

}  // namespace needlets
