#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "needlets/errors.hpp"

namespace needlets {

// Enumeration ceiling: (15)!! = 2,027,025 matchings.
inline constexpr int kMaxDiagramNodes = 16;

// A table of nodes arranged in rows; row j holds row_sizes[j] nodes.
struct DiagramTable {
  std::vector<int> row_sizes;

  int total_nodes() const {
    int n = 0;
    for (int r : row_sizes) n += r;
    return n;
  }
  // Row index of each node, nodes numbered row-major.
  std::vector<int> node_rows() const {
    std::vector<int> rows;
    for (int j = 0; j < int(row_sizes.size()); ++j)
      for (int i = 0; i < row_sizes[j]; ++i) rows.push_back(j);
    return rows;
  }
  void validate() const {
    if (row_sizes.empty())
      throw std::invalid_argument("diagram table: need at least one row");
    for (int r : row_sizes)
      if (r < 1) throw std::invalid_argument("diagram table: row size < 1");
    if (total_nodes() > kMaxDiagramNodes)
      throw capacity_error("diagram table exceeds " +
                           std::to_string(kMaxDiagramNodes) + " nodes");
  }
};

// A perfect matching of the table's nodes.
struct Diagram {
  std::vector<std::pair<int, int>> edges;  // node index pairs, first < second
};

struct DiagramClass {
  bool has_flat = false;   // some edge stays inside one row
  bool connected = false;  // rows cannot be split into two unlinked groups
  bool paired = false;     // rows couple two by two
};

namespace detail {

// Visit every perfect matching of n nodes (n even).  The matching is carried
// as partner[node]; fn is invoked with it complete.
inline void for_each_matching(int n,
                              const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> partner(n, -1);
  std::function<void(int)> rec = [&](int from) {
    int a = from;
    while (a < n && partner[a] >= 0) ++a;
    if (a == n) {
      fn(partner);
      return;
    }
    for (int b = a + 1; b < n; ++b) {
      if (partner[b] >= 0) continue;
      partner[a] = b;
      partner[b] = a;
      rec(a + 1);
      partner[a] = -1;
      partner[b] = -1;
    }
  };
  rec(0);
}

inline bool rows_connected(const std::vector<int>& partner,
                           const std::vector<int>& node_row, int p) {
  std::vector<int> comp(p);
  for (int i = 0; i < p; ++i) comp[i] = i;
  std::function<int(int)> find = [&](int x) {
    while (comp[x] != x) x = comp[x] = comp[comp[x]];
    return x;
  };
  for (int a = 0; a < int(partner.size()); ++a) {
    const int b = partner[a];
    if (b > a) {
      const int ra = find(node_row[a]), rb = find(node_row[b]);
      if (ra != rb) comp[ra] = rb;
    }
  }
  const int r0 = find(0);
  for (int r = 1; r < p; ++r)
    if (find(r) != r0) return false;
  return true;
}

inline bool has_flat_edge(const std::vector<int>& partner,
                          const std::vector<int>& node_row) {
  for (int a = 0; a < int(partner.size()); ++a)
    if (partner[a] > a && node_row[a] == node_row[partner[a]]) return true;
  return false;
}

inline bool rows_paired(const std::vector<int>& partner,
                        const std::vector<int>& node_row, int p) {
  // mate[r] = the single row r is allowed to link to.
  std::vector<int> mate(p, -1);
  for (int a = 0; a < int(partner.size()); ++a) {
    const int b = partner[a];
    if (b < a) continue;
    const int ra = node_row[a], rb = node_row[b];
    if (ra == rb) return false;
    if (mate[ra] == -1) mate[ra] = rb;
    else if (mate[ra] != rb) return false;
    if (mate[rb] == -1) mate[rb] = ra;
    else if (mate[rb] != ra) return false;
  }
  for (int r = 0; r < p; ++r)
    if (mate[r] == -1 || mate[mate[r]] != r || mate[r] == r) return false;
  return true;
}

// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi sweeps.
inline double min_eigenvalue_sym(std::vector<std::vector<double>> a) {
  const int n = int(a.size());
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    if (off < 1e-26) break;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (std::abs(a[i][j]) < 1e-15) continue;
        const double theta = 0.5 * (a[j][j] - a[i][i]) / a[i][j];
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < n; ++k) {
          const double aik = a[i][k], ajk = a[j][k];
          a[i][k] = c * aik - s * ajk;
          a[j][k] = s * aik + c * ajk;
        }
        for (int k = 0; k < n; ++k) {
          const double aki = a[k][i], akj = a[k][j];
          a[k][i] = c * aki - s * akj;
          a[k][j] = s * aki + c * akj;
        }
      }
  }
  double mn = a[0][0];
  for (int i = 1; i < n; ++i) mn = std::min(mn, a[i][i]);
  return mn;
}

inline void validate_covariance(const std::vector<std::vector<double>>& cov,
                                bool unit_diagonal) {
  const int p = int(cov.size());
  if (p == 0) throw std::invalid_argument("covariance: empty");
  for (const auto& row : cov)
    if (int(row.size()) != p)
      throw std::invalid_argument("covariance: not square");
  for (int i = 0; i < p; ++i) {
    if (unit_diagonal && std::abs(cov[i][i] - 1.0) > 1e-12)
      throw std::invalid_argument("covariance: diagonal must be 1");
    for (int j = i + 1; j < p; ++j)
      if (std::abs(cov[i][j] - cov[j][i]) > 1e-12)
        throw std::invalid_argument("covariance: not symmetric");
  }
  if (min_eigenvalue_sym(cov) < -1e-10)
    throw std::invalid_argument("covariance: not positive semidefinite");
}

}  // namespace detail

inline std::vector<Diagram> enumerate_diagrams(const DiagramTable& t) {
  t.validate();
  std::vector<Diagram> out;
  const int n = t.total_nodes();
  if (n % 2 != 0) return out;
  detail::for_each_matching(n, [&](const std::vector<int>& partner) {
    Diagram d;
    for (int a = 0; a < n; ++a)
      if (partner[a] > a) d.edges.emplace_back(a, partner[a]);
    out.push_back(std::move(d));
  });
  return out;
}

inline DiagramClass classify(const Diagram& d, const DiagramTable& t) {
  t.validate();
  const int n = t.total_nodes();
  const std::vector<int> rows = t.node_rows();
  std::vector<int> partner(n, -1);
  for (const auto& e : d.edges) {
    if (e.first < 0 || e.second < 0 || e.first >= n || e.second >= n ||
        e.first == e.second || partner[e.first] >= 0 || partner[e.second] >= 0)
      throw std::invalid_argument("diagram does not match table");
    partner[e.first] = e.second;
    partner[e.second] = e.first;
  }
  for (int a = 0; a < n; ++a)
    if (partner[a] < 0) throw std::invalid_argument("diagram not a perfect matching");
  DiagramClass c;
  const int p = int(t.row_sizes.size());
  c.has_flat = detail::has_flat_edge(partner, rows);
  c.connected = detail::rows_connected(partner, rows, p);
  c.paired = detail::rows_paired(partner, rows, p);
  return c;
}

// Probabilists' Hermite polynomial, by the three-term recurrence.
inline double hermite(int q, double u) {
  if (q < 0) throw std::invalid_argument("hermite: q must be >= 0");
  double h0 = 1.0, h1 = u;
  if (q == 0) return h0;
  for (int k = 1; k < q; ++k) {
    const double h2 = u * h1 - k * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

// E[prod_j H_{l_j}(z_j)] for a centered Gaussian vector with unit variances.
// The sum runs over matchings without flat edges: pairing two powers of the
// same variable contributes nothing for Hermite polynomials.
inline double hermite_product_moment(const DiagramTable& t,
                                     const std::vector<std::vector<double>>& cov) {
  t.validate();
  if (int(cov.size()) != int(t.row_sizes.size()))
    throw std::invalid_argument("covariance size != row count");
  detail::validate_covariance(cov, /*unit_diagonal=*/true);
  const int n = t.total_nodes();
  if (n % 2 != 0) return 0.0;
  const std::vector<int> rows = t.node_rows();
  double sum = 0.0;
  detail::for_each_matching(n, [&](const std::vector<int>& partner) {
    double prod = 1.0;
    for (int a = 0; a < n; ++a) {
      const int b = partner[a];
      if (b < a) continue;
      if (rows[a] == rows[b]) return;  // flat edge
      prod *= cov[rows[a]][rows[b]];
    }
    sum += prod;
  });
  return sum;
}

// Cum(H_{l_1}(z_1), ..., H_{l_p}(z_p)): the same sum restricted to diagrams
// whose row graph is connected.
inline double hermite_product_cumulant(const DiagramTable& t,
                                       const std::vector<std::vector<double>>& cov) {
  t.validate();
  if (int(cov.size()) != int(t.row_sizes.size()))
    throw std::invalid_argument("covariance size != row count");
  detail::validate_covariance(cov, /*unit_diagonal=*/true);
  const int n = t.total_nodes();
  if (n % 2 != 0) return 0.0;
  const std::vector<int> rows = t.node_rows();
  const int p = int(t.row_sizes.size());
  double sum = 0.0;
  detail::for_each_matching(n, [&](const std::vector<int>& partner) {
    for (int a = 0; a < n; ++a) {
      const int b = partner[a];
      if (b > a && rows[a] == rows[b]) return;
    }
    if (!detail::rows_connected(partner, rows, p)) return;
    double prod = 1.0;
    for (int a = 0; a < n; ++a) {
      const int b = partner[a];
      if (b > a) prod *= cov[rows[a]][rows[b]];
    }
    sum += prod;
  });
  return sum;
}

// Second table mode: each node carries its own variable id, and rows only
// group nodes into product factors.  E[prod_rows prod_nodes z_{var(node)}]
// is the plain Isserlis sum over all matchings; within-row edges connect
// distinct variables and carry their genuine covariance.
inline double gaussian_product_moment(const DiagramTable& t,
                                      const std::vector<int>& node_vars,
                                      const std::vector<std::vector<double>>& cov) {
  t.validate();
  const int n = t.total_nodes();
  if (int(node_vars.size()) != n)
    throw std::invalid_argument("node_vars size != node count");
  for (int v : node_vars)
    if (v < 0 || v >= int(cov.size()))
      throw std::invalid_argument("node variable id out of range");
  detail::validate_covariance(cov, /*unit_diagonal=*/false);
  if (n % 2 != 0) return 0.0;
  double sum = 0.0;
  detail::for_each_matching(n, [&](const std::vector<int>& partner) {
    double prod = 1.0;
    for (int a = 0; a < n; ++a) {
      const int b = partner[a];
      if (b > a) prod *= cov[node_vars[a]][node_vars[b]];
    }
    sum += prod;
  });
  return sum;
}

// Joint cumulant of the row products, same node-variable convention:
// the Isserlis sum restricted to row-connected matchings.
inline double gaussian_product_cumulant(const DiagramTable& t,
                                        const std::vector<int>& node_vars,
                                        const std::vector<std::vector<double>>& cov) {
  t.validate();
  const int n = t.total_nodes();
  if (int(node_vars.size()) != n)
    throw std::invalid_argument("node_vars size != node count");
  for (int v : node_vars)
    if (v < 0 || v >= int(cov.size()))
      throw std::invalid_argument("node variable id out of range");
  detail::validate_covariance(cov, /*unit_diagonal=*/false);
  if (n % 2 != 0) return 0.0;
  const std::vector<int> rows = t.node_rows();
  const int p = int(t.row_sizes.size());
  double sum = 0.0;
  detail::for_each_matching(n, [&](const std::vector<int>& partner) {
    if (!detail::rows_connected(partner, rows, p)) return;
    double prod = 1.0;
    for (int a = 0; a < n; ++a) {
      const int b = partner[a];
      if (b > a) prod *= cov[node_vars[a]][node_vars[b]];
    }
    sum += prod;
  });
  return sum;
}

}  // namespace needlets
