#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "psdid/pencil.hpp"

namespace psdid {

// Finite element pencils for -1/2 psi'' + 1/2 x^2 psi = E psi on [-L, L] with
// psi(-L) = psi(L) = 0. Exact eigenvalues (L -> infinity) are k - 1/2.

enum class Discretization { LinearFE, CubicFE, PUFE };

inline std::string_view to_string(Discretization d) {
  switch (d) {
  case Discretization::LinearFE: return "linear";
  case Discretization::CubicFE: return "cubic";
  case Discretization::PUFE: return "pufe";
  }
  return "?";
}

inline Discretization parse_discretization(std::string_view name) {
  if (name == "linear") return Discretization::LinearFE;
  if (name == "cubic") return Discretization::CubicFE;
  if (name == "pufe") return Discretization::PUFE;
  throw UsageError("unknown discretization '" + std::string(name) +
                   "' (expected linear, cubic or pufe)");
}

struct OscillatorSpec {
  Discretization discretization = Discretization::PUFE;
  int n_elem = 32;
  double half_width = 10.0;
  /// Enrichment exp(-decay x^2), cut to zero outside |x| <= support.
  double enrichment_decay = 0.4;
  double enrichment_support = 5.0;

  void validate() const {
    if (n_elem < 2)
      throw UsageError("oscillator: n_elem must be >= 2, got " + std::to_string(n_elem));
    if (!(half_width > 0.0) || !std::isfinite(half_width))
      throw UsageError("oscillator: half width L must be positive");
    if (!std::isfinite(enrichment_decay))
      throw UsageError("oscillator: enrichment decay must be finite");
    if (!(enrichment_support >= 0.0) || enrichment_support > half_width)
      throw UsageError("oscillator: enrichment support must lie in [0, L]");
  }

  double element_size() const { return 2.0 * half_width / n_elem; }
  double node(int k) const { return -half_width + k * element_size(); }
};

struct OscillatorMatrices {
  SparseSymMatrix h;
  SparseSymMatrix s;
  std::size_t polynomial_dofs = 0;
  std::size_t enrichment_dofs = 0;
};

namespace detail {

inline int polynomial_degree(Discretization d) {
  return d == Discretization::LinearFE ? 1 : 3;
}

/// Mesh nodes carrying an enrichment function, left to right.
inline std::vector<int> enriched_nodes(const OscillatorSpec &spec) {
  std::vector<int> nodes;
  if (spec.discretization != Discretization::PUFE)
    return nodes;
  const double slack = 1e-12 * spec.half_width;
  // boundary nodes carry no dof even when the support reaches them
  for (int k = 1; k < spec.n_elem; ++k)
    if (std::abs(spec.node(k)) <= spec.enrichment_support + slack)
      nodes.push_back(k);
  return nodes;
}

struct QuadratureRule {
  std::vector<double> points;
  std::vector<double> weights;
};

template <unsigned N>
QuadratureRule gauss_legendre() {
  using rule = boost::math::quadrature::gauss<double, N>;
  QuadratureRule q;
  const auto &a = rule::abscissa();
  const auto &w = rule::weights();
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] == 0.0) {
      q.points.push_back(0.0);
      q.weights.push_back(w[k]);
    } else {
      q.points.push_back(-a[k]);
      q.weights.push_back(w[k]);
      q.points.push_back(a[k]);
      q.weights.push_back(w[k]);
    }
  }
  return q;
}

/// Equispaced Lagrange basis on [-1, 1]: values and d/dxi at xi.
inline void lagrange(int degree, double xi, std::array<double, 4> &val,
                     std::array<double, 4> &der) {
  std::array<double, 4> nodes{};
  for (int a = 0; a <= degree; ++a)
    nodes[a] = -1.0 + 2.0 * a / degree;
  for (int a = 0; a <= degree; ++a) {
    double v = 1.0;
    double d = 0.0;
    for (int b = 0; b <= degree; ++b) {
      if (b == a)
        continue;
      const double den = nodes[a] - nodes[b];
      double term = 1.0 / den;
      for (int c = 0; c <= degree; ++c)
        if (c != a && c != b)
          term *= (xi - nodes[c]) / (nodes[a] - nodes[c]);
      d += term;
      v *= (xi - nodes[b]) / den;
    }
    val[a] = v;
    der[a] = d;
  }
}

} // namespace detail

/// Order of the assembled pencil: (deg * n_elem - 1) polynomial dofs plus one
/// enrichment dof per interior mesh node with |x| <= support (PUFE only).
inline std::size_t oscillator_dof_count(const OscillatorSpec &spec) {
  spec.validate();
  const int deg = detail::polynomial_degree(spec.discretization);
  return static_cast<std::size_t>(deg * spec.n_elem - 1) +
         detail::enriched_nodes(spec).size();
}

/// Galerkin matrices h_ij = 1/2 (phi_i', phi_j') + 1/2 (x^2 phi_i, phi_j),
/// s_ij = (phi_i, phi_j). Polynomial dofs come first, then enrichment dofs,
/// each ordered left to right.
inline OscillatorMatrices assemble_oscillator_matrices(const OscillatorSpec &spec) {
  spec.validate();
  const int deg = detail::polynomial_degree(spec.discretization);
  const int ne = spec.n_elem;
  const int n_poly_global = deg * ne + 1;
  const int n_poly = n_poly_global - 2;
  const std::vector<int> enr = detail::enriched_nodes(spec);
  std::vector<int> enr_index(static_cast<std::size_t>(ne + 1), -1);
  for (std::size_t k = 0; k < enr.size(); ++k)
    enr_index[static_cast<std::size_t>(enr[k])] = n_poly + static_cast<int>(k);
  const std::size_t n = static_cast<std::size_t>(n_poly) + enr.size();

  const auto rule6 = detail::gauss_legendre<6>();
  const auto rule16 = detail::gauss_legendre<16>();
  const double h = spec.element_size();
  const double jac = 0.5 * h;

  std::vector<Triplet> th, ts;
  struct Local {
    int dof;
    std::vector<double> val, der;
  };
  std::vector<Local> local;

  for (int e = 0; e < ne; ++e) {
    const bool enriched = enr_index[static_cast<std::size_t>(e)] >= 0 ||
                          enr_index[static_cast<std::size_t>(e + 1)] >= 0;
    const auto &q = enriched ? rule16 : rule6;
    const std::size_t nq = q.points.size();
    const double xa = spec.node(e);

    local.clear();
    for (int a = 0; a <= deg; ++a) {
      const int g = e * deg + a;
      if (g == 0 || g == n_poly_global - 1)
        continue;
      local.push_back({g - 1, std::vector<double>(nq), std::vector<double>(nq)});
    }
    for (int a = 0; a < 2; ++a) {
      const int idx = enr_index[static_cast<std::size_t>(e + a)];
      if (idx >= 0)
        local.push_back({idx, std::vector<double>(nq), std::vector<double>(nq)});
    }

    std::vector<double> xq(nq);
    for (std::size_t k = 0; k < nq; ++k) {
      const double xi = q.points[k];
      const double x = xa + (xi + 1.0) * jac;
      xq[k] = x;
      std::array<double, 4> val{}, der{};
      detail::lagrange(deg, xi, val, der);
      std::size_t slot = 0;
      for (int a = 0; a <= deg; ++a) {
        const int g = e * deg + a;
        if (g == 0 || g == n_poly_global - 1)
          continue;
        local[slot].val[k] = val[a];
        local[slot].der[k] = der[a] / jac;
        ++slot;
      }
      if (slot < local.size()) {
        const bool inside = std::abs(x) <= spec.enrichment_support;
        const double psi = inside ? std::exp(-spec.enrichment_decay * x * x) : 0.0;
        const double dpsi = -2.0 * spec.enrichment_decay * x * psi;
        const std::array<double, 2> hat{0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
        const std::array<double, 2> dhat{-1.0 / h, 1.0 / h};
        for (int a = 0; a < 2; ++a) {
          if (enr_index[static_cast<std::size_t>(e + a)] < 0)
            continue;
          local[slot].val[k] = hat[a] * psi;
          local[slot].der[k] = dhat[a] * psi + hat[a] * dpsi;
          ++slot;
        }
      }
    }

    for (std::size_t p = 0; p < local.size(); ++p) {
      for (std::size_t r = p; r < local.size(); ++r) {
        double kin = 0.0, pot = 0.0, mass = 0.0;
        for (std::size_t k = 0; k < nq; ++k) {
          const double w = q.weights[k] * jac;
          const double vv = local[p].val[k] * local[r].val[k];
          kin += w * local[p].der[k] * local[r].der[k];
          pot += w * xq[k] * xq[k] * vv;
          mass += w * vv;
        }
        const double hval = 0.5 * kin + 0.5 * pot;
        if (!std::isfinite(hval) || !std::isfinite(mass))
          throw NumericalError("oscillator: non-finite quadrature in element " +
                               std::to_string(e));
        const int a = local[p].dof;
        const int b = local[r].dof;
        th.emplace_back(a, b, hval);
        ts.emplace_back(a, b, mass);
        if (a != b) {
          th.emplace_back(b, a, hval);
          ts.emplace_back(b, a, mass);
        }
      }
    }
  }

  OscillatorMatrices out{SparseSymMatrix::from_triplets(n, th),
                         SparseSymMatrix::from_triplets(n, ts),
                         static_cast<std::size_t>(n_poly), enr.size()};
  return out;
}

inline Pencil assemble_oscillator(const OscillatorSpec &spec) {
  auto m = assemble_oscillator_matrices(spec);
  return Pencil(std::move(m.h), std::move(m.s));
}

} // namespace psdid
