#pragma once

#include "fbmsde/errors.hpp"
#include "fbmsde/fbm.hpp"
#include "fbmsde/increments.hpp"
#include "fbmsde/matrix.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <string_view>
#include <vector>

namespace fbmsde {

enum class AreaMethod { product, linear_interp, fine_reference };

constexpr std::string_view to_string(AreaMethod m) {
    switch (m) {
    case AreaMethod::product: return "product";
    case AreaMethod::linear_interp: return "linear_interp";
    case AreaMethod::fine_reference: return "fine_reference";
    }
    return "?";
}

// Per-cell m x m iterated-integral matrices A_k ≈ ∫∫_{t_k<v<u<t_{k+1}} dB^i_v dB^j_u.
struct LevyAreaGrid {
    UniformGrid grid;
    std::size_t dims = 0;
    AreaMethod method = AreaMethod::product;
    std::vector<Matrix> areas;  // one per cell, size grid.n
};

namespace detail {

inline Matrix half_outer(std::span<const double> d) {
    Matrix a = outer(d, d);
    a *= 0.5;
    return a;
}

// Index of `grid` node k inside `path`, which must refine `grid`.
inline std::size_t refinement_factor(const FbmPath& path, const UniformGrid& grid) {
    require(path.horizon() == grid.horizon, "path and area grid must share the horizon");
    require(grid.n >= 1 && path.n_steps() % grid.n == 0, "path grid must refine the area grid");
    return path.n_steps() / grid.n;
}

// Chen composition of cell areas over nodes [first, last] of the path.
//   A_{first,last} = Σ_k ( A_k + (B_{t_k} − B_{t_first}) ⊗ δB_k )
template <class CellArea>
Matrix chen_compose(const FbmPath& path, std::size_t factor, std::size_t first, std::size_t last, CellArea&& cell) {
    const std::size_t m = path.dims();
    Matrix acc(m, m);
    std::vector<double> offset(m, 0.0);
    for (std::size_t k = first; k < last; ++k) {
        const auto lo = path.node(k * factor);
        const auto hi = path.node((k + 1) * factor);
        acc += cell(k);
        for (std::size_t i = 0; i < m; ++i) {
            const double oi = offset[i];
            for (std::size_t j = 0; j < m; ++j) acc(i, j) += oi * (hi[j] - lo[j]);
        }
        for (std::size_t i = 0; i < m; ++i) offset[i] += hi[i] - lo[i];
    }
    return acc;
}

} // namespace detail

// ½ δB ⊗ δB on every cell of the path's own grid.
inline LevyAreaGrid area_product(const FbmPath& path) {
    LevyAreaGrid out{UniformGrid{path.horizon(), path.n_steps()}, path.dims(), AreaMethod::product, {}};
    out.areas.reserve(path.n_steps());
    for (std::size_t k = 0; k < path.n_steps(); ++k) out.areas.push_back(detail::half_outer(path.increment(k)));
    return out;
}

// Exact areas of the interpolant on the grid of mesh coarse_factor * T/n. Over one
// linear cell the area is ½ δB ⊗ δB; longer intervals compose by Chen.
inline LevyAreaGrid area_linear_interpolant(const FbmPath& fine, std::size_t coarse_factor) {
    const FbmPath coarse = subsample(fine, coarse_factor);
    LevyAreaGrid out = area_product(coarse);
    out.method = AreaMethod::linear_interp;
    return out;
}

// For each coarse cell, the area of the fine interpolant restricted to it.
inline LevyAreaGrid area_fine_reference(const FbmPath& fine, std::size_t coarse_factor) {
    detail::require(coarse_factor >= 1 && fine.n_steps() % coarse_factor == 0,
                    "coarse_factor must divide n_steps");
    const std::size_t n_coarse = fine.n_steps() / coarse_factor;
    LevyAreaGrid out{UniformGrid{fine.horizon(), n_coarse}, fine.dims(), AreaMethod::fine_reference, {}};
    out.areas.reserve(n_coarse);
    auto fine_cell = [&](std::size_t k) { return detail::half_outer(fine.increment(k)); };
    for (std::size_t k = 0; k < n_coarse; ++k)
        out.areas.push_back(detail::chen_compose(fine, 1, k * coarse_factor, (k + 1) * coarse_factor, fine_cell));
    return out;
}

// Area over area-grid nodes [i, j]. Product areas are the approximation
// ½ δB_{ij} ⊗ δB_{ij} applied to the whole interval; genuine interpolant areas
// are composed from their cells with the Chen relation.
inline Matrix area_over(const LevyAreaGrid& area, const FbmPath& path, std::size_t i, std::size_t j) {
    if (i > j || j > area.grid.n) throw DomainError("area indices must satisfy i <= j <= n");
    detail::require(path.dims() == area.dims, "path and area dimensions differ");
    const std::size_t factor = detail::refinement_factor(path, area.grid);
    if (area.method == AreaMethod::product)
        return detail::half_outer(path.increment(i * factor, j * factor));
    return detail::chen_compose(path, factor, i, j, [&](std::size_t k) -> const Matrix& { return area.areas[k]; });
}

// (δA)_{iuj} − δB_{iu} ⊗ δB_{uj}; zero for areas that satisfy Chen's relation.
inline Matrix chen_defect(const LevyAreaGrid& area, const FbmPath& path, std::size_t i, std::size_t u, std::size_t j) {
    if (!(i <= u && u <= j) || j > area.grid.n) throw DomainError("chen_defect requires i <= u <= j <= n");
    const std::size_t factor = detail::refinement_factor(path, area.grid);
    Matrix defect = area_over(area, path, i, j);
    defect -= area_over(area, path, i, u);
    defect -= area_over(area, path, u, j);
    defect -= outer(path.increment(i * factor, u * factor), path.increment(u * factor, j * factor));
    return defect;
}

// Columns k, i, j, value with 1-based component indices.
inline void write_area_csv(std::ostream& os, const LevyAreaGrid& area) {
    os << "k,i,j,value\n" << std::setprecision(17);
    for (std::size_t k = 0; k < area.areas.size(); ++k)
        for (std::size_t i = 0; i < area.dims; ++i)
            for (std::size_t j = 0; j < area.dims; ++j)
                os << k << ',' << (i + 1) << ',' << (j + 1) << ',' << area.areas[k](i, j) << '\n';
}

// ---------------------------------------------------------------------------
// Gauss–Legendre nodes and weights on [0, 1].

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline QuadratureRule gauss_legendre_unit(std::size_t order) {
    detail::require(order >= 1, "quadrature order must be at least 1");
    QuadratureRule rule{std::vector<double>(order), std::vector<double>(order)};
    const auto n = static_cast<double>(order);
    for (std::size_t r = 0; r < (order + 1) / 2; ++r) {
        // Newton on P_n starting from the Chebyshev-like guess.
        double x = std::cos(std::numbers::pi * (static_cast<double>(r) + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (std::size_t k = 2; k <= order; ++k) {
                const double kk = static_cast<double>(k);
                const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::fabs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[r] = 0.5 * (1.0 - x);
        rule.nodes[order - 1 - r] = 0.5 * (1.0 + x);
        rule.weights[r] = 0.5 * w;
        rule.weights[order - 1 - r] = 0.5 * w;
    }
    return rule;
}

struct CovarianceQuadrature {
    double value = 0.0;
    std::size_t order = 0;        // points per axis of the accepted rule
    double relative_change = 0.0; // against the previous (half-order) rule
    bool converged = false;
};

namespace detail {

inline double area_covariance_rule(double s1, double t1, double s2, double t2, double hurst, const QuadratureRule& q) {
    const double expo = 2.0 * hurst - 2.0;
    const std::size_t n = q.nodes.size();
    // Pre-map (u, v) nodes on each triangle {s <= v <= u <= t}.
    struct Point { double u, v, w; };
    auto triangle = [&](double s, double t) {
        std::vector<Point> pts;
        pts.reserve(n * n);
        for (std::size_t a = 0; a < n; ++a) {
            const double u = s + (t - s) * q.nodes[a];
            for (std::size_t c = 0; c < n; ++c) {
                const double v = s + (u - s) * q.nodes[c];
                pts.push_back({u, v, q.weights[a] * q.weights[c] * (t - s) * (u - s)});
            }
        }
        return pts;
    };
    const auto first = triangle(s1, t1);
    const auto second = triangle(s2, t2);
    double total = 0.0;
    for (const Point& p : first) {
        double inner = 0.0;
        for (const Point& r : second)
            inner += r.w * std::pow(std::fabs(p.u - r.u), expo) * std::pow(std::fabs(p.v - r.v), expo);
        total += p.w * inner;
    }
    const double pre = hurst * (2.0 * hurst - 1.0);
    return pre * pre * total;
}

} // namespace detail

// E[A_{s1t1}(i,j) A_{s2t2}(i,j)], i ≠ j, for H > 1/2 and ordered disjoint
// intervals, by tensorised Gauss–Legendre. The order is doubled from `order`
// until successive values agree to `rel_tol` or `max_order` is exceeded.
inline CovarianceQuadrature area_cross_covariance_quadrature(double s1, double t1, double s2, double t2, double hurst,
                                                             std::size_t order = 32, double rel_tol = 1e-8,
                                                             std::size_t max_order = 128) {
    if (!(hurst > 0.5 && hurst < 1.0))
        throw UnsupportedParameterError("area covariance kernel requires 1/2 < H < 1");
    if (!(0.0 <= s1 && s1 <= t1 && s2 <= t2)) throw DomainError("intervals must satisfy 0 <= s1 <= t1, s2 <= t2");
    if (t1 > s2) throw DomainError("intervals overlap: need t1 <= s2");
    detail::require(order >= 1, "quadrature order must be at least 1");

    CovarianceQuadrature result;
    double previous = detail::area_covariance_rule(s1, t1, s2, t2, hurst, gauss_legendre_unit(order));
    for (std::size_t next = 2 * order; next <= max_order; next *= 2) {
        const double value = detail::area_covariance_rule(s1, t1, s2, t2, hurst, gauss_legendre_unit(next));
        const double scale = std::fmax(std::fabs(value), std::numeric_limits<double>::min());
        result = {value, next, std::fabs(value - previous) / scale, false};
        if (result.relative_change < rel_tol) {
            result.converged = true;
            return result;
        }
        previous = value;
    }
    if (result.order == 0) result = {previous, order, 0.0, false};
    return result;
}

} // namespace fbmsde
