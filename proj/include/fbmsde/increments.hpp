#pragma once

#include "fbmsde/errors.hpp"
#include "fbmsde/fbm.hpp"
#include "fbmsde/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

namespace fbmsde {

// Uniform grid t_k = kT/n, k = 0..n.
struct UniformGrid {
    double horizon = 1.0;
    std::size_t n = 1;

    double step() const noexcept { return horizon / static_cast<double>(n); }
    double time(std::size_t k) const noexcept {
        return horizon * static_cast<double>(k) / static_cast<double>(n);
    }
    bool operator==(const UniformGrid&) const = default;
};

// A function of one time variable sampled on a uniform grid: (n+1) x l values.
class GridFunction1 {
public:
    GridFunction1(UniformGrid grid, Matrix values) : grid_(grid), values_(std::move(values)) {
        detail::require(grid_.horizon > 0.0 && grid_.n >= 1, "grid must have positive horizon and n >= 1");
        detail::require(values_.rows() == grid_.n + 1, "grid function needs n+1 rows");
    }

    static GridFunction1 from_path(const FbmPath& path) {
        return {UniformGrid{path.horizon(), path.n_steps()}, path.values()};
    }

    // Single column c of a path.
    static GridFunction1 from_path_column(const FbmPath& path, std::size_t c) {
        Matrix v(path.n_steps() + 1, 1);
        for (std::size_t k = 0; k <= path.n_steps(); ++k) v(k, 0) = path.values()(k, c);
        return {UniformGrid{path.horizon(), path.n_steps()}, std::move(v)};
    }

    const UniformGrid& grid() const noexcept { return grid_; }
    const Matrix& values() const noexcept { return values_; }
    std::size_t width() const noexcept { return values_.cols(); }

    friend GridFunction1 operator+(const GridFunction1& a, const GridFunction1& b) {
        detail::require(a.grid_ == b.grid_ && a.width() == b.width(), "grid functions must share grid and width");
        return {a.grid_, a.values_ + b.values_};
    }
    friend GridFunction1 operator-(const GridFunction1& a, const GridFunction1& b) {
        detail::require(a.grid_ == b.grid_ && a.width() == b.width(), "grid functions must share grid and width");
        return {a.grid_, a.values_ - b.values_};
    }

private:
    UniformGrid grid_;
    Matrix values_;
};

// A two-parameter increment h_{ij} on grid pairs i <= j, with h_{ii} = 0.
// Values are vectors of fixed width produced by an evaluator.
class GridIncrement2 {
public:
    using Evaluator = std::function<void(std::size_t i, std::size_t j, std::span<double> out)>;

    GridIncrement2(UniformGrid grid, std::size_t width, Evaluator eval)
        : grid_(grid), width_(width), eval_(std::move(eval)) {}

    const UniformGrid& grid() const noexcept { return grid_; }
    std::size_t width() const noexcept { return width_; }

    std::vector<double> operator()(std::size_t i, std::size_t j) const {
        if (i > j || j > grid_.n) throw DomainError("increment indices must satisfy i <= j <= n");
        std::vector<double> out(width_, 0.0);
        if (i != j) eval_(i, j, out);
        return out;
    }

private:
    UniformGrid grid_;
    std::size_t width_;
    Evaluator eval_;
};

// (δf)_{ij} = f_j − f_i
inline GridIncrement2 delta1(const GridFunction1& f) {
    auto values = std::make_shared<const Matrix>(f.values());
    return GridIncrement2(f.grid(), f.width(), [values](std::size_t i, std::size_t j, std::span<double> out) {
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = (*values)(j, c) - (*values)(i, c);
    });
}

// (δh)_{iuj} = h_{ij} − h_{iu} − h_{uj}
inline std::vector<double> delta2_evaluate(const GridIncrement2& h, std::size_t i, std::size_t u, std::size_t j) {
    if (!(i <= u && u <= j) || j > h.grid().n) throw DomainError("delta2 requires i <= u <= j <= n");
    std::vector<double> out = h(i, j);
    const auto a = h(i, u);
    const auto b = h(u, j);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] -= a[c] + b[c];
    return out;
}

namespace detail {

inline void check_stride(std::size_t stride) {
    require(stride >= 1, "stride must be at least 1");
}

// max over strided node pairs of |f_j − f_i| / (t_j − t_i)^gamma, exact.
//
// Short lags are scanned directly. Longer lags are handled block against
// block: the per-component ranges of two blocks bound every difference between
// them, and a block pair is only expanded when that bound, divided by the
// smallest lag it contains, can still beat the running maximum.
inline double holder_quotient_max(const UniformGrid& grid, const Matrix& values, double gamma, std::size_t stride) {
    const std::size_t count = grid.n / stride + 1;  // strided nodes g_0..g_{count-1}
    const std::size_t width = values.cols();
    const double hs = grid.step() * static_cast<double>(stride);
    auto at = [&](std::size_t a) { return values.row(a * stride); };
    auto quotient = [&](std::size_t a, std::size_t b) {
        return euclidean_distance(at(b), at(a)) / std::pow(hs * static_cast<double>(b - a), gamma);
    };

    constexpr std::size_t block = 64;
    const std::size_t direct_lags = std::min(count - 1, block);
    double best = 0.0;
    for (std::size_t lag = 1; lag <= direct_lags; ++lag) {
        const double denom = std::pow(hs * static_cast<double>(lag), gamma);
        for (std::size_t a = 0; a + lag < count; ++a)
            best = std::fmax(best, euclidean_distance(at(a + lag), at(a)) / denom);
    }
    if (direct_lags == count - 1) return best;

    // Per-block component ranges; block q covers strided nodes [q*block, (q+1)*block).
    const std::size_t nblocks = (count + block - 1) / block;
    std::vector<double> lo(nblocks * width), hi(nblocks * width);
    std::vector<double> global_lo(width), global_hi(width);
    for (std::size_t c = 0; c < width; ++c) global_lo[c] = global_hi[c] = at(0)[c];
    for (std::size_t q = 0; q < nblocks; ++q) {
        for (std::size_t c = 0; c < width; ++c) lo[q * width + c] = hi[q * width + c] = at(q * block)[c];
        for (std::size_t a = q * block; a < std::min(count, (q + 1) * block); ++a) {
            const auto v = at(a);
            for (std::size_t c = 0; c < width; ++c) {
                lo[q * width + c] = std::fmin(lo[q * width + c], v[c]);
                hi[q * width + c] = std::fmax(hi[q * width + c], v[c]);
            }
        }
        for (std::size_t c = 0; c < width; ++c) {
            global_lo[c] = std::fmin(global_lo[c], lo[q * width + c]);
            global_hi[c] = std::fmax(global_hi[c], hi[q * width + c]);
        }
    }
    double diam2 = 0.0;
    for (std::size_t c = 0; c < width; ++c) diam2 += (global_hi[c] - global_lo[c]) * (global_hi[c] - global_lo[c]);
    const double diam = std::sqrt(diam2);

    for (std::size_t sep = 1; sep < nblocks; ++sep) {
        // Smallest lag not yet covered between blocks `sep` apart.
        const std::size_t min_lag = std::max(block + 1, (sep - 1) * block + 1);
        const double min_denom = std::pow(hs * static_cast<double>(min_lag), gamma);
        if (diam / min_denom <= best) break;
        for (std::size_t qa = 0; qa + sep < nblocks; ++qa) {
            const std::size_t qb = qa + sep;
            double bound2 = 0.0;
            for (std::size_t c = 0; c < width; ++c) {
                const double span = std::fmax(hi[qb * width + c] - lo[qa * width + c], hi[qa * width + c] - lo[qb * width + c]);
                bound2 += span * span;
            }
            if (std::sqrt(bound2) / min_denom <= best) continue;
            const std::size_t a_end = std::min(count, (qa + 1) * block);
            const std::size_t b_begin = qb * block, b_end = std::min(count, (qb + 1) * block);
            for (std::size_t a = qa * block; a < a_end; ++a)
                for (std::size_t b = std::max(b_begin, a + block + 1); b < b_end; ++b)
                    best = std::fmax(best, quotient(a, b));
        }
    }
    return best;
}

} // namespace detail

// Discrete ‖f‖_{γ,∞,T}: sup_k |f_k| plus the largest Hölder quotient over node
// pairs whose indices are multiples of `stride`. stride = 1 gives the exact
// norm on the grid; larger strides give a lower bound.
inline double holder_norm_c1(const GridFunction1& f, double gamma, std::size_t stride = 1) {
    detail::require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
    detail::check_stride(stride);
    double sup = 0.0;
    for (std::size_t k = 0; k <= f.grid().n; ++k) sup = std::fmax(sup, euclidean_norm(f.values().row(k)));
    return sup + detail::holder_quotient_max(f.grid(), f.values(), gamma, stride);
}

// Hölder seminorm part only: max |f_j − f_i| / (t_j − t_i)^gamma.
inline double holder_seminorm_c1(const GridFunction1& f, double gamma, std::size_t stride = 1) {
    detail::require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
    detail::check_stride(stride);
    return detail::holder_quotient_max(f.grid(), f.values(), gamma, stride);
}

// ‖h‖_μ: max over strided pairs i < j of |h_{ij}| / (t_j − t_i)^mu. Brute force.
inline double holder_norm_c2(const GridIncrement2& h, double mu, std::size_t stride = 1) {
    detail::require(mu > 0.0 && std::isfinite(mu), "mu must be positive");
    detail::check_stride(stride);
    const std::size_t n = h.grid().n;
    const double step = h.grid().step();
    double best = 0.0;
    for (std::size_t i = 0; i <= n; i += stride) {
        for (std::size_t j = i + stride; j <= n; j += stride) {
            const double q = euclidean_norm(h(i, j)) / std::pow(step * static_cast<double>(j - i), mu);
            best = std::fmax(best, q);
        }
    }
    return best;
}

} // namespace fbmsde
