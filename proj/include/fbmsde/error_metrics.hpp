#pragma once

#include "fbmsde/errors.hpp"
#include "fbmsde/increments.hpp"
#include "fbmsde/matrix.hpp"
#include "fbmsde/schemes.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace fbmsde {

// A fine reference trajectory and a coarse approximation whose nodes are a
// subset of the reference nodes.
struct AlignedPair {
    const Trajectory& reference;
    const Trajectory& approx;
    double gamma = 0.5;

    std::size_t factor() const {
        detail::require(reference.grid.horizon == approx.grid.horizon, "trajectories must share the horizon");
        detail::require(approx.grid.n >= 1 && reference.grid.n % approx.grid.n == 0,
                        "approximation grid must be a subgrid of the reference grid");
        detail::require(reference.dim_state() == approx.dim_state(), "trajectories must share the state dimension");
        return reference.grid.n / approx.grid.n;
    }

    // Outside 1/3 < gamma < 1 the rough-path error bound does not apply.
    bool gamma_in_theory_band() const noexcept { return gamma > 1.0 / 3.0 && gamma < 1.0; }
};

// max_k |Y_{t_k} − Z_{t_k}| over the coarse nodes.
inline double sup_error_on_grid(const AlignedPair& pair) {
    const std::size_t f = pair.factor();
    double err = 0.0;
    for (std::size_t k = 0; k <= pair.approx.grid.n; ++k)
        err = std::fmax(err, euclidean_distance(pair.reference.node(k * f), pair.approx.node(k)));
    return err;
}

// Difference reference − approx on the reference grid, with the approximation
// extended piecewise linearly between its own nodes.
inline GridFunction1 aligned_difference(const AlignedPair& pair) {
    const std::size_t f = pair.factor();
    const std::size_t n = pair.reference.grid.n;
    const std::size_t d = pair.reference.dim_state();
    Matrix diff(n + 1, d);
    for (std::size_t q = 0; q <= n; ++q) {
        const std::size_t k = std::min(q / f, pair.approx.grid.n - 1);
        const double frac = static_cast<double>(q - k * f) / static_cast<double>(f);
        for (std::size_t p = 0; p < d; ++p) {
            const double lo = pair.approx.states(k, p);
            const double z = frac == 0.0 ? lo : lo + frac * (pair.approx.states(k + 1, p) - lo);
            diff(q, p) = pair.reference.states(q, p) - z;
        }
    }
    return {pair.reference.grid, std::move(diff)};
}

// Discrete ‖Y − Zⁿ‖_{γ,∞,T} on the reference grid.
inline double holder_error(const AlignedPair& pair, std::size_t stride = 1) {
    return holder_norm_c1(aligned_difference(pair), pair.gamma, stride);
}

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t used = 0;
    std::size_t dropped = 0;  // non-positive or non-finite errors
};

// Least-squares line through (log n, log e).
inline RateFit fit_loglog_rate(std::span<const double> resolutions, std::span<const double> errors) {
    detail::require(resolutions.size() == errors.size(), "resolutions and errors must have equal length");
    std::vector<double> xs, ys;
    RateFit fit;
    for (std::size_t k = 0; k < errors.size(); ++k) {
        if (resolutions[k] > 0.0 && errors[k] > 0.0 && std::isfinite(errors[k])) {
            xs.push_back(std::log(resolutions[k]));
            ys.push_back(std::log(errors[k]));
        } else {
            ++fit.dropped;
        }
    }
    fit.used = xs.size();
    detail::require(fit.used >= 3, "rate fit needs at least 3 positive errors");
    const double cnt = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) mx += xs[k], my += ys[k];
    mx /= cnt;
    my /= cnt;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    detail::require(sxx > 0.0, "rate fit needs at least two distinct resolutions");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

} // namespace fbmsde
